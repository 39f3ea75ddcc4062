#include <catch_amalgamated.hpp>

#include <cmath>

#include "reid/dataset.hpp"
#include "reid/gradcheck.hpp"
#include "reid/losses.hpp"
#include "reid/rng.hpp"

using namespace reid;

namespace {

LossWeights<double> weights_from_counts(const std::vector<std::int64_t>& counts,
                                        double alpha = 0.0, double lambda = 0.0) {
    LossWeights<double> w;
    w.alpha = alpha;
    w.lambda = lambda;
    for (auto c : counts) w.identity_class_weights.push_back(c > 0 ? 1.0 / double(c) : 0.0);
    return w;
}

Tensor<double> random_matrix(std::int64_t n, std::int64_t k, Rng& rng, double scale = 1.0) {
    auto t = Tensor<double>::zeros({n, k});
    for (auto& v : t.data) v = rng.uniform(-scale, scale);
    return t;
}

} // namespace

// --- identity loss -----------------------------------------------------------

TEST_CASE("identity loss vanishes when the true class saturates", "[losses]") {
    auto logits = Tensor<double>::zeros({1, 3});
    logits(0, 0) = 200.0; // softmax -> 1 for class 0
    std::vector<std::int64_t> labels = {0};
    const auto w = weights_from_counts({4, 1, 1});
    REQUIRE(identity_loss(logits, labels, w) < 1e-12);
}

TEST_CASE("identity loss matches the hand-computed two-class case", "[losses]") {
    // K=2, counts {2,1}, uniform logits, labels (0,1):
    // ((1/2) ln2 + (1/1) ln2) / 2 = 0.75 ln2
    auto logits = Tensor<double>::zeros({2, 2});
    std::vector<std::int64_t> labels = {0, 1};
    const auto w = weights_from_counts({2, 1});
    const double loss = identity_loss(logits, labels, w);
    REQUIRE(std::abs(loss - 0.75 * std::log(2.0)) < 1e-9);
}

TEST_CASE("weight-1 single sample reduces to plain cross entropy", "[losses]") {
    Rng rng(3);
    auto logits = random_matrix(1, 4, rng, 2.0);
    std::vector<std::int64_t> labels = {2};
    const auto w = weights_from_counts({1, 1, 1, 1});
    // independent oracle: -log softmax
    double mx = logits(0, 0);
    for (std::int64_t j = 0; j < 4; ++j) mx = std::max(mx, logits(0, j));
    double z = 0;
    for (std::int64_t j = 0; j < 4; ++j) z += std::exp(logits(0, j) - mx);
    const double expected = -(logits(0, 2) - mx - std::log(z));
    REQUIRE(identity_loss(logits, labels, w) == Catch::Approx(expected).epsilon(1e-12));
}

TEST_CASE("identity loss is shift invariant", "[losses]") {
    Rng rng(17);
    for (int round = 0; round < 10; ++round) {
        auto logits = random_matrix(3, 5, rng, 3.0);
        std::vector<std::int64_t> labels = {0, 2, 4};
        const auto w = weights_from_counts({1, 2, 3, 4, 5});
        const double base = identity_loss(logits, labels, w);
        auto shifted = logits;
        const double c = rng.uniform(-10.0, 10.0);
        for (auto& v : shifted.data) v += c;
        REQUIRE(std::abs(identity_loss(shifted, labels, w) - base) < 1e-9);
    }
}

TEST_CASE("identity loss rejects bad labels and non-finite logits", "[losses]") {
    auto logits = Tensor<double>::zeros({1, 2});
    const auto w = weights_from_counts({1, 1});
    std::vector<std::int64_t> bad = {2};
    REQUIRE_THROWS_AS(identity_loss(logits, bad, w), Error);
    std::vector<std::int64_t> ok = {0};
    logits(0, 1) = std::numeric_limits<double>::infinity();
    REQUIRE_THROWS_AS(identity_loss(logits, ok, w), Error);
}

TEST_CASE("duplicating a class's images halves its weighted per-sample loss", "[losses]") {
    auto make_reg = [](int copies_of_class0) {
        std::vector<Sample> samples;
        for (int c = 0; c < copies_of_class0; ++c) {
            Sample s;
            s.image = Image::zeros(12, 12, 3);
            s.local_identity = 0;
            s.dataset_id = 0;
            s.sample_id = make_sample_id(0, c);
            samples.push_back(s);
        }
        Sample other;
        other.image = Image::zeros(12, 12, 3);
        other.local_identity = 1;
        other.dataset_id = 0;
        other.sample_id = make_sample_id(0, 100);
        samples.push_back(other);
        return DatasetRegistry::register_datasets(
            {{DatasetDescriptor{0, "a", 2, false, 1}, samples}});
    };
    const auto w1 = LossWeights<double>::from_registry(make_reg(2), AttributeSchema(), 0, 0);
    const auto w2 = LossWeights<double>::from_registry(make_reg(4), AttributeSchema(), 0, 0);
    REQUIRE(w2.identity_class_weights[0] == Catch::Approx(0.5 * w1.identity_class_weights[0]));

    Rng rng(5);
    auto logits = random_matrix(1, 2, rng);
    std::vector<std::int64_t> labels = {0};
    REQUIRE(identity_loss(logits, labels, w2) ==
            Catch::Approx(0.5 * identity_loss(logits, labels, w1)).epsilon(1e-12));
}

TEST_CASE("identity loss gradient matches finite differences", "[losses]") {
    Rng rng(23);
    for (int round = 0; round < 5; ++round) {
        auto logits = random_matrix(4, 3, rng, 2.0);
        std::vector<std::int64_t> labels = {0, 2, 1, 2};
        const auto w = weights_from_counts({3, 1, 2});
        Tensor<double> grad;
        identity_loss(logits, labels, w, &grad);
        auto f = [&]() { return identity_loss(logits, labels, w); };
        const double err = finite_difference_check<double>(
            f, std::span<double>(logits.data), std::span<const double>(grad.data), 1e-6);
        REQUIRE(err < 1e-4);
    }
}

// --- center loss -------------------------------------------------------------

TEST_CASE("center loss basics", "[losses]") {
    auto centers = Centers<double>::zeros(3, 2);
    centers.matrix(1, 0) = 1.0;
    auto feats = Tensor<double>::zeros({2, 2});
    feats(0, 0) = 1.0; // label 1 -> equals its center
    std::vector<std::int64_t> labels = {1, 0};
    REQUIRE(center_loss(feats, labels, centers) == 0.0);

    // one sample, x=(1,0), c=(0,0) -> 1
    auto one = Tensor<double>::zeros({1, 2});
    one(0, 0) = 1.0;
    std::vector<std::int64_t> l0 = {0};
    REQUIRE(center_loss(one, l0, centers) == 1.0);
}

TEST_CASE("center loss equals the brute-force elementwise sum", "[losses]") {
    Rng rng(31);
    for (int round = 0; round < 100; ++round) {
        const std::int64_t n = 1 + static_cast<std::int64_t>(rng.below(5));
        const std::int64_t d = 1 + static_cast<std::int64_t>(rng.below(6));
        const std::int64_t k = 1 + static_cast<std::int64_t>(rng.below(4));
        auto feats = random_matrix(n, d, rng, 2.0);
        Centers<double> centers;
        centers.matrix = random_matrix(k, d, rng, 2.0);
        std::vector<std::int64_t> labels;
        for (std::int64_t i = 0; i < n; ++i)
            labels.push_back(static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(k))));

        double oracle = 0.0;
        for (std::int64_t i = 0; i < n; ++i)
            for (std::int64_t j = 0; j < d; ++j) {
                const double diff = feats(i, j) - centers.matrix(labels[std::size_t(i)], j);
                oracle += diff * diff;
            }
        const double got = center_loss(feats, labels, centers);
        REQUIRE(std::abs(got - oracle) <= 1e-12 * std::max(1.0, std::abs(oracle)));
    }
}

TEST_CASE("center loss gradient matches finite differences", "[losses]") {
    Rng rng(37);
    auto feats = random_matrix(4, 8, rng, 2.0);
    Centers<double> centers;
    centers.matrix = random_matrix(3, 8, rng, 2.0);
    std::vector<std::int64_t> labels = {0, 1, 2, 1};
    Tensor<double> grad;
    center_loss(feats, labels, centers, &grad);
    auto f = [&]() { return center_loss(feats, labels, centers); };
    const double err = finite_difference_check<double>(
        f, std::span<double>(feats.data), std::span<const double>(grad.data), 1e-6);
    REQUIRE(err < 1e-6);
}

TEST_CASE("center loss rejects dimension mismatch", "[losses]") {
    auto centers = Centers<double>::zeros(2, 3);
    auto feats = Tensor<double>::zeros({1, 2});
    std::vector<std::int64_t> labels = {0};
    REQUIRE_THROWS_AS(center_loss(feats, labels, centers), Error);
}

// --- center updates ----------------------------------------------------------

TEST_CASE("center update moves only classes present in the batch", "[losses]") {
    auto centers = Centers<double>::zeros(3, 2);
    centers.matrix(2, 0) = 7.0;
    auto feats = Tensor<double>::zeros({1, 2});
    feats(0, 0) = 2.0;
    std::vector<std::int64_t> labels = {0};
    update_centers(centers, feats, labels, 0.9);
    // delta = (c - x) / (1 + 1) = (-1, 0); c <- c - 0.9 * delta = (0.9, 0)
    REQUIRE(centers.matrix(0, 0) == Catch::Approx(0.9).epsilon(1e-12));
    REQUIRE(centers.matrix(0, 1) == 0.0);
    REQUIRE(centers.matrix(2, 0) == 7.0); // untouched
}

TEST_CASE("center update rejects cs_alpha outside (0,1]", "[losses]") {
    auto centers = Centers<double>::zeros(1, 1);
    auto feats = Tensor<double>::zeros({1, 1});
    std::vector<std::int64_t> labels = {0};
    REQUIRE_THROWS_AS(update_centers(centers, feats, labels, 0.0), Error);
    REQUIRE_THROWS_AS(update_centers(centers, feats, labels, -0.5), Error);
    REQUIRE_THROWS_AS(update_centers(centers, feats, labels, 1.5), Error);
    update_centers(centers, feats, labels, 1.0); // boundary is allowed
}

TEST_CASE("centers are a fixed point when batch features equal them", "[losses]") {
    Rng rng(41);
    Centers<double> centers;
    centers.matrix = random_matrix(4, 3, rng);
    auto feats = Tensor<double>::zeros({2, 3});
    std::vector<std::int64_t> labels = {1, 1};
    for (std::int64_t j = 0; j < 3; ++j) {
        feats(0, j) = centers.matrix(1, j);
        feats(1, j) = centers.matrix(1, j);
    }
    const auto before = centers.matrix.data;
    update_centers(centers, feats, labels, 0.9);
    REQUIRE(centers.matrix.data == before);
}

// --- attribute losses --------------------------------------------------------

namespace {

AttributeSchema two_attr_schema() {
    return AttributeSchema({{"bin", AttributeKind::binary, 2},
                            {"cat", AttributeKind::categorical, 3}});
}

LossWeights<double> two_attr_weights(const std::vector<std::int64_t>& bin_counts,
                                     const std::vector<std::int64_t>& cat_counts) {
    LossWeights<double> w;
    w.attribute_class_weights.resize(2);
    for (auto c : bin_counts)
        w.attribute_class_weights[0].push_back(c > 0 ? 1.0 / double(c) : 0.0);
    for (auto c : cat_counts)
        w.attribute_class_weights[1].push_back(c > 0 ? 1.0 / double(c) : 0.0);
    return w;
}

} // namespace

TEST_CASE("attribute loss vanishes when all heads saturate correctly", "[losses]") {
    const auto schema = two_attr_schema();
    const auto w = two_attr_weights({1, 1}, {1, 1, 1});
    std::vector<std::vector<double>> logits = {{200.0}, {-100.0, 200.0, -100.0}};
    AttributeAnnotation ann{{1, 1}};
    REQUIRE(attribute_loss_sample(logits, ann, schema, w) < 1e-12);
}

TEST_CASE("uniform binary head with weight one costs ln 2", "[losses]") {
    const AttributeSchema schema({{"b", AttributeKind::binary, 2}});
    LossWeights<double> w;
    w.attribute_class_weights = {{1.0, 1.0}};
    std::vector<std::vector<double>> logits = {{0.0}};
    for (int t = 0; t <= 1; ++t) {
        AttributeAnnotation ann{{t}};
        REQUIRE(attribute_loss_sample(logits, ann, schema, w) ==
                Catch::Approx(std::log(2.0)).epsilon(1e-12));
    }
}

TEST_CASE("attribute loss equals the brute-force weighted NLL oracle", "[losses]") {
    // two attributes with counts {3,1} and {2,2,?}; uniform logits
    const auto schema = two_attr_schema();
    const auto w = two_attr_weights({3, 1}, {2, 2, 4});
    std::vector<std::vector<double>> logits = {{0.0}, {0.0, 0.0, 0.0}};
    AttributeAnnotation ann{{1, 0}};
    // oracle: binary true class 1 weight 1/1, sigmoid(0) = 1/2 -> ln 2
    //         categorical true class 0 weight 1/2, softmax uniform -> (1/2) ln 3
    const double expected = 1.0 * std::log(2.0) + 0.5 * std::log(3.0);
    REQUIRE(attribute_loss_sample(logits, ann, schema, w) ==
            Catch::Approx(expected).epsilon(1e-12));

    Rng rng(47);
    for (int round = 0; round < 50; ++round) {
        std::vector<std::vector<double>> z = {{rng.uniform(-3, 3)},
                                              {rng.uniform(-3, 3), rng.uniform(-3, 3),
                                               rng.uniform(-3, 3)}};
        AttributeAnnotation a{{static_cast<int>(rng.below(2)), static_cast<int>(rng.below(3))}};
        // independent oracle
        const double wb = w.attribute_class_weights[0][std::size_t(a.values[0])];
        const double p1 = 1.0 / (1.0 + std::exp(-z[0][0]));
        const double bin_nll = -(a.values[0] == 1 ? std::log(p1) : std::log(1.0 - p1));
        double mx = std::max({z[1][0], z[1][1], z[1][2]});
        double sum = 0;
        for (double v : z[1]) sum += std::exp(v - mx);
        const double cat_nll = -(z[1][std::size_t(a.values[1])] - mx - std::log(sum));
        const double wc = w.attribute_class_weights[1][std::size_t(a.values[1])];
        const double expect = wb * bin_nll + wc * cat_nll;
        REQUIRE(attribute_loss_sample(z, a, schema, w) ==
                Catch::Approx(expect).epsilon(1e-9));
    }
}

TEST_CASE("attribute loss rejects schema mismatches", "[losses]") {
    const auto schema = two_attr_schema();
    const auto w = two_attr_weights({1, 1}, {1, 1, 1});
    std::vector<std::vector<double>> short_heads = {{0.0}};
    AttributeAnnotation ann{{0, 0}};
    REQUIRE_THROWS_AS(attribute_loss_sample(short_heads, ann, schema, w), Error);
    std::vector<std::vector<double>> bad_width = {{0.0}, {0.0, 0.0}};
    REQUIRE_THROWS_AS(attribute_loss_sample(bad_width, ann, schema, w), Error);
    AttributeAnnotation bad_ann{{0}};
    std::vector<std::vector<double>> ok = {{0.0}, {0.0, 0.0, 0.0}};
    REQUIRE_THROWS_AS(attribute_loss_sample(ok, bad_ann, schema, w), Error);
}

TEST_CASE("attribute head gradients match finite differences", "[losses]") {
    const auto schema = two_attr_schema();
    const auto w = two_attr_weights({3, 2}, {1, 4, 2});
    Rng rng(53);
    for (int round = 0; round < 5; ++round) {
        std::vector<std::vector<double>> z = {{rng.uniform(-2, 2)},
                                              {rng.uniform(-2, 2), rng.uniform(-2, 2),
                                               rng.uniform(-2, 2)}};
        AttributeAnnotation a{{static_cast<int>(rng.below(2)), static_cast<int>(rng.below(3))}};
        std::vector<std::vector<double>> grads;
        attribute_loss_sample(z, a, schema, w, &grads);
        for (std::size_t head = 0; head < z.size(); ++head) {
            auto f = [&]() { return attribute_loss_sample(z, a, schema, w); };
            const double err = finite_difference_check<double>(
                f, std::span<double>(z[head]), std::span<const double>(grads[head]), 1e-6);
            REQUIRE(err < 1e-4);
        }
    }
}

// --- total loss --------------------------------------------------------------

namespace {

struct TotalFixture {
    AttributeSchema schema = two_attr_schema();
    Batch batch;
    ForwardOutput<double> out;
    Centers<double> centers;
    LossWeights<double> weights;

    TotalFixture(int n, int k, int d, std::uint64_t seed, int annotated_every = 3) {
        Rng rng(seed);
        batch.images = Tensor<float>::zeros({n, 1, 1, 1});
        for (int i = 0; i < n; ++i) {
            batch.global_identities.push_back(static_cast<std::int64_t>(rng.below(std::uint64_t(k))));
            const bool annotated = annotated_every > 0 && i % annotated_every == 0;
            batch.attribute_mask.push_back(annotated ? 1 : 0);
            if (annotated) {
                batch.attribute_labels.push_back(AttributeAnnotation{
                    {static_cast<int>(rng.below(2)), static_cast<int>(rng.below(3))}});
            } else {
                batch.attribute_labels.push_back(std::nullopt);
            }
        }
        out.identity_logits = random_matrix(n, k, rng, 2.0);
        out.signatures = random_matrix(n, d, rng, 1.5);
        out.attribute_logits.push_back(random_matrix(n, 1, rng, 2.0));
        out.attribute_logits.push_back(random_matrix(n, 3, rng, 2.0));
        centers.matrix = random_matrix(k, d, rng, 1.0);
        weights = weights_from_counts(std::vector<std::int64_t>(std::size_t(k), 2));
        weights.attribute_class_weights = two_attr_weights({3, 2}, {1, 4, 2}).attribute_class_weights;
        weights.alpha = 0.06;
        weights.lambda = 100.0;
    }

    std::vector<std::vector<double>> sample_logits(std::int64_t i) const {
        return {{out.attribute_logits[0](i, 0)},
                {out.attribute_logits[1](i, 0), out.attribute_logits[1](i, 1),
                 out.attribute_logits[1](i, 2)}};
    }
};

} // namespace

TEST_CASE("alpha=0 lambda=0 reduces the total to the identity loss", "[losses]") {
    TotalFixture fx(6, 4, 5, 61);
    fx.weights.alpha = 0.0;
    fx.weights.lambda = 0.0;
    const auto lb = total_loss(fx.out, fx.batch, fx.centers, fx.weights, fx.schema);
    REQUIRE(lb.total == lb.l_id);
    REQUIRE(lb.total ==
            identity_loss(fx.out.identity_logits, fx.batch.global_identities, fx.weights));
}

TEST_CASE("an all-zero mask leaves only identity and center terms", "[losses]") {
    TotalFixture fx(6, 4, 5, 67, /*annotated_every=*/0);
    const auto lb = total_loss(fx.out, fx.batch, fx.centers, fx.weights, fx.schema);
    REQUIRE(lb.l_att_total == 0.0);
    REQUIRE(lb.total == lb.l_id + fx.weights.alpha * lb.l_cs);
}

TEST_CASE("a 9-sample batch with 3 annotated sums exactly those 3 attribute losses", "[losses]") {
    TotalFixture fx(9, 5, 4, 71, /*annotated_every=*/3); // samples 0, 3, 6 annotated
    const auto lb = total_loss(fx.out, fx.batch, fx.centers, fx.weights, fx.schema);
    double expected = 0.0;
    int annotated = 0;
    for (std::int64_t i = 0; i < 9; ++i) {
        if (!fx.batch.attribute_mask[std::size_t(i)]) continue;
        expected += attribute_loss_sample(fx.sample_logits(i), *fx.batch.attribute_labels[std::size_t(i)],
                                          fx.schema, fx.weights);
        ++annotated;
    }
    REQUIRE(annotated == 3);
    REQUIRE(lb.l_att_total == expected); // same summation order, bit for bit
}

TEST_CASE("zeroing one sample's mask removes exactly its contribution", "[losses]") {
    TotalFixture fx(8, 4, 3, 73, /*annotated_every=*/2);
    const auto full = total_loss(fx.out, fx.batch, fx.centers, fx.weights, fx.schema);

    std::vector<std::int64_t> annotated;
    for (std::int64_t i = 0; i < 8; ++i)
        if (fx.batch.attribute_mask[std::size_t(i)]) annotated.push_back(i);

    for (const std::int64_t victim : annotated) {
        Batch masked = fx.batch;
        masked.attribute_mask[std::size_t(victim)] = 0;
        masked.attribute_labels[std::size_t(victim)] = std::nullopt;
        const auto lb = total_loss(fx.out, masked, fx.centers, fx.weights, fx.schema);

        // bit-for-bit: the masked sum equals the same index-ordered sum with
        // the victim's term dropped
        double expected = 0.0;
        for (const std::int64_t i : annotated) {
            if (i == victim) continue;
            expected += attribute_loss_sample(fx.sample_logits(i),
                                              *fx.batch.attribute_labels[std::size_t(i)], fx.schema,
                                              fx.weights);
        }
        REQUIRE(lb.l_att_total == expected);
        REQUIRE(lb.l_id == full.l_id);
        REQUIRE(lb.l_cs == full.l_cs);
    }

    // for the last annotated sample the removal identity is exact by
    // construction of the index-ordered sum
    const std::int64_t last = annotated.back();
    Batch masked = fx.batch;
    masked.attribute_mask[std::size_t(last)] = 0;
    masked.attribute_labels[std::size_t(last)] = std::nullopt;
    const auto lb = total_loss(fx.out, masked, fx.centers, fx.weights, fx.schema);
    const double last_term = attribute_loss_sample(
        fx.sample_logits(last), *fx.batch.attribute_labels[std::size_t(last)], fx.schema, fx.weights);
    REQUIRE(lb.l_att_total + last_term == full.l_att_total);
}

TEST_CASE("the breakdown recombines exactly and components are nonnegative", "[losses]") {
    for (std::uint64_t seed : {1ull, 2ull, 3ull, 4ull, 5ull}) {
        TotalFixture fx(7, 3, 4, 100 + seed);
        const auto lb = total_loss(fx.out, fx.batch, fx.centers, fx.weights, fx.schema);
        REQUIRE(lb.l_id >= 0.0);
        REQUIRE(lb.l_cs >= 0.0);
        REQUIRE(lb.l_att_total >= 0.0);
        for (double v : lb.l_att_per_attribute) REQUIRE(v >= 0.0);
        const double recombined = lb.l_id + fx.weights.alpha * lb.l_cs +
                                  fx.weights.lambda * lb.l_att_total;
        REQUIRE(std::abs(lb.total - recombined) <=
                1e-12 * std::max(1.0, std::abs(recombined)));
    }
}

TEST_CASE("total loss gradients match finite differences on every surface", "[losses]") {
    TotalFixture fx(5, 3, 4, 83);
    BatchGradients<double> bg;
    total_loss(fx.out, fx.batch, fx.centers, fx.weights, fx.schema, &bg);
    auto f = [&]() {
        return static_cast<double>(
            total_loss(fx.out, fx.batch, fx.centers, fx.weights, fx.schema).total);
    };
    const double e1 = finite_difference_check<double>(
        f, std::span<double>(fx.out.identity_logits.data),
        std::span<const double>(bg.d_identity_logits.data), 1e-6);
    REQUIRE(e1 < 1e-4);
    const double e2 = finite_difference_check<double>(
        f, std::span<double>(fx.out.signatures.data),
        std::span<const double>(bg.d_signatures.data), 1e-6);
    REQUIRE(e2 < 1e-4);
    for (std::size_t l = 0; l < fx.out.attribute_logits.size(); ++l) {
        const double e3 = finite_difference_check<double>(
            f, std::span<double>(fx.out.attribute_logits[l].data),
            std::span<const double>(bg.d_attribute_logits[l].data), 1e-6);
        REQUIRE(e3 < 1e-4);
    }
}

TEST_CASE("loss weights built from a registry carry reciprocal counts", "[losses]") {
    std::vector<Sample> samples;
    AttributeAnnotation a0{{0, 0, 0, 0, 0, 0, 0, 0, 0}};
    AttributeAnnotation a1{{1, 3, 2, 1, 0, 1, 0, 1, 0}};
    for (int i = 0; i < 3; ++i) {
        Sample s;
        s.image = Image::zeros(12, 12, 3);
        s.local_identity = 0;
        s.dataset_id = 0;
        s.sample_id = make_sample_id(0, i);
        s.attributes = i == 0 ? a1 : a0;
        samples.push_back(s);
    }
    auto reg = DatasetRegistry::register_datasets(
        {{DatasetDescriptor{0, "a", 2, true, 1}, samples}});
    const auto schema = AttributeSchema::standard();
    const auto w = LossWeights<double>::from_registry(reg, schema, 0.5, 2.0);
    REQUIRE(w.alpha == 0.5);
    REQUIRE(w.lambda == 2.0);
    REQUIRE(w.identity_class_weights[0] == Catch::Approx(1.0 / 3.0));
    REQUIRE(w.identity_class_weights[1] == 0.0); // zero-count class carries weight 0
    REQUIRE(w.attribute_class_weights[0][0] == Catch::Approx(1.0 / 2.0)); // gender 0 twice
    REQUIRE(w.attribute_class_weights[0][1] == Catch::Approx(1.0));
    REQUIRE(w.attribute_class_weights[1][3] == Catch::Approx(1.0)); // top color 3 once
    REQUIRE(w.attribute_class_weights[1][1] == 0.0);                // never seen
}
