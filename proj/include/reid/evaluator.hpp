#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "reid/dataset.hpp"
#include "reid/error.hpp"
#include "reid/losses.hpp"
#include "reid/matcher.hpp"
#include "reid/rng.hpp"
#include "reid/schema.hpp"

namespace reid {

// ---------------------------------------------------------------------------
// Identity splits
// ---------------------------------------------------------------------------

struct SplitProtocol {
    enum class Kind { half, fixed_test_count };
    Kind kind = Kind::half;
    int test_count = 0; // used by fixed_test_count

    static SplitProtocol half() { return {Kind::half, 0}; }
    static SplitProtocol fixed_test_count(int n) { return {Kind::fixed_test_count, n}; }
};

struct SplitSpec {
    std::string dataset;
    std::vector<int> train_identities; // local ids, sorted
    std::vector<int> test_identities;  // local ids, sorted
    std::uint64_t seed = 0;
};

/// Seeded uniform identity partition. The half protocol puts floor(d/2)
/// identities into the test set and the remainder into the training set.
inline SplitSpec make_split(const DatasetDescriptor& dataset, SplitProtocol protocol,
                            std::uint64_t seed) {
    const int d = dataset.num_identities;
    int test_n = 0;
    switch (protocol.kind) {
    case SplitProtocol::Kind::half:
        test_n = d / 2;
        break;
    case SplitProtocol::Kind::fixed_test_count:
        test_n = protocol.test_count;
        break;
    }
    if (test_n < 1 || test_n >= d)
        throw Error("make_split: dataset '" + dataset.name + "' has " + std::to_string(d) +
                    " identities, cannot reserve " + std::to_string(test_n) + " for testing");

    Rng rng(derive_seed(seed, {0x53504C49ull /*SPLI*/, static_cast<std::uint64_t>(dataset.dataset_id)}));
    std::vector<int> ids(static_cast<std::size_t>(d));
    for (int i = 0; i < d; ++i) ids[static_cast<std::size_t>(i)] = i;
    rng.shuffle(ids);

    SplitSpec spec;
    spec.dataset = dataset.name;
    spec.seed = seed;
    spec.test_identities.assign(ids.begin(), ids.begin() + test_n);
    spec.train_identities.assign(ids.begin() + test_n, ids.end());
    std::sort(spec.test_identities.begin(), spec.test_identities.end());
    std::sort(spec.train_identities.begin(), spec.train_identities.end());
    return spec;
}

// ---------------------------------------------------------------------------
// Probe / gallery trials
// ---------------------------------------------------------------------------

/// Single-shot cross-camera trial: every test identity contributes exactly
/// one probe image and one gallery image taken by a different camera.
struct ProbeGalleryTrial {
    std::vector<std::int64_t> probe_sample_ids;
    std::vector<std::int64_t> gallery_sample_ids;
    std::vector<std::int64_t> probe_true_identities; // parallel to probes
};

inline ProbeGalleryTrial make_trial(std::span<const Sample> test_samples, std::uint64_t seed) {
    // identity -> camera -> sample ids, ordered for determinism
    std::map<std::int64_t, std::map<int, std::vector<std::int64_t>>> by_identity;
    for (const Sample& s : test_samples) {
        by_identity[s.global_identity][s.camera_id].push_back(s.sample_id);
    }
    std::vector<std::int64_t> single_camera;
    for (const auto& [identity, cams] : by_identity) {
        if (cams.size() < 2) single_camera.push_back(identity);
    }
    if (!single_camera.empty()) {
        std::ostringstream os;
        os << "make_trial: identities seen by a single camera:";
        for (auto id : single_camera) os << ' ' << id;
        throw Error(os.str());
    }
    if (by_identity.empty()) throw Error("make_trial: no test samples");

    Rng rng(derive_seed(seed, {0x5452494Cull /*TRIL*/}));
    ProbeGalleryTrial trial;
    for (const auto& [identity, cams] : by_identity) {
        std::vector<int> cam_ids;
        for (const auto& [cam, _] : cams) cam_ids.push_back(cam);
        const std::size_t pi = static_cast<std::size_t>(rng.below(cam_ids.size()));
        std::size_t gi = static_cast<std::size_t>(rng.below(cam_ids.size() - 1));
        if (gi >= pi) ++gi; // gallery camera drawn from the remaining cameras
        const auto& probe_pool = cams.at(cam_ids[pi]);
        const auto& gallery_pool = cams.at(cam_ids[gi]);
        trial.probe_sample_ids.push_back(
            probe_pool[static_cast<std::size_t>(rng.below(probe_pool.size()))]);
        trial.gallery_sample_ids.push_back(
            gallery_pool[static_cast<std::size_t>(rng.below(gallery_pool.size()))]);
        trial.probe_true_identities.push_back(identity);
    }
    return trial;
}

// ---------------------------------------------------------------------------
// CMC
// ---------------------------------------------------------------------------

/// values[k] = probability that a probe's true match appears within the
/// top-(k+1) ranked gallery candidates, averaged over trials.
struct CMCCurve {
    std::vector<double> values;
    int trials = 0;

    double rank1() const { return values.empty() ? 0.0 : values.front(); }
};

inline CMCCurve cmc(const std::vector<ProbeGalleryTrial>& trials, const SignatureStore& store,
                    std::int64_t max_rank = 0) {
    if (trials.empty()) throw Error("cmc: no trials");
    std::unordered_map<std::int64_t, std::int64_t> row_of;
    for (std::int64_t i = 0; i < store.size(); ++i) row_of[store.sample_ids[static_cast<std::size_t>(i)]] = i;

    // Hit counts are pooled as integers and divided once at the end. Trials
    // carry one probe per test identity, so this equals the mean of the
    // per-trial fractions while keeping T identical trials exactly equal to
    // a single trial.
    std::vector<std::int64_t> hits;
    std::size_t probe_count = 0;
    for (const auto& trial : trials) {
        const auto gallery_n = static_cast<std::int64_t>(trial.gallery_sample_ids.size());
        std::int64_t curve_n = gallery_n;
        if (max_rank > 0) curve_n = std::min(curve_n, max_rank);
        if (hits.empty()) {
            hits.assign(static_cast<std::size_t>(curve_n), 0);
            probe_count = trial.probe_sample_ids.size();
        }
        if (static_cast<std::int64_t>(hits.size()) != curve_n)
            throw Error("cmc: trials have inconsistent gallery sizes");
        if (trial.probe_sample_ids.size() != probe_count)
            throw Error("cmc: trials have inconsistent probe counts");

        std::vector<std::int64_t> gallery_rows;
        for (auto sid : trial.gallery_sample_ids) {
            auto it = row_of.find(sid);
            if (it == row_of.end())
                throw Error("cmc: gallery sample " + std::to_string(sid) + " missing from store");
            gallery_rows.push_back(it->second);
        }
        SignatureStore gallery = store.subset(gallery_rows);
        std::unordered_map<std::int64_t, std::int64_t> identity_of_gallery_sample;
        for (std::size_t g = 0; g < gallery.sample_ids.size(); ++g)
            identity_of_gallery_sample[gallery.sample_ids[g]] = gallery.global_identities[g];

        for (std::size_t p = 0; p < probe_count; ++p) {
            auto it = row_of.find(trial.probe_sample_ids[p]);
            if (it == row_of.end())
                throw Error("cmc: probe sample " + std::to_string(trial.probe_sample_ids[p]) +
                            " missing from store");
            const auto ranked = rank(store.row(it->second), gallery, trial.probe_sample_ids[p]);
            const std::int64_t want = trial.probe_true_identities[p];
            std::int64_t hit_rank = -1;
            for (std::size_t g = 0; g < ranked.gallery_sample_ids.size(); ++g) {
                if (identity_of_gallery_sample.at(ranked.gallery_sample_ids[g]) == want) {
                    hit_rank = static_cast<std::int64_t>(g); // 0-based
                    break;
                }
            }
            if (hit_rank < 0) continue; // true match not in gallery
            for (std::int64_t k = hit_rank; k < static_cast<std::int64_t>(hits.size()); ++k)
                hits[static_cast<std::size_t>(k)] += 1;
        }
    }

    CMCCurve curve;
    curve.trials = static_cast<int>(trials.size());
    curve.values.resize(hits.size());
    const double denom = static_cast<double>(trials.size()) * static_cast<double>(probe_count);
    for (std::size_t k = 0; k < hits.size(); ++k)
        curve.values[k] = static_cast<double>(hits[k]) / denom;
    return curve;
}

// ---------------------------------------------------------------------------
// Attribute average precision
// ---------------------------------------------------------------------------

struct AttributeClassAP {
    int class_index = 0;
    std::int64_t support = 0; // annotated test occurrences of this class
    bool included = false;    // support >= min_support
    double ap = 0.0;
};

struct AttributeAPEntry {
    std::string name;
    bool included = false; // at least one class survived the support filter
    double ap = 0.0;       // binary: positive-class AP; categorical: mean over included classes
    std::vector<AttributeClassAP> classes;
};

struct AttributeAPReport {
    std::vector<AttributeAPEntry> per_attribute;
    int included_count = 0;
    double mean_ap = 0.0; // mean of the included attributes' reported values
};

namespace detail {

// Precision averaged at each positive hit over a score-ranked list
// (descending scores, ties broken by ascending sample index).
inline double average_precision(const std::vector<double>& scores,
                                const std::vector<std::uint8_t>& positives) {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    std::int64_t hits = 0;
    double acc = 0.0;
    for (std::size_t i = 0; i < order.size(); ++i) {
        if (positives[order[i]]) {
            ++hits;
            acc += static_cast<double>(hits) / static_cast<double>(i + 1);
        }
    }
    return hits == 0 ? 0.0 : acc / static_cast<double>(hits);
}

} // namespace detail

/// Per-attribute average precision over annotated test samples. Scores come
/// as raw head logits (M x width per attribute); binary heads are scored with
/// the sigmoid (class 1 is the positive class), categorical heads with the
/// per-class softmax probability. Classes with fewer than `min_support`
/// annotated occurrences are excluded; an attribute with no surviving class
/// is excluded and reported as such.
inline AttributeAPReport
attribute_average_precision(const std::vector<Tensor<float>>& attribute_logits,
                            const std::vector<std::optional<AttributeAnnotation>>& annotations,
                            const AttributeSchema& schema, std::int64_t min_support) {
    if (attribute_logits.size() != schema.size())
        throw Error("attribute_average_precision: logit head count does not match schema");

    std::vector<std::size_t> annotated;
    for (std::size_t i = 0; i < annotations.size(); ++i) {
        if (annotations[i]) {
            annotations[i]->validate(schema);
            annotated.push_back(i);
        }
    }
    if (annotated.empty()) throw Error("attribute_average_precision: no annotated test samples");

    AttributeAPReport report;
    double mean_acc = 0.0;
    for (std::size_t l = 0; l < schema.size(); ++l) {
        const auto& entry = schema.at(l);
        const auto& logits = attribute_logits[l];
        if (logits.dims[0] != static_cast<std::int64_t>(annotations.size()))
            throw Error("attribute_average_precision: logit rows do not match sample count");

        AttributeAPEntry out;
        out.name = entry.name;

        const int classes = entry.cardinality;
        std::vector<std::int64_t> support(static_cast<std::size_t>(classes), 0);
        for (auto i : annotated)
            support[static_cast<std::size_t>(annotations[i]->values[l])] += 1;

        auto class_scores = [&](int cls) {
            std::vector<double> scores;
            scores.reserve(annotated.size());
            for (auto i : annotated) {
                const auto row = logits.row(static_cast<std::int64_t>(i));
                if (entry.kind == AttributeKind::binary) {
                    const double p1 = 1.0 / (1.0 + std::exp(-static_cast<double>(row[0])));
                    scores.push_back(cls == 1 ? p1 : 1.0 - p1);
                } else {
                    double mx = row[0];
                    for (float v : row) mx = std::max(mx, static_cast<double>(v));
                    double z = 0.0;
                    for (float v : row) z += std::exp(static_cast<double>(v) - mx);
                    scores.push_back(std::exp(static_cast<double>(row[static_cast<std::size_t>(cls)]) - mx) / z);
                }
            }
            return scores;
        };
        auto class_positives = [&](int cls) {
            std::vector<std::uint8_t> pos;
            pos.reserve(annotated.size());
            for (auto i : annotated) pos.push_back(annotations[i]->values[l] == cls ? 1 : 0);
            return pos;
        };

        if (entry.kind == AttributeKind::binary) {
            AttributeClassAP cap;
            cap.class_index = 1;
            cap.support = support[1];
            cap.included = cap.support >= min_support;
            if (cap.included) cap.ap = detail::average_precision(class_scores(1), class_positives(1));
            out.classes.push_back(cap);
            out.included = cap.included;
            out.ap = cap.ap;
        } else {
            double acc = 0.0;
            int kept = 0;
            for (int cls = 0; cls < classes; ++cls) {
                AttributeClassAP cap;
                cap.class_index = cls;
                cap.support = support[static_cast<std::size_t>(cls)];
                cap.included = cap.support >= min_support;
                if (cap.included) {
                    cap.ap = detail::average_precision(class_scores(cls), class_positives(cls));
                    acc += cap.ap;
                    ++kept;
                }
                out.classes.push_back(cap);
            }
            out.included = kept > 0;
            out.ap = kept > 0 ? acc / static_cast<double>(kept) : 0.0;
        }

        if (out.included) {
            mean_acc += out.ap;
            ++report.included_count;
        }
        report.per_attribute.push_back(std::move(out));
    }
    report.mean_ap = report.included_count > 0
                         ? mean_acc / static_cast<double>(report.included_count)
                         : 0.0;
    return report;
}

} // namespace reid
