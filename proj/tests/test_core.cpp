#include <catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <sstream>

#include "reid/gradcheck.hpp"
#include "reid/image.hpp"
#include "reid/rng.hpp"
#include "reid/serialize.hpp"
#include "reid/tensor.hpp"

using namespace reid;

TEST_CASE("rng is deterministic per seed and independent across derived streams", "[core]") {
    Rng a(123), b(123), c(124);
    for (int i = 0; i < 100; ++i) {
        REQUIRE(a.next_u64() == b.next_u64());
    }
    bool any_diff = false;
    Rng a2(123);
    for (int i = 0; i < 10; ++i) any_diff |= a2.next_u64() != c.next_u64();
    REQUIRE(any_diff);

    REQUIRE(derive_seed(1, {2, 3}) == derive_seed(1, {2, 3}));
    REQUIRE(derive_seed(1, {2, 3}) != derive_seed(1, {3, 2}));
    REQUIRE(derive_seed(1, {2, 3}) != derive_seed(2, {2, 3}));
}

TEST_CASE("rng distributions stay in range and unbiased-ish", "[core]") {
    Rng rng(7);
    for (int i = 0; i < 1000; ++i) {
        const double u = rng.uniform();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
    }
    std::vector<int> counts(5, 0);
    for (int i = 0; i < 5000; ++i) counts[static_cast<std::size_t>(rng.below(5))]++;
    for (int c : counts) REQUIRE(c > 800); // ~1000 each
    double mean = 0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) mean += rng.normal();
    mean /= n;
    REQUIRE(std::abs(mean) < 0.05);
}

TEST_CASE("permutation covers all indices", "[core]") {
    Rng rng(11);
    auto p = rng.permutation(257);
    std::vector<bool> seen(257, false);
    for (auto i : p) seen[i] = true;
    for (bool s : seen) REQUIRE(s);
}

TEST_CASE("tensor indexing is row-major", "[core]") {
    auto t = Tensor<double>::zeros({2, 3});
    t(1, 2) = 5.0;
    REQUIRE(t.data[5] == 5.0);
    auto q = Tensor<double>::zeros({2, 2, 2, 2});
    q(1, 0, 1, 0) = 3.0;
    REQUIRE(q.data[10] == 3.0);
    REQUIRE(t.shape_str() == "[2x3]");
}

TEST_CASE("little-endian primitives and tensor records round trip", "[core]") {
    std::stringstream ss;
    write_le<float>(ss, 1.5f);
    write_le<std::int64_t>(ss, -42);
    write_string(ss, "hello");
    auto t = Tensor<double>::zeros({2, 2});
    t.data = {1.0, 2.5, -3.0, 4.0};
    write_tensor_record(ss, "t", t, Dtype::f64);

    REQUIRE(read_le<float>(ss) == 1.5f);
    REQUIRE(read_le<std::int64_t>(ss) == -42);
    REQUIRE(read_string(ss) == "hello");
    auto [name, u] = read_tensor_record<double>(ss);
    REQUIRE(name == "t");
    REQUIRE(u.dims == t.dims);
    REQUIRE(u.data == t.data);
}

TEST_CASE("f32 tensor records truncate doubles but keep f32 values exactly", "[core]") {
    auto t = Tensor<float>::zeros({3});
    t.data = {0.1f, -2.25f, 1e-20f};
    std::stringstream ss;
    write_tensor_record(ss, "x", t, Dtype::f32);
    auto [_, u] = read_tensor_record<float>(ss);
    REQUIRE(u.data == t.data);
}

TEST_CASE("png round trip is bit exact on quantized images", "[core]") {
    Image im = Image::zeros(13, 9, 3);
    Rng rng(5);
    for (auto& v : im.px) v = static_cast<float>(rng.uniform());
    quantize8(im);
    const auto path = std::filesystem::temp_directory_path() / "reid_test_roundtrip.png";
    write_png(path.string(), im);
    const Image back = read_png(path.string());
    REQUIRE(back == im);
    std::filesystem::remove(path);
}

TEST_CASE("resize is identity at equal size and interpolates otherwise", "[core]") {
    Image im = Image::zeros(8, 8, 3);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x)
            for (int c = 0; c < 3; ++c) im.at(y, x, c) = y < 4 ? 0.0f : 1.0f;
    REQUIRE(resize_bilinear(im, 8, 8) == im);
    const Image half = resize_bilinear(im, 4, 4);
    REQUIRE(half.at(0, 0, 0) == 0.0f);
    REQUIRE(half.at(3, 3, 0) == 1.0f);
}

TEST_CASE("finite differences are near-exact on a quadratic", "[core]") {
    // f(x) = sum i * x_i^2; analytic gradient 2 i x_i
    std::vector<double> x = {1.0, -2.0, 0.5, 3.0};
    std::vector<double> grad(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) grad[i] = 2.0 * static_cast<double>(i + 1) * x[i];
    auto f = [&]() {
        double acc = 0;
        for (std::size_t i = 0; i < x.size(); ++i) acc += static_cast<double>(i + 1) * x[i] * x[i];
        return acc;
    };
    const double err = finite_difference_check<double>(
        f, std::span<double>(x), std::span<const double>(grad), 1e-5);
    REQUIRE(err < 1e-8);
}

TEST_CASE("finite difference checker rejects bad inputs", "[core]") {
    std::vector<double> x = {1.0};
    std::vector<double> g = {2.0};
    auto f = [&]() { return x[0] * x[0]; };
    REQUIRE_THROWS_AS(finite_difference_check<double>(f, std::span<double>(x),
                                                      std::span<const double>(g), 0.0),
                      Error);
    std::vector<double> bad = {std::numeric_limits<double>::quiet_NaN()};
    REQUIRE_THROWS_AS(finite_difference_check<double>(f, std::span<double>(bad),
                                                      std::span<const double>(g), 1e-5),
                      Error);
}
