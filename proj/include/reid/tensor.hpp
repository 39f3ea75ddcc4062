#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <vector>

#include "reid/error.hpp"

namespace reid {

// Dense row-major tensor. Rank is dynamic but in practice 1, 2 or 4.
// Deliberately minimal: the toolkit's hot loops index flat data directly.
template <typename S>
struct Tensor {
    std::vector<std::int64_t> dims;
    std::vector<S> data;

    Tensor() = default;

    static Tensor zeros(std::initializer_list<std::int64_t> shape) {
        Tensor t;
        t.dims.assign(shape);
        t.data.assign(static_cast<std::size_t>(count(t.dims)), S(0));
        return t;
    }

    static Tensor zeros(const std::vector<std::int64_t>& shape) {
        Tensor t;
        t.dims = shape;
        t.data.assign(static_cast<std::size_t>(count(t.dims)), S(0));
        return t;
    }

    static std::int64_t count(const std::vector<std::int64_t>& shape) {
        std::int64_t n = 1;
        for (std::int64_t d : shape) {
            if (d < 0) throw Error("Tensor: negative dimension");
            n *= d;
        }
        return n;
    }

    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
    std::size_t rank() const { return dims.size(); }

    std::int64_t dim(std::size_t i) const { return dims.at(i); }

    S& operator()(std::int64_t i) { return data[static_cast<std::size_t>(i)]; }
    const S& operator()(std::int64_t i) const { return data[static_cast<std::size_t>(i)]; }

    S& operator()(std::int64_t i, std::int64_t j) {
        return data[static_cast<std::size_t>(i * dims[1] + j)];
    }
    const S& operator()(std::int64_t i, std::int64_t j) const {
        return data[static_cast<std::size_t>(i * dims[1] + j)];
    }

    // NCHW-style 4-d access (used for activations and conv kernels).
    S& operator()(std::int64_t a, std::int64_t b, std::int64_t c, std::int64_t d) {
        return data[static_cast<std::size_t>(((a * dims[1] + b) * dims[2] + c) * dims[3] + d)];
    }
    const S& operator()(std::int64_t a, std::int64_t b, std::int64_t c, std::int64_t d) const {
        return data[static_cast<std::size_t>(((a * dims[1] + b) * dims[2] + c) * dims[3] + d)];
    }

    std::span<S> row(std::int64_t i) {
        const auto w = static_cast<std::size_t>(dims[1]);
        return std::span<S>(data.data() + static_cast<std::size_t>(i) * w, w);
    }
    std::span<const S> row(std::int64_t i) const {
        const auto w = static_cast<std::size_t>(dims[1]);
        return std::span<const S>(data.data() + static_cast<std::size_t>(i) * w, w);
    }

    void fill(S v) { std::fill(data.begin(), data.end(), v); }

    bool same_shape(const Tensor& o) const { return dims == o.dims; }

    std::string shape_str() const {
        std::ostringstream os;
        os << '[';
        for (std::size_t i = 0; i < dims.size(); ++i) {
            if (i) os << 'x';
            os << dims[i];
        }
        os << ']';
        return os.str();
    }

    template <typename T>
    Tensor<T> cast() const {
        Tensor<T> t;
        t.dims = dims;
        t.data.resize(data.size());
        for (std::size_t i = 0; i < data.size(); ++i) t.data[i] = static_cast<T>(data[i]);
        return t;
    }
};

template <typename S>
bool all_finite(const Tensor<S>& t) {
    for (S v : t.data) {
        if (!std::isfinite(static_cast<double>(v))) return false;
    }
    return true;
}

} // namespace reid
