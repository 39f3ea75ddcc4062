#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "reid/dataset.hpp"
#include "reid/error.hpp"
#include "reid/model.hpp"
#include "reid/serialize.hpp"
#include "reid/tensor.hpp"

namespace reid {

/// Cosine distance 1 - <a,b> / (|a| |b|), in [0, 2]. Accumulation is always
/// 64-bit regardless of storage precision. Zero-norm inputs are an error: a
/// zero signature means a broken model, and silently returning a distance
/// would corrupt downstream CMC numbers.
template <typename S>
double cosine_distance(std::span<const S> a, std::span<const S> b) {
    if (a.size() != b.size()) throw Error("cosine_distance: dimension mismatch");
    if (a.empty()) throw Error("cosine_distance: empty vectors");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double x = static_cast<double>(a[i]);
        const double y = static_cast<double>(b[i]);
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if (na == 0.0 || nb == 0.0) throw Error("cosine_distance: zero-norm input");
    return 1.0 - dot / (std::sqrt(na) * std::sqrt(nb));
}

template <typename S>
double cosine_distance(const std::vector<S>& a, const std::vector<S>& b) {
    return cosine_distance(std::span<const S>(a), std::span<const S>(b));
}

/// Extracted signatures with their sample metadata, storable as a binary
/// file (byte layout documented in the README) for cross-tool interop.
struct SignatureStore {
    Tensor<float> vectors; // M x D
    std::vector<std::int64_t> sample_ids;
    std::vector<std::int64_t> global_identities;
    std::vector<std::int64_t> camera_ids;
    std::uint64_t model_digest = 0;

    std::int64_t size() const { return vectors.dims.empty() ? 0 : vectors.dims[0]; }
    std::int64_t dim() const { return vectors.dims.size() < 2 ? 0 : vectors.dims[1]; }

    std::span<const float> row(std::int64_t i) const { return vectors.row(i); }

    void validate() const {
        const auto m = static_cast<std::size_t>(size());
        if (sample_ids.size() != m || global_identities.size() != m || camera_ids.size() != m)
            throw Error("SignatureStore: parallel arrays must have equal length");
    }

    SignatureStore subset(const std::vector<std::int64_t>& rows) const {
        SignatureStore out;
        out.model_digest = model_digest;
        out.vectors = Tensor<float>::zeros({static_cast<std::int64_t>(rows.size()), dim()});
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const auto r = rows[i];
            if (r < 0 || r >= size()) throw Error("SignatureStore::subset: row out of range");
            auto src = vectors.row(r);
            std::copy(src.begin(), src.end(), out.vectors.row(static_cast<std::int64_t>(i)).begin());
            out.sample_ids.push_back(sample_ids[static_cast<std::size_t>(r)]);
            out.global_identities.push_back(global_identities[static_cast<std::size_t>(r)]);
            out.camera_ids.push_back(camera_ids[static_cast<std::size_t>(r)]);
        }
        return out;
    }

    std::int64_t find_sample(std::int64_t sample_id) const {
        for (std::size_t i = 0; i < sample_ids.size(); ++i) {
            if (sample_ids[i] == sample_id) return static_cast<std::int64_t>(i);
        }
        return -1;
    }

    // Layout: magic "REIDSIG1" | u32 version | u64 model digest | u64 M | u64 D
    //         | M*D f32 row-major | M i64 sample ids | M i64 identities | M i64 cameras
    void save(const std::string& path) const {
        validate();
        auto os = open_output(path);
        write_magic(os, "REIDSIG1");
        write_le<std::uint32_t>(os, 1);
        write_le<std::uint64_t>(os, model_digest);
        write_le<std::uint64_t>(os, static_cast<std::uint64_t>(size()));
        write_le<std::uint64_t>(os, static_cast<std::uint64_t>(dim()));
        for (float v : vectors.data) write_le<float>(os, v);
        for (auto v : sample_ids) write_le<std::int64_t>(os, v);
        for (auto v : global_identities) write_le<std::int64_t>(os, v);
        for (auto v : camera_ids) write_le<std::int64_t>(os, v);
    }

    static SignatureStore load(const std::string& path) {
        auto is = open_input(path);
        expect_magic(is, "REIDSIG1", "signature store");
        const auto version = read_le<std::uint32_t>(is);
        if (version != 1) throw IoError("unsupported signature store version");
        SignatureStore s;
        s.model_digest = read_le<std::uint64_t>(is);
        const auto m = static_cast<std::int64_t>(read_le<std::uint64_t>(is));
        const auto d = static_cast<std::int64_t>(read_le<std::uint64_t>(is));
        s.vectors = Tensor<float>::zeros({m, d});
        for (auto& v : s.vectors.data) v = read_le<float>(is);
        s.sample_ids.resize(static_cast<std::size_t>(m));
        s.global_identities.resize(static_cast<std::size_t>(m));
        s.camera_ids.resize(static_cast<std::size_t>(m));
        for (auto& v : s.sample_ids) v = read_le<std::int64_t>(is);
        for (auto& v : s.global_identities) v = read_le<std::int64_t>(is);
        for (auto& v : s.camera_ids) v = read_le<std::int64_t>(is);
        return s;
    }
};

/// Runs the model in eval mode over `samples` (order preserved) and collects
/// FC1 signatures. Batched to keep memory flat.
template <typename S>
SignatureStore extract(const Model<S>& model, std::span<const Sample> samples,
                       int batch_size = 64) {
    SignatureStore store;
    store.model_digest = model.weights_digest();
    const auto d = static_cast<std::int64_t>(model.config().signature_dim);
    store.vectors = Tensor<float>::zeros({static_cast<std::int64_t>(samples.size()), d});
    const auto& cfg = model.config();
    std::int64_t row = 0;
    for (std::size_t start = 0; start < samples.size(); start += static_cast<std::size_t>(batch_size)) {
        const std::size_t end = std::min(samples.size(), start + static_cast<std::size_t>(batch_size));
        const auto n = static_cast<std::int64_t>(end - start);
        Tensor<float> images =
            Tensor<float>::zeros({n, cfg.input_height, cfg.input_width, cfg.input_channels});
        const std::size_t stride =
            static_cast<std::size_t>(cfg.input_height) * cfg.input_width * cfg.input_channels;
        for (std::int64_t i = 0; i < n; ++i) {
            const Sample& s = samples[start + static_cast<std::size_t>(i)];
            if (s.image.px.size() != stride)
                throw Error("extract: sample image size does not match model input");
            std::copy(s.image.px.begin(), s.image.px.end(),
                      images.data.begin() + static_cast<std::ptrdiff_t>(i * stride));
        }
        auto fr = model.forward(images, Mode::eval);
        for (std::int64_t i = 0; i < n; ++i) {
            const Sample& s = samples[start + static_cast<std::size_t>(i)];
            auto dst = store.vectors.row(row);
            for (std::int64_t j = 0; j < d; ++j)
                dst[static_cast<std::size_t>(j)] = static_cast<float>(fr.out.signatures(i, j));
            store.sample_ids.push_back(s.sample_id);
            store.global_identities.push_back(s.global_identity);
            store.camera_ids.push_back(s.camera_id);
            ++row;
        }
    }
    return store;
}

/// One probe ranked against a gallery: ascending cosine distance, ties broken
/// by ascending gallery index (stable).
struct RankedResult {
    std::int64_t probe_sample_id = 0;
    std::vector<std::int64_t> gallery_sample_ids; // best match first
    std::vector<double> distances;                // ascending
};

inline RankedResult rank(std::span<const float> probe, const SignatureStore& gallery,
                         std::int64_t probe_sample_id = 0) {
    if (gallery.size() == 0) throw Error("rank: empty gallery");
    const auto m = gallery.size();
    std::vector<double> dist(static_cast<std::size_t>(m));
    for (std::int64_t i = 0; i < m; ++i) {
        dist[static_cast<std::size_t>(i)] = cosine_distance(probe, gallery.row(i));
    }
    std::vector<std::int64_t> order(static_cast<std::size_t>(m));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::int64_t a, std::int64_t b) {
        return dist[static_cast<std::size_t>(a)] < dist[static_cast<std::size_t>(b)];
    });
    RankedResult r;
    r.probe_sample_id = probe_sample_id;
    for (std::int64_t i : order) {
        r.gallery_sample_ids.push_back(gallery.sample_ids[static_cast<std::size_t>(i)]);
        r.distances.push_back(dist[static_cast<std::size_t>(i)]);
    }
    return r;
}

} // namespace reid
