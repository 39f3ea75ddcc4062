#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "reid/dataset.hpp"
#include "reid/error.hpp"
#include "reid/schema.hpp"
#include "reid/tensor.hpp"

namespace reid {

/// Per-class center vectors in signature space, one row per global identity.
/// Centers are optimizer state owned by the training loop, not model
/// parameters.
template <typename S>
struct Centers {
    Tensor<S> matrix; // K x D

    static Centers zeros(std::int64_t classes, std::int64_t dim) {
        Centers c;
        c.matrix = Tensor<S>::zeros({classes, dim});
        return c;
    }

    std::int64_t classes() const { return matrix.dims.empty() ? 0 : matrix.dims[0]; }
    std::int64_t dim() const { return matrix.dims.size() < 2 ? 0 : matrix.dims[1]; }
};

/// Loss combination weights plus the inverse-frequency class weight tables.
/// Classes that never occur in the training split carry weight 0 and drop
/// out of the loss entirely.
template <typename S>
struct LossWeights {
    S alpha = S(0);  // center loss weight
    S lambda = S(0); // attribute loss weight
    std::vector<S> identity_class_weights;               // size K, 1/nc or 0
    std::vector<std::vector<S>> attribute_class_weights; // per attribute, per class

    static LossWeights from_registry(const DatasetRegistry& reg, const AttributeSchema& schema,
                                     S alpha, S lambda) {
        LossWeights w;
        w.alpha = alpha;
        w.lambda = lambda;
        w.identity_class_weights.assign(static_cast<std::size_t>(reg.total_identities()), S(0));
        for (const auto& [cls, count] : reg.class_counts()) {
            w.identity_class_weights[static_cast<std::size_t>(cls)] = S(1) / static_cast<S>(count);
        }
        w.attribute_class_weights.resize(schema.size());
        std::vector<std::vector<std::int64_t>> counts(schema.size());
        for (std::size_t l = 0; l < schema.size(); ++l) {
            counts[l].assign(static_cast<std::size_t>(schema.at(l).cardinality), 0);
        }
        for (const Sample& s : reg.samples()) {
            if (!s.attributes) continue;
            s.attributes->validate(schema);
            for (std::size_t l = 0; l < schema.size(); ++l) {
                counts[l][static_cast<std::size_t>(s.attributes->values[l])] += 1;
            }
        }
        for (std::size_t l = 0; l < schema.size(); ++l) {
            w.attribute_class_weights[l].resize(counts[l].size());
            for (std::size_t d = 0; d < counts[l].size(); ++d) {
                w.attribute_class_weights[l][d] =
                    counts[l][d] > 0 ? S(1) / static_cast<S>(counts[l][d]) : S(0);
            }
        }
        return w;
    }
};

template <typename S>
struct LossBreakdown {
    S l_id = S(0);
    S l_cs = S(0);
    std::vector<S> l_att_per_attribute; // masked batch sum per attribute
    S l_att_total = S(0);               // sum over annotated samples of their attribute loss
    S total = S(0);                     // l_id + alpha*l_cs + lambda*l_att_total
};

namespace detail {

template <typename S>
S log_sum_exp(std::span<const S> v) {
    S mx = v[0];
    for (S x : v) mx = std::max(mx, x);
    S acc = S(0);
    for (S x : v) acc += std::exp(x - mx);
    return mx + std::log(acc);
}

// log(1 + exp(z)) without overflow.
template <typename S>
S softplus(S z) {
    const S m = std::max(z, S(0));
    return m + std::log1p(std::exp(-std::abs(z)));
}

template <typename S>
S sigmoid(S z) {
    if (z >= S(0)) return S(1) / (S(1) + std::exp(-z));
    const S e = std::exp(z);
    return e / (S(1) + e);
}

} // namespace detail

/// Frequency-weighted identity cross-entropy. Per sample the loss is
/// w(y) * (-log softmax(logits)[y]) with w(y) the reciprocal training count
/// of class y; the batch value is the mean over samples. If `dlogits` is
/// given it receives the analytic gradient.
template <typename S>
S identity_loss(const Tensor<S>& logits, std::span<const std::int64_t> labels,
                const LossWeights<S>& weights, Tensor<S>* dlogits = nullptr) {
    if (logits.rank() != 2) throw Error("identity_loss: logits must be N x K");
    const std::int64_t n = logits.dims[0];
    const std::int64_t k = logits.dims[1];
    if (static_cast<std::int64_t>(labels.size()) != n)
        throw Error("identity_loss: label count does not match batch size");
    if (static_cast<std::int64_t>(weights.identity_class_weights.size()) != k)
        throw Error("identity_loss: weight table size does not match logit width");
    if (!all_finite(logits)) throw Error("identity_loss: non-finite logits");
    if (dlogits) *dlogits = Tensor<S>::zeros(logits.dims);

    S acc = S(0);
    for (std::int64_t i = 0; i < n; ++i) {
        const std::int64_t y = labels[static_cast<std::size_t>(i)];
        if (y < 0 || y >= k)
            throw Error("identity_loss: label " + std::to_string(y) + " out of range [0, " +
                        std::to_string(k) + ")");
        const S w = weights.identity_class_weights[static_cast<std::size_t>(y)];
        if (w == S(0)) continue; // class absent from training counts
        const auto row = logits.row(i);
        const S lse = detail::log_sum_exp(row);
        acc += w * (lse - row[static_cast<std::size_t>(y)]);
        if (dlogits) {
            auto g = dlogits->row(i);
            const S scale = w / static_cast<S>(n);
            for (std::int64_t j = 0; j < k; ++j) {
                const S p = std::exp(row[static_cast<std::size_t>(j)] - lse);
                g[static_cast<std::size_t>(j)] = scale * (p - (j == y ? S(1) : S(0)));
            }
        }
    }
    return acc / static_cast<S>(n);
}

/// Center loss: sum over the batch of ||x_i - c_{y_i}||^2 (no 1/2 factor).
/// Centers are constants inside this gradient; dx_i = 2 (x_i - c_{y_i}).
template <typename S>
S center_loss(const Tensor<S>& features, std::span<const std::int64_t> labels,
              const Centers<S>& centers, Tensor<S>* dfeatures = nullptr) {
    if (features.rank() != 2) throw Error("center_loss: features must be N x D");
    const std::int64_t n = features.dims[0];
    const std::int64_t d = features.dims[1];
    if (d != centers.dim())
        throw Error("center_loss: feature dim " + std::to_string(d) +
                    " does not match center dim " + std::to_string(centers.dim()));
    if (static_cast<std::int64_t>(labels.size()) != n)
        throw Error("center_loss: label count does not match batch size");
    if (dfeatures) *dfeatures = Tensor<S>::zeros(features.dims);

    S acc = S(0);
    for (std::int64_t i = 0; i < n; ++i) {
        const std::int64_t y = labels[static_cast<std::size_t>(i)];
        if (y < 0 || y >= centers.classes())
            throw Error("center_loss: label " + std::to_string(y) + " has no center row");
        for (std::int64_t j = 0; j < d; ++j) {
            const S diff = features(i, j) - centers.matrix(y, j);
            acc += diff * diff;
            if (dfeatures) (*dfeatures)(i, j) = S(2) * diff;
        }
    }
    return acc;
}

/// Mini-batch center update: for each class j present in the batch,
///   delta_j = sum_{i: y_i = j} (c_j - x_i) / (1 + count_j)
///   c_j_new = c_j - cs_alpha * delta_j
/// Absent classes are unchanged. cs_alpha must lie in (0, 1].
template <typename S>
void update_centers(Centers<S>& centers, const Tensor<S>& features,
                    std::span<const std::int64_t> labels, S cs_alpha) {
    if (!(cs_alpha > S(0) && cs_alpha <= S(1)))
        throw Error("update_centers: cs_alpha must be in (0, 1]");
    if (features.rank() != 2 || features.dims[1] != centers.dim())
        throw Error("update_centers: feature/center dimension mismatch");
    const std::int64_t n = features.dims[0];
    const std::int64_t d = centers.dim();
    if (static_cast<std::int64_t>(labels.size()) != n)
        throw Error("update_centers: label count does not match batch size");

    std::map<std::int64_t, std::pair<std::vector<S>, std::int64_t>> per_class;
    for (std::int64_t i = 0; i < n; ++i) {
        const std::int64_t y = labels[static_cast<std::size_t>(i)];
        if (y < 0 || y >= centers.classes())
            throw Error("update_centers: label " + std::to_string(y) + " has no center row");
        auto& [sum, count] = per_class[y];
        if (sum.empty()) sum.assign(static_cast<std::size_t>(d), S(0));
        for (std::int64_t j = 0; j < d; ++j) {
            sum[static_cast<std::size_t>(j)] += centers.matrix(y, j) - features(i, j);
        }
        ++count;
    }
    for (const auto& [y, agg] : per_class) {
        const auto& [sum, count] = agg;
        const S denom = S(1) + static_cast<S>(count);
        for (std::int64_t j = 0; j < d; ++j) {
            centers.matrix(y, j) -= cs_alpha * sum[static_cast<std::size_t>(j)] / denom;
        }
    }
}

/// Weighted attribute loss for a single annotated sample: the sum over
/// attributes of the true class's negative log-likelihood, weighted by the
/// reciprocal training count of that class. Binary heads carry one logit and
/// use the sigmoid form; categorical heads use softmax. `grads`, when given,
/// must have one span per attribute with the head's width; it is overwritten.
template <typename S>
S attribute_loss_sample(const std::vector<std::span<const S>>& logits,
                        const AttributeAnnotation& annotation, const AttributeSchema& schema,
                        const LossWeights<S>& weights,
                        std::vector<std::span<S>>* grads = nullptr,
                        std::vector<S>* per_attribute = nullptr) {
    annotation.validate(schema);
    if (logits.size() != schema.size())
        throw Error("attribute_loss_sample: logit head count does not match schema");
    if (weights.attribute_class_weights.size() != schema.size())
        throw Error("attribute_loss_sample: weight table does not match schema");
    if (grads && grads->size() != schema.size())
        throw Error("attribute_loss_sample: gradient head count does not match schema");
    if (per_attribute) per_attribute->assign(schema.size(), S(0));

    S acc = S(0);
    for (std::size_t l = 0; l < schema.size(); ++l) {
        const auto& entry = schema.at(l);
        const auto width = static_cast<std::size_t>(
            entry.kind == AttributeKind::binary ? 1 : entry.cardinality);
        if (logits[l].size() != width)
            throw Error("attribute '" + entry.name + "': logit width " +
                        std::to_string(logits[l].size()) + " does not match head width " +
                        std::to_string(width));
        if (grads && (*grads)[l].size() != width)
            throw Error("attribute '" + entry.name + "': gradient width mismatch");

        const int t = annotation.values[l];
        const S w = weights.attribute_class_weights[l][static_cast<std::size_t>(t)];
        S term = S(0);
        if (entry.kind == AttributeKind::binary) {
            const S z = logits[l][0];
            if (w != S(0)) term = w * (detail::softplus(z) - static_cast<S>(t) * z);
            if (grads) (*grads)[l][0] = w == S(0) ? S(0) : w * (detail::sigmoid(z) - static_cast<S>(t));
        } else {
            if (w != S(0)) {
                const S lse = detail::log_sum_exp(logits[l]);
                term = w * (lse - logits[l][static_cast<std::size_t>(t)]);
                if (grads) {
                    for (std::size_t d = 0; d < width; ++d) {
                        const S p = std::exp(logits[l][d] - lse);
                        (*grads)[l][d] = w * (p - (static_cast<int>(d) == t ? S(1) : S(0)));
                    }
                }
            } else if (grads) {
                for (std::size_t d = 0; d < width; ++d) (*grads)[l][d] = S(0);
            }
        }
        acc += term;
        if (per_attribute) (*per_attribute)[l] = term;
    }
    return acc;
}

/// Convenience overload over owned vectors.
template <typename S>
S attribute_loss_sample(const std::vector<std::vector<S>>& logits,
                        const AttributeAnnotation& annotation, const AttributeSchema& schema,
                        const LossWeights<S>& weights,
                        std::vector<std::vector<S>>* grads = nullptr) {
    std::vector<std::span<const S>> spans;
    spans.reserve(logits.size());
    for (const auto& v : logits) spans.emplace_back(v.data(), v.size());
    if (!grads) return attribute_loss_sample<S>(spans, annotation, schema, weights);
    grads->resize(logits.size());
    std::vector<std::span<S>> gspans;
    gspans.reserve(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) {
        (*grads)[i].assign(logits[i].size(), S(0));
        gspans.emplace_back((*grads)[i].data(), (*grads)[i].size());
    }
    return attribute_loss_sample<S>(spans, annotation, schema, weights, &gspans);
}

/// What the network produced for a batch. `signatures` are the FC1
/// activations (the re-identification embedding); attribute logit matrices
/// are per head, N x head_width.
template <typename S>
struct ForwardOutput {
    Tensor<S> signatures;      // N x D
    Tensor<S> identity_logits; // N x K
    std::vector<Tensor<S>> attribute_logits;
};

template <typename S>
struct BatchGradients {
    Tensor<S> d_identity_logits;
    Tensor<S> d_signatures;
    std::vector<Tensor<S>> d_attribute_logits;
};

/// The masked multi-task objective:
///   total = L_id + alpha * L_cs + lambda * sum_i beta_i * l_att(i)
/// Identity and center terms run over the whole batch; the attribute term
/// sums (in sample index order) only the samples whose mask bit is set.
template <typename S>
LossBreakdown<S> total_loss(const ForwardOutput<S>& out, const Batch& batch,
                            const Centers<S>& centers, const LossWeights<S>& weights,
                            const AttributeSchema& schema,
                            BatchGradients<S>* grads = nullptr) {
    const auto n = static_cast<std::int64_t>(batch.size());
    if (out.identity_logits.dims.empty() || out.identity_logits.dims[0] != n)
        throw Error("total_loss: identity logits batch dimension mismatch");
    if (out.signatures.dims.empty() || out.signatures.dims[0] != n)
        throw Error("total_loss: signature batch dimension mismatch");
    if (!std::isfinite(static_cast<double>(weights.alpha)) ||
        !std::isfinite(static_cast<double>(weights.lambda)))
        throw Error("total_loss: non-finite loss weights");

    LossBreakdown<S> lb;
    lb.l_att_per_attribute.assign(schema.size(), S(0));

    Tensor<S>* d_logits = nullptr;
    Tensor<S>* d_feats = nullptr;
    if (grads) {
        grads->d_identity_logits = Tensor<S>::zeros(out.identity_logits.dims);
        grads->d_signatures = Tensor<S>::zeros(out.signatures.dims);
        grads->d_attribute_logits.clear();
        for (const auto& t : out.attribute_logits)
            grads->d_attribute_logits.push_back(Tensor<S>::zeros(t.dims));
        d_logits = &grads->d_identity_logits;
        d_feats = &grads->d_signatures;
    }

    lb.l_id = identity_loss(out.identity_logits, batch.global_identities, weights, d_logits);
    lb.l_cs = center_loss(out.signatures, batch.global_identities, centers, d_feats);
    if (grads && weights.alpha != S(1)) {
        for (auto& g : grads->d_signatures.data) g *= weights.alpha;
    }

    // lambda = 0 switches the attribute task off entirely (stage 1, or runs
    // without annotated data); the attribute columns then log as zero
    if (!schema.empty() && weights.lambda != S(0)) {
        if (out.attribute_logits.size() != schema.size())
            throw Error("total_loss: attribute head count does not match schema");
        std::vector<std::span<const S>> row_logits(schema.size());
        std::vector<std::span<S>> row_grads(schema.size());
        std::vector<std::vector<S>> scratch(schema.size());
        for (std::size_t l = 0; l < schema.size(); ++l) {
            if (out.attribute_logits[l].dims[0] != n)
                throw Error("total_loss: attribute logits batch dimension mismatch");
            scratch[l].resize(static_cast<std::size_t>(out.attribute_logits[l].dims[1]));
        }
        std::vector<S> per_attribute;
        for (std::int64_t i = 0; i < n; ++i) {
            if (!batch.attribute_mask[static_cast<std::size_t>(i)]) continue;
            const auto& ann = batch.attribute_labels[static_cast<std::size_t>(i)];
            if (!ann) throw Error("total_loss: mask set but annotation missing");
            for (std::size_t l = 0; l < schema.size(); ++l) {
                row_logits[l] = out.attribute_logits[l].row(i);
                row_grads[l] = std::span<S>(scratch[l].data(), scratch[l].size());
            }
            const S li = attribute_loss_sample(row_logits, *ann, schema, weights,
                                               grads ? &row_grads : nullptr, &per_attribute);
            lb.l_att_total += li;
            for (std::size_t l = 0; l < schema.size(); ++l) {
                lb.l_att_per_attribute[l] += per_attribute[l];
            }
            if (grads) {
                for (std::size_t l = 0; l < schema.size(); ++l) {
                    auto dst = grads->d_attribute_logits[l].row(i);
                    for (std::size_t d = 0; d < scratch[l].size(); ++d) {
                        dst[d] = weights.lambda * scratch[l][d];
                    }
                }
            }
        }
    }

    lb.total = lb.l_id + weights.alpha * lb.l_cs + weights.lambda * lb.l_att_total;
    return lb;
}

} // namespace reid
