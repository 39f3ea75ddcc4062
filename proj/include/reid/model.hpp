#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "reid/error.hpp"
#include "reid/losses.hpp"
#include "reid/rng.hpp"
#include "reid/schema.hpp"
#include "reid/serialize.hpp"
#include "reid/tensor.hpp"

namespace reid {

enum class Backbone { tiny_cnn, external_pretrained };
enum class Mode { train, eval };

inline nlohmann::json schema_to_json(const AttributeSchema& schema) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& e : schema.entries()) {
        arr.push_back({{"name", e.name},
                       {"kind", e.kind == AttributeKind::binary ? "binary" : "categorical"},
                       {"cardinality", e.cardinality}});
    }
    return arr;
}

inline AttributeSchema schema_from_json(const nlohmann::json& arr) {
    std::vector<AttributeEntry> entries;
    for (const auto& e : arr) {
        AttributeEntry a;
        a.name = e.at("name").get<std::string>();
        const auto kind = e.at("kind").get<std::string>();
        if (kind == "binary")
            a.kind = AttributeKind::binary;
        else if (kind == "categorical")
            a.kind = AttributeKind::categorical;
        else
            throw ConfigError("unknown attribute kind '" + kind + "'");
        a.cardinality = e.at("cardinality").get<int>();
        entries.push_back(std::move(a));
    }
    return AttributeSchema(std::move(entries));
}

struct ModelConfig {
    Backbone backbone = Backbone::tiny_cnn;
    int input_height = 32;
    int input_width = 32;
    int input_channels = 3;
    std::vector<int> conv_channels = {8, 16, 32}; // tiny_cnn: one stride-2 block per entry
    int external_feature_dim = 0;                 // backbone output width when external
    int signature_dim = 64;                       // FC1 width (D)
    int fc2_dim = 32;                             // FC2 width
    std::int64_t num_identities = 0;              // identity head width (K)
    AttributeSchema attribute_schema;             // may be empty (no attribute heads)
    double dropout_keep = 0.8;                    // KEEP probability
    bool fc2_stop_gradient = false;               // block FC2 gradient into the backbone

    void validate() const {
        if (signature_dim < 1) throw ConfigError("signature_dim must be >= 1");
        if (fc2_dim < 1) throw ConfigError("fc2_dim must be >= 1");
        if (num_identities < 1) throw ConfigError("num_identities must be >= 1");
        if (!(dropout_keep > 0.0 && dropout_keep <= 1.0))
            throw ConfigError("dropout_keep must be in (0, 1]");
        if (input_height < 1 || input_width < 1 || input_channels < 1)
            throw ConfigError("input dimensions must be positive");
        if (backbone == Backbone::tiny_cnn && conv_channels.empty())
            throw ConfigError("tiny_cnn backbone needs at least one conv block");
        if (backbone == Backbone::external_pretrained && external_feature_dim < 1)
            throw ConfigError("external_pretrained backbone needs external_feature_dim");
    }

    int feature_dim() const {
        return backbone == Backbone::tiny_cnn ? conv_channels.back() : external_feature_dim;
    }

    nlohmann::json to_json() const {
        return {{"backbone", backbone == Backbone::tiny_cnn ? "tiny_cnn" : "external_pretrained"},
                {"input_height", input_height},
                {"input_width", input_width},
                {"input_channels", input_channels},
                {"conv_channels", conv_channels},
                {"external_feature_dim", external_feature_dim},
                {"signature_dim", signature_dim},
                {"fc2_dim", fc2_dim},
                {"num_identities", num_identities},
                {"attribute_schema", schema_to_json(attribute_schema)},
                {"dropout_keep", dropout_keep},
                {"fc2_stop_gradient", fc2_stop_gradient}};
    }

    static ModelConfig from_json(const nlohmann::json& j) {
        ModelConfig c;
        const auto bb = j.at("backbone").get<std::string>();
        if (bb == "tiny_cnn")
            c.backbone = Backbone::tiny_cnn;
        else if (bb == "external_pretrained")
            c.backbone = Backbone::external_pretrained;
        else
            throw ConfigError("unknown backbone '" + bb + "'");
        c.input_height = j.at("input_height").get<int>();
        c.input_width = j.at("input_width").get<int>();
        c.input_channels = j.at("input_channels").get<int>();
        c.conv_channels = j.at("conv_channels").get<std::vector<int>>();
        c.external_feature_dim = j.at("external_feature_dim").get<int>();
        c.signature_dim = j.at("signature_dim").get<int>();
        c.fc2_dim = j.at("fc2_dim").get<int>();
        c.num_identities = j.at("num_identities").get<std::int64_t>();
        c.attribute_schema = schema_from_json(j.at("attribute_schema"));
        c.dropout_keep = j.at("dropout_keep").get<double>();
        c.fc2_stop_gradient = j.at("fc2_stop_gradient").get<bool>();
        c.validate();
        return c;
    }

    // nlohmann objects are key-sorted, so dump() is canonical.
    std::string canonical_json() const { return to_json().dump(); }

    std::uint64_t digest() const {
        Digest d;
        d.update(canonical_json());
        return d.value();
    }
};

template <typename S>
struct ParamRef {
    std::string name;
    Tensor<S>* tensor = nullptr;
    bool is_weight = false;  // L2 applies to weights, not biases
    bool is_backbone = false;
};

template <typename S>
struct ForwardCache {
    Mode mode = Mode::eval;
    Tensor<S> input;                // N x Cin x H x W
    std::vector<Tensor<S>> pre;     // conv outputs before ReLU
    std::vector<Tensor<S>> post;    // after ReLU
    Tensor<S> features;             // N x F (after GAP)
    Tensor<S> dropout_mask;         // N x F, values in {0, 1/keep}; empty in eval
    Tensor<S> dropped;              // N x F
    Tensor<S> fc2_out;              // N x fc2_dim
    Tensor<S> signatures;           // N x D (also returned in the output)
};

template <typename S>
struct ForwardResult {
    ForwardOutput<S> out;
    ForwardCache<S> cache;
};

namespace detail {

// y = x W^T + b with W laid out [out, in].
template <typename S>
Tensor<S> dense_forward(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b) {
    const std::int64_t n = x.dims[0], in = x.dims[1], out = w.dims[0];
    if (w.dims[1] != in) throw Error("dense: weight/input width mismatch");
    Tensor<S> y = Tensor<S>::zeros({n, out});
    for (std::int64_t i = 0; i < n; ++i) {
        const auto xr = x.row(i);
        auto yr = y.row(i);
        for (std::int64_t o = 0; o < out; ++o) {
            const auto wr = w.row(o);
            S acc = b(o);
            for (std::int64_t k = 0; k < in; ++k)
                acc += xr[static_cast<std::size_t>(k)] * wr[static_cast<std::size_t>(k)];
            yr[static_cast<std::size_t>(o)] = acc;
        }
    }
    return y;
}

template <typename S>
void dense_backward(const Tensor<S>& dy, const Tensor<S>& x, const Tensor<S>& w, Tensor<S>& dw,
                    Tensor<S>& db, Tensor<S>* dx_accum) {
    const std::int64_t n = x.dims[0], in = x.dims[1], out = w.dims[0];
    dw = Tensor<S>::zeros(w.dims);
    db = Tensor<S>::zeros({out});
    for (std::int64_t i = 0; i < n; ++i) {
        const auto xr = x.row(i);
        const auto gr = dy.row(i);
        for (std::int64_t o = 0; o < out; ++o) {
            const S g = gr[static_cast<std::size_t>(o)];
            db(o) += g;
            auto dwr = dw.row(o);
            for (std::int64_t k = 0; k < in; ++k)
                dwr[static_cast<std::size_t>(k)] += g * xr[static_cast<std::size_t>(k)];
        }
        if (dx_accum) {
            auto dxr = dx_accum->row(i);
            for (std::int64_t o = 0; o < out; ++o) {
                const S g = gr[static_cast<std::size_t>(o)];
                const auto wr = w.row(o);
                for (std::int64_t k = 0; k < in; ++k)
                    dxr[static_cast<std::size_t>(k)] += g * wr[static_cast<std::size_t>(k)];
            }
        }
    }
}

// 3x3 convolution, stride 2, pad 1. Output spatial size is ceil(in / 2).
template <typename S>
Tensor<S> conv3x3s2_forward(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b) {
    const std::int64_t n = x.dims[0], cin = x.dims[1], h = x.dims[2], wd = x.dims[3];
    const std::int64_t cout = w.dims[0];
    const std::int64_t ho = (h + 1) / 2, wo = (wd + 1) / 2;
    Tensor<S> y = Tensor<S>::zeros({n, cout, ho, wo});
    for (std::int64_t img = 0; img < n; ++img) {
        for (std::int64_t co = 0; co < cout; ++co) {
            for (std::int64_t oy = 0; oy < ho; ++oy) {
                for (std::int64_t ox = 0; ox < wo; ++ox) {
                    S acc = b(co);
                    for (std::int64_t ci = 0; ci < cin; ++ci) {
                        for (int ky = 0; ky < 3; ++ky) {
                            const std::int64_t iy = oy * 2 - 1 + ky;
                            if (iy < 0 || iy >= h) continue;
                            for (int kx = 0; kx < 3; ++kx) {
                                const std::int64_t ix = ox * 2 - 1 + kx;
                                if (ix < 0 || ix >= wd) continue;
                                acc += x(img, ci, iy, ix) * w(co, ci, ky, kx);
                            }
                        }
                    }
                    y(img, co, oy, ox) = acc;
                }
            }
        }
    }
    return y;
}

template <typename S>
void conv3x3s2_backward(const Tensor<S>& dy, const Tensor<S>& x, const Tensor<S>& w,
                        Tensor<S>& dw, Tensor<S>& db, Tensor<S>* dx) {
    const std::int64_t n = x.dims[0], cin = x.dims[1], h = x.dims[2], wd = x.dims[3];
    const std::int64_t cout = w.dims[0];
    const std::int64_t ho = dy.dims[2], wo = dy.dims[3];
    dw = Tensor<S>::zeros(w.dims);
    db = Tensor<S>::zeros({cout});
    if (dx) *dx = Tensor<S>::zeros(x.dims);
    for (std::int64_t img = 0; img < n; ++img) {
        for (std::int64_t co = 0; co < cout; ++co) {
            for (std::int64_t oy = 0; oy < ho; ++oy) {
                for (std::int64_t ox = 0; ox < wo; ++ox) {
                    const S g = dy(img, co, oy, ox);
                    if (g == S(0)) continue;
                    db(co) += g;
                    for (std::int64_t ci = 0; ci < cin; ++ci) {
                        for (int ky = 0; ky < 3; ++ky) {
                            const std::int64_t iy = oy * 2 - 1 + ky;
                            if (iy < 0 || iy >= h) continue;
                            for (int kx = 0; kx < 3; ++kx) {
                                const std::int64_t ix = ox * 2 - 1 + kx;
                                if (ix < 0 || ix >= wd) continue;
                                dw(co, ci, ky, kx) += x(img, ci, iy, ix) * g;
                                if (dx) (*dx)(img, ci, iy, ix) += w(co, ci, ky, kx) * g;
                            }
                        }
                    }
                }
            }
        }
    }
}

} // namespace detail

/// The embedding network: a pluggable backbone, one shared dropout, then two
/// parallel affine branches — FC1 (the signature) with the identity head on
/// top, and FC2 with the per-attribute heads on top.
template <typename S>
class Model {
public:
    using ExternalBackboneFn = std::function<Tensor<S>(const Tensor<float>&)>;

    explicit Model(ModelConfig cfg, std::uint64_t init_seed = 0) : cfg_(std::move(cfg)) {
        cfg_.validate();
        const int f = cfg_.feature_dim();
        if (cfg_.backbone == Backbone::tiny_cnn) {
            int cin = cfg_.input_channels;
            for (int cout : cfg_.conv_channels) {
                conv_w_.push_back(Tensor<S>::zeros({cout, cin, 3, 3}));
                conv_b_.push_back(Tensor<S>::zeros({cout}));
                cin = cout;
            }
        }
        fc1_w_ = Tensor<S>::zeros({cfg_.signature_dim, f});
        fc1_b_ = Tensor<S>::zeros({cfg_.signature_dim});
        fc2_w_ = Tensor<S>::zeros({cfg_.fc2_dim, f});
        fc2_b_ = Tensor<S>::zeros({cfg_.fc2_dim});
        id_w_ = Tensor<S>::zeros({cfg_.num_identities, cfg_.signature_dim});
        id_b_ = Tensor<S>::zeros({cfg_.num_identities});
        for (std::size_t l = 0; l < cfg_.attribute_schema.size(); ++l) {
            const int width = cfg_.attribute_schema.head_width(l);
            att_w_.push_back(Tensor<S>::zeros({width, cfg_.fc2_dim}));
            att_b_.push_back(Tensor<S>::zeros({width}));
        }
        init_parameters(init_seed);
    }

    const ModelConfig& config() const { return cfg_; }

    void set_external_backbone(ExternalBackboneFn fn) { external_ = std::move(fn); }

    /// Stable-ordered view of the trainable tensors. Centers are optimizer
    /// state, not parameters, and never appear here.
    std::vector<ParamRef<S>> parameters(bool include_backbone = true) {
        std::vector<ParamRef<S>> v;
        if (include_backbone) {
            for (std::size_t i = 0; i < conv_w_.size(); ++i) {
                v.push_back({"conv" + std::to_string(i + 1) + ".w", &conv_w_[i], true, true});
                v.push_back({"conv" + std::to_string(i + 1) + ".b", &conv_b_[i], false, true});
            }
        }
        v.push_back({"fc1.w", &fc1_w_, true, false});
        v.push_back({"fc1.b", &fc1_b_, false, false});
        v.push_back({"fc2.w", &fc2_w_, true, false});
        v.push_back({"fc2.b", &fc2_b_, false, false});
        v.push_back({"id_head.w", &id_w_, true, false});
        v.push_back({"id_head.b", &id_b_, false, false});
        for (std::size_t l = 0; l < att_w_.size(); ++l) {
            v.push_back({"att_head" + std::to_string(l) + ".w", &att_w_[l], true, false});
            v.push_back({"att_head" + std::to_string(l) + ".b", &att_b_[l], false, false});
        }
        return v;
    }

    std::vector<ParamRef<S>> parameters(bool include_backbone = true) const {
        return const_cast<Model*>(this)->parameters(include_backbone);
    }

    std::int64_t parameter_count() const {
        std::int64_t n = 0;
        for (const auto& p : parameters()) n += p.tensor->numel();
        return n;
    }

    ForwardResult<S> forward(const Tensor<float>& images, Mode mode,
                             std::uint64_t dropout_seed = 0) const {
        validate_images(images);
        ForwardResult<S> r;
        ForwardCache<S>& c = r.cache;
        c.mode = mode;
        const std::int64_t n = images.dims[0];
        const int f = cfg_.feature_dim();

        if (cfg_.backbone == Backbone::tiny_cnn) {
            c.input = to_nchw(images);
            const Tensor<S>* cur = &c.input;
            for (std::size_t i = 0; i < conv_w_.size(); ++i) {
                c.pre.push_back(detail::conv3x3s2_forward(*cur, conv_w_[i], conv_b_[i]));
                Tensor<S> relu = c.pre.back();
                for (auto& v : relu.data) v = v > S(0) ? v : S(0);
                c.post.push_back(std::move(relu));
                cur = &c.post.back();
            }
            // global average pooling
            const auto& last = c.post.back();
            const std::int64_t ch = last.dims[1], hh = last.dims[2], ww = last.dims[3];
            c.features = Tensor<S>::zeros({n, ch});
            const S inv = S(1) / static_cast<S>(hh * ww);
            for (std::int64_t img = 0; img < n; ++img) {
                for (std::int64_t cc = 0; cc < ch; ++cc) {
                    S acc = S(0);
                    for (std::int64_t y = 0; y < hh; ++y)
                        for (std::int64_t x = 0; x < ww; ++x) acc += last(img, cc, y, x);
                    c.features(img, cc) = acc * inv;
                }
            }
        } else {
            if (!external_)
                throw Error("external_pretrained backbone selected but no feature hook is set");
            c.features = external_(images);
            if (c.features.rank() != 2 || c.features.dims[0] != n || c.features.dims[1] != f)
                throw Error("external backbone returned wrong feature shape");
        }

        // dropout with inverted scaling; eval mode passes features through
        if (mode == Mode::train && cfg_.dropout_keep < 1.0) {
            Rng rng(dropout_seed);
            const S keep = static_cast<S>(cfg_.dropout_keep);
            const S scale = S(1) / keep;
            c.dropout_mask = Tensor<S>::zeros({n, f});
            for (auto& v : c.dropout_mask.data) v = rng.bernoulli(cfg_.dropout_keep) ? scale : S(0);
            c.dropped = c.features;
            for (std::size_t i = 0; i < c.dropped.data.size(); ++i)
                c.dropped.data[i] *= c.dropout_mask.data[i];
        } else {
            c.dropped = c.features;
        }

        c.signatures = detail::dense_forward(c.dropped, fc1_w_, fc1_b_);
        c.fc2_out = detail::dense_forward(c.dropped, fc2_w_, fc2_b_);

        r.out.signatures = c.signatures;
        r.out.identity_logits = detail::dense_forward(c.signatures, id_w_, id_b_);
        for (std::size_t l = 0; l < att_w_.size(); ++l) {
            r.out.attribute_logits.push_back(detail::dense_forward(c.fc2_out, att_w_[l], att_b_[l]));
        }

        if (!all_finite(r.out.signatures) || !all_finite(r.out.identity_logits))
            throw NonFiniteError("forward: non-finite activations");
        for (const auto& t : r.out.attribute_logits)
            if (!all_finite(t)) throw NonFiniteError("forward: non-finite attribute logits");
        return r;
    }

    /// Gradients w.r.t. every tensor in parameters(true) order given the loss
    /// gradients at the three output surfaces.
    std::vector<Tensor<S>> backward(const ForwardCache<S>& cache,
                                    const BatchGradients<S>& bg) const {
        const std::int64_t n = cache.dropped.dims[0];
        const int f = cfg_.feature_dim();

        // signature gradient: direct (center loss) + identity head
        Tensor<S> g_sig = bg.d_signatures;
        if (g_sig.numel() == 0) g_sig = Tensor<S>::zeros(cache.signatures.dims);
        Tensor<S> d_id_w, d_id_b;
        detail::dense_backward(bg.d_identity_logits, cache.signatures, id_w_, d_id_w, d_id_b,
                               &g_sig);

        Tensor<S> g_fc2 = Tensor<S>::zeros({n, cfg_.fc2_dim});
        std::vector<Tensor<S>> d_att_w(att_w_.size()), d_att_b(att_w_.size());
        for (std::size_t l = 0; l < att_w_.size(); ++l) {
            if (l < bg.d_attribute_logits.size() && bg.d_attribute_logits[l].numel() > 0) {
                detail::dense_backward(bg.d_attribute_logits[l], cache.fc2_out, att_w_[l],
                                       d_att_w[l], d_att_b[l], &g_fc2);
            } else {
                d_att_w[l] = Tensor<S>::zeros(att_w_[l].dims);
                d_att_b[l] = Tensor<S>::zeros(att_b_[l].dims);
            }
        }

        Tensor<S> g_drop = Tensor<S>::zeros({n, f});
        Tensor<S> d_fc1_w, d_fc1_b, d_fc2_w, d_fc2_b;
        detail::dense_backward(g_sig, cache.dropped, fc1_w_, d_fc1_w, d_fc1_b, &g_drop);
        detail::dense_backward(g_fc2, cache.dropped, fc2_w_, d_fc2_w, d_fc2_b,
                               cfg_.fc2_stop_gradient ? nullptr : &g_drop);

        Tensor<S> g_feat = std::move(g_drop);
        if (cache.mode == Mode::train && cache.dropout_mask.numel() > 0) {
            for (std::size_t i = 0; i < g_feat.data.size(); ++i)
                g_feat.data[i] *= cache.dropout_mask.data[i];
        }

        std::vector<Tensor<S>> conv_dw(conv_w_.size()), conv_db(conv_w_.size());
        if (cfg_.backbone == Backbone::tiny_cnn) {
            // GAP backward
            const auto& last = cache.post.back();
            const std::int64_t ch = last.dims[1], hh = last.dims[2], ww = last.dims[3];
            Tensor<S> g = Tensor<S>::zeros(last.dims);
            const S inv = S(1) / static_cast<S>(hh * ww);
            for (std::int64_t img = 0; img < n; ++img)
                for (std::int64_t cc = 0; cc < ch; ++cc) {
                    const S v = g_feat(img, cc) * inv;
                    for (std::int64_t y = 0; y < hh; ++y)
                        for (std::int64_t x = 0; x < ww; ++x) g(img, cc, y, x) = v;
                }
            for (std::size_t i = conv_w_.size(); i-- > 0;) {
                // ReLU backward through pre[i]
                const auto& pre = cache.pre[i];
                for (std::size_t k = 0; k < g.data.size(); ++k)
                    if (pre.data[k] <= S(0)) g.data[k] = S(0);
                const Tensor<S>& input = i == 0 ? cache.input : cache.post[i - 1];
                Tensor<S> g_in;
                detail::conv3x3s2_backward(g, input, conv_w_[i], conv_dw[i], conv_db[i],
                                           i == 0 ? nullptr : &g_in);
                g = std::move(g_in);
            }
        }

        std::vector<Tensor<S>> grads;
        if (cfg_.backbone == Backbone::tiny_cnn) {
            for (std::size_t i = 0; i < conv_w_.size(); ++i) {
                grads.push_back(std::move(conv_dw[i]));
                grads.push_back(std::move(conv_db[i]));
            }
        }
        grads.push_back(std::move(d_fc1_w));
        grads.push_back(std::move(d_fc1_b));
        grads.push_back(std::move(d_fc2_w));
        grads.push_back(std::move(d_fc2_b));
        grads.push_back(std::move(d_id_w));
        grads.push_back(std::move(d_id_b));
        for (std::size_t l = 0; l < att_w_.size(); ++l) {
            grads.push_back(std::move(d_att_w[l]));
            grads.push_back(std::move(d_att_b[l]));
        }
        return grads;
    }

    /// Weight file: magic, version, model config, digest, then all parameter
    /// tensors in parameters() order as little-endian 32-bit floats.
    void save_weights(const std::string& path) const {
        auto os = open_output(path);
        write_magic(os, "REIDWTS1");
        write_le<std::uint32_t>(os, 1);
        write_string(os, cfg_.canonical_json());
        write_le<std::uint64_t>(os, cfg_.digest());
        const auto params = parameters();
        write_le<std::uint32_t>(os, static_cast<std::uint32_t>(params.size()));
        for (const auto& p : params) {
            write_tensor_record(os, p.name, *p.tensor, Dtype::f32);
        }
    }

    /// Loads weights saved by save_weights. With `allow_missing_heads`, a file
    /// written by a model without attribute heads may be loaded into a model
    /// that has them; the heads keep their fresh initialization.
    void load_weights(const std::string& path, bool allow_missing_heads = false) {
        auto is = open_input(path);
        expect_magic(is, "REIDWTS1", "weight");
        const auto version = read_le<std::uint32_t>(is);
        if (version != 1) throw IoError("unsupported weight file version");
        const auto file_cfg_json = read_string(is);
        read_le<std::uint64_t>(is); // digest, informational
        compare_config(file_cfg_json, allow_missing_heads);
        const auto count = read_le<std::uint32_t>(is);

        std::unordered_map<std::string, Tensor<S>*> by_name;
        for (auto& p : parameters()) by_name[p.name] = p.tensor;
        std::unordered_map<std::string, bool> seen;
        for (std::uint32_t i = 0; i < count; ++i) {
            auto [name, t] = read_tensor_record<S>(is);
            auto it = by_name.find(name);
            if (it == by_name.end())
                throw IoError("weight file contains unknown tensor '" + name + "'");
            if (t.dims != it->second->dims)
                throw IoError("tensor '" + name + "' shape mismatch: file " + t.shape_str() +
                              " vs model " + it->second->shape_str());
            *it->second = std::move(t);
            seen[name] = true;
        }
        for (const auto& [name, _] : by_name) {
            if (seen.count(name)) continue;
            if (allow_missing_heads && name.rfind("att_head", 0) == 0) continue;
            throw IoError("weight file is missing tensor '" + name + "'");
        }
    }

    /// Digest over the config and the f32 image of every parameter; pins
    /// signature stores and evaluation reports to exact weights.
    std::uint64_t weights_digest() const {
        Digest d;
        d.update(cfg_.canonical_json());
        for (const auto& p : parameters()) {
            d.update(p.name);
            for (S v : p.tensor->data) {
                const float fv = static_cast<float>(v);
                d.update_value(fv);
            }
        }
        return d.value();
    }

private:
    void validate_images(const Tensor<float>& images) const {
        if (images.rank() != 4)
            throw Error("forward: images must be N x H x W x C");
        if (images.dims[1] != cfg_.input_height || images.dims[2] != cfg_.input_width ||
            images.dims[3] != cfg_.input_channels)
            throw Error("forward: image shape " + images.shape_str() +
                        " does not match configured input " + std::to_string(cfg_.input_height) +
                        "x" + std::to_string(cfg_.input_width) + "x" +
                        std::to_string(cfg_.input_channels));
        for (float v : images.data) {
            if (!(v >= 0.0f && v <= 1.0f))
                throw Error("forward: image values must lie in [0, 1]");
        }
    }

    Tensor<S> to_nchw(const Tensor<float>& images) const {
        const std::int64_t n = images.dims[0], h = images.dims[1], w = images.dims[2],
                           ch = images.dims[3];
        Tensor<S> x = Tensor<S>::zeros({n, ch, h, w});
        for (std::int64_t i = 0; i < n; ++i)
            for (std::int64_t y = 0; y < h; ++y)
                for (std::int64_t xx = 0; xx < w; ++xx)
                    for (std::int64_t c = 0; c < ch; ++c)
                        x(i, c, y, xx) = static_cast<S>(images(i, y, xx, c));
        return x;
    }

    void init_parameters(std::uint64_t seed) {
        auto params = parameters();
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto& p = params[i];
            if (!p.is_weight) continue; // biases stay zero
            std::int64_t fan_in = 1;
            const auto& dims = p.tensor->dims;
            for (std::size_t d = 1; d < dims.size(); ++d) fan_in *= dims[d];
            // uniform fan-in scaling, seeded per tensor. Conv and head layers
            // use a ReLU-friendly sqrt(6) gain; the embedding layers start
            // small so the center loss sees modest feature deviations until
            // the identity task has shaped them.
            const bool embedding = p.name.rfind("fc1", 0) == 0 || p.name.rfind("fc2", 0) == 0;
            const double gain = embedding ? 0.5 : std::sqrt(6.0);
            const double bound = gain / std::sqrt(static_cast<double>(fan_in));
            Rng rng(derive_seed(seed, {0x494E4954ull /*INIT*/, static_cast<std::uint64_t>(i)}));
            for (auto& v : p.tensor->data) v = static_cast<S>(rng.uniform(-bound, bound));
        }
    }

    void compare_config(const std::string& file_cfg_json, bool allow_missing_heads) const {
        nlohmann::json a = nlohmann::json::parse(file_cfg_json);
        nlohmann::json b = cfg_.to_json();
        for (auto& [key, val] : b.items()) {
            if (allow_missing_heads && key == "attribute_schema") continue;
            if (!a.contains(key) || a.at(key) != val) {
                throw IoError("weight file config mismatch on field '" + key + "': file has " +
                              (a.contains(key) ? a.at(key).dump() : "nothing") + ", model has " +
                              val.dump());
            }
        }
    }

    ModelConfig cfg_;
    std::vector<Tensor<S>> conv_w_, conv_b_;
    Tensor<S> fc1_w_, fc1_b_, fc2_w_, fc2_b_, id_w_, id_b_;
    std::vector<Tensor<S>> att_w_, att_b_;
    ExternalBackboneFn external_;
};

} // namespace reid
