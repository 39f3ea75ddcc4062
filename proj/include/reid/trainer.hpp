#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "reid/adam.hpp"
#include "reid/dataset.hpp"
#include "reid/error.hpp"
#include "reid/evaluator.hpp"
#include "reid/losses.hpp"
#include "reid/matcher.hpp"
#include "reid/model.hpp"
#include "reid/rng.hpp"

namespace reid {

struct Hyperparameters {
    double dropout_keep = 0.8;
    double l2_regularization = 0.001;
    int batch_size = 64;
    double lambda = 100.0;
    double cs_alpha = 0.9;
    double alpha = 0.0; // center loss weight; the reference sweep is {0, 0.05, 0.06, 0.1}
    double stage1_lr = 1e-4;
    double stage2_lr = 1e-6;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;
    int stage1_steps = 0; // 0 = run until the train rank-1 window plateaus
    int stage2_steps = 0;
    int eval_every = 25;      // steps between train-CMC evaluations
    int eval_trials = 2;      // trials per train-CMC evaluation
    int max_steps = 2000;     // hard cap in plateau mode
    int plateau_patience = 3; // evaluations without improvement before stopping
    double plateau_min_delta = 0.005;
    bool freeze_backbone_stage2 = false;

    void validate() const {
        if (!(dropout_keep > 0.0 && dropout_keep <= 1.0))
            throw ConfigError("dropout_keep must be in (0, 1]");
        if (l2_regularization < 0.0) throw ConfigError("l2_regularization must be >= 0");
        if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
        if (lambda < 0.0) throw ConfigError("lambda must be >= 0");
        if (!(cs_alpha > 0.0 && cs_alpha <= 1.0)) throw ConfigError("cs_alpha must be in (0, 1]");
        if (alpha < 0.0) throw ConfigError("alpha must be >= 0");
        if (stage1_lr <= 0.0 || stage2_lr <= 0.0) throw ConfigError("learning rates must be positive");
        if (eval_every < 1) throw ConfigError("eval_every must be >= 1");
        if (eval_trials < 1) throw ConfigError("eval_trials must be >= 1");
        if (max_steps < 1) throw ConfigError("max_steps must be >= 1");
        if (stage1_steps < 0 || stage2_steps < 0) throw ConfigError("stage steps must be >= 0");
    }

    nlohmann::json to_json() const {
        return {{"dropout_keep", dropout_keep},
                {"l2_regularization", l2_regularization},
                {"batch_size", batch_size},
                {"lambda", lambda},
                {"cs_alpha", cs_alpha},
                {"alpha", alpha},
                {"stage1_lr", stage1_lr},
                {"stage2_lr", stage2_lr},
                {"adam_beta1", adam_beta1},
                {"adam_beta2", adam_beta2},
                {"adam_epsilon", adam_epsilon},
                {"stage1_steps", stage1_steps},
                {"stage2_steps", stage2_steps},
                {"eval_every", eval_every},
                {"eval_trials", eval_trials},
                {"max_steps", max_steps},
                {"plateau_patience", plateau_patience},
                {"plateau_min_delta", plateau_min_delta},
                {"freeze_backbone_stage2", freeze_backbone_stage2}};
    }

    static Hyperparameters from_json(const nlohmann::json& j) {
        Hyperparameters hp;
        hp.dropout_keep = j.at("dropout_keep").get<double>();
        hp.l2_regularization = j.at("l2_regularization").get<double>();
        hp.batch_size = j.at("batch_size").get<int>();
        hp.lambda = j.at("lambda").get<double>();
        hp.cs_alpha = j.at("cs_alpha").get<double>();
        hp.alpha = j.at("alpha").get<double>();
        hp.stage1_lr = j.at("stage1_lr").get<double>();
        hp.stage2_lr = j.at("stage2_lr").get<double>();
        hp.adam_beta1 = j.at("adam_beta1").get<double>();
        hp.adam_beta2 = j.at("adam_beta2").get<double>();
        hp.adam_epsilon = j.at("adam_epsilon").get<double>();
        hp.stage1_steps = j.at("stage1_steps").get<int>();
        hp.stage2_steps = j.at("stage2_steps").get<int>();
        hp.eval_every = j.at("eval_every").get<int>();
        hp.eval_trials = j.at("eval_trials").get<int>();
        hp.max_steps = j.at("max_steps").get<int>();
        hp.plateau_patience = j.at("plateau_patience").get<int>();
        hp.plateau_min_delta = j.at("plateau_min_delta").get<double>();
        hp.freeze_backbone_stage2 = j.at("freeze_backbone_stage2").get<bool>();
        hp.validate();
        return hp;
    }
};

struct TrainingRecord {
    std::int64_t step = 0; // monotone over the whole log
    int stage = 1;
    std::int64_t step_in_stage = 0;
    double l_id = 0.0;
    double l_cs = 0.0;
    double l_att = 0.0;
    double total = 0.0;
    std::optional<double> cmc_rank1_train;
    double wall_seconds = 0.0;
};

struct TrainingLog {
    std::vector<TrainingRecord> records;

    // CSV columns: step,stage,l_id,l_cs,l_att,total,cmc_rank1_train
    // (rank-1 is empty except at evaluation steps; wall time is not logged to
    // keep reruns byte-identical)
    void write_csv(const std::string& path) const {
        std::FILE* f = std::fopen(path.c_str(), "w");
        if (!f) throw IoError("cannot open for writing: " + path);
        std::fprintf(f, "step,stage,l_id,l_cs,l_att,total,cmc_rank1_train\n");
        for (const auto& r : records) {
            std::fprintf(f, "%lld,%d,%.17g,%.17g,%.17g,%.17g,", static_cast<long long>(r.step),
                         r.stage, r.l_id, r.l_cs, r.l_att, r.total);
            if (r.cmc_rank1_train) std::fprintf(f, "%.17g", *r.cmc_rank1_train);
            std::fprintf(f, "\n");
        }
        std::fclose(f);
    }

    static TrainingLog read_csv(const std::string& path) {
        auto is = open_input(path);
        TrainingLog log;
        std::string line;
        if (!std::getline(is, line)) throw IoError("empty training log: " + path);
        while (std::getline(is, line)) {
            if (line.empty()) continue;
            TrainingRecord r;
            std::vector<std::string> cells;
            std::size_t pos = 0;
            while (true) {
                const auto comma = line.find(',', pos);
                cells.push_back(line.substr(pos, comma == std::string::npos ? comma : comma - pos));
                if (comma == std::string::npos) break;
                pos = comma + 1;
            }
            if (cells.size() != 7) throw IoError("bad training log row: " + line);
            r.step = std::stoll(cells[0]);
            r.stage = std::stoi(cells[1]);
            r.l_id = std::stod(cells[2]);
            r.l_cs = std::stod(cells[3]);
            r.l_att = std::stod(cells[4]);
            r.total = std::stod(cells[5]);
            if (!cells[6].empty()) r.cmc_rank1_train = std::stod(cells[6]);
            log.records.push_back(r);
        }
        return log;
    }
};

namespace detail {

// Train-set rank-1 CMC over the identities seen by at least two cameras,
// all registered datasets combined.
template <typename S>
std::optional<double> train_rank1(const Model<S>& model, const DatasetRegistry& reg, int trials,
                                  std::uint64_t seed) {
    std::map<std::int64_t, std::set<int>> cams_of;
    for (const Sample& s : reg.samples()) cams_of[s.global_identity].insert(s.camera_id);
    std::vector<Sample> usable;
    for (const Sample& s : reg.samples()) {
        if (cams_of[s.global_identity].size() >= 2) usable.push_back(s);
    }
    if (usable.empty()) return std::nullopt;
    const SignatureStore store = extract(model, usable);
    std::vector<ProbeGalleryTrial> ts;
    for (int t = 0; t < trials; ++t) {
        ts.push_back(make_trial(usable, derive_seed(seed, {0x54524E4Bull /*TRNK*/,
                                                           static_cast<std::uint64_t>(t)})));
    }
    return cmc(ts, store).rank1();
}

} // namespace detail

/// One stage of the two-stage protocol. Stage 1 runs at stage1_lr; stage 2 at
/// stage2_lr, optionally with the attribute losses enabled. Center updates
/// run every step regardless of alpha so the center-loss trace is always
/// meaningful. Optimizer state persists across a resumed stage via `runtime`,
/// and centers persist across stages.
template <typename S>
struct StageRuntime {
    AdamOptimizer<S> adam;
    std::int64_t step_in_stage = 0;
};

// Invoked after each completed step with the number of finished steps; used
// for mid-stage checkpointing.
template <typename S>
using StepCallback = std::function<void(const Model<S>&, const StageRuntime<S>&,
                                        const Centers<S>&, std::int64_t)>;

template <typename S>
void run_stage(Model<S>& model, const DatasetRegistry& registry, Centers<S>& centers,
               const Hyperparameters& hp, int stage, bool attributes_enabled, std::uint64_t seed,
               TrainingLog& log, StageRuntime<S>* runtime = nullptr,
               const std::type_identity_t<StepCallback<S>>& on_step = nullptr) {
    hp.validate();
    if (stage != 1 && stage != 2) throw ConfigError("stage must be 1 or 2");
    if (registry.empty()) throw Error("run_stage: empty registry");
    if (centers.classes() != registry.total_identities() ||
        centers.dim() != model.config().signature_dim)
        throw Error("run_stage: centers shape does not match registry/model");

    const AttributeSchema& schema = model.config().attribute_schema;
    if (attributes_enabled && schema.empty())
        throw ConfigError("attributes_enabled requires a model with attribute heads");

    const auto weights = LossWeights<S>::from_registry(
        registry, schema, static_cast<S>(hp.alpha),
        attributes_enabled ? static_cast<S>(hp.lambda) : S(0));

    StageRuntime<S> local;
    StageRuntime<S>& rt = runtime ? *runtime : local;
    auto params = model.parameters(true);
    if (!rt.adam.initialized()) {
        rt.adam = AdamOptimizer<S>(hp.adam_beta1, hp.adam_beta2, hp.adam_epsilon);
        rt.adam.init(params);
    }

    const double lr = stage == 1 ? hp.stage1_lr : hp.stage2_lr;
    const int configured_steps = stage == 1 ? hp.stage1_steps : hp.stage2_steps;
    const bool plateau_mode = configured_steps == 0;
    const std::int64_t step_cap = plateau_mode ? hp.max_steps : configured_steps;
    const bool freeze_backbone = stage == 2 && hp.freeze_backbone_stage2;

    BatchSampler sampler(registry, hp.batch_size, seed, stage);
    const auto t0 = std::chrono::steady_clock::now();

    double best_rank1 = -1.0;
    int evals_without_improvement = 0;

    for (; rt.step_in_stage < step_cap; ++rt.step_in_stage) {
        const std::int64_t step = rt.step_in_stage;
        Batch batch = sampler.batch_for_step(step);
        const std::uint64_t dropout_seed =
            derive_seed(seed, {0x44524F50ull /*DROP*/, static_cast<std::uint64_t>(stage),
                               static_cast<std::uint64_t>(step)});
        LossBreakdown<S> lb;
        BatchGradients<S> bg;
        ForwardResult<S> fr;
        try {
            fr = model.forward(batch.images, Mode::train, dropout_seed);
            lb = total_loss(fr.out, batch, centers, weights, schema, &bg);
        } catch (const NonFiniteError& e) {
            throw DivergenceError(std::string(e.what()) + " at step " + std::to_string(step) +
                                      " of stage " + std::to_string(stage),
                                  step);
        }
        if (!std::isfinite(static_cast<double>(lb.total)))
            throw DivergenceError("non-finite loss at step " + std::to_string(step) + " of stage " +
                                      std::to_string(stage),
                                  step);

        auto grads = model.backward(fr.cache, bg);
        for (std::size_t p = 0; p < params.size(); ++p) {
            if (freeze_backbone && params[p].is_backbone) {
                grads[p].fill(S(0));
                continue;
            }
            if (params[p].is_weight && hp.l2_regularization > 0.0) {
                const S l2 = static_cast<S>(hp.l2_regularization);
                auto& g = grads[p].data;
                const auto& w = params[p].tensor->data;
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += l2 * w[i];
            }
        }
        rt.adam.step(params, grads, static_cast<S>(lr));
        update_centers(centers, fr.out.signatures, batch.global_identities,
                       static_cast<S>(hp.cs_alpha));

        TrainingRecord rec;
        rec.step = static_cast<std::int64_t>(log.records.size());
        rec.stage = stage;
        rec.step_in_stage = step;
        rec.l_id = static_cast<double>(lb.l_id);
        rec.l_cs = static_cast<double>(lb.l_cs);
        rec.l_att = static_cast<double>(lb.l_att_total);
        rec.total = static_cast<double>(lb.total);
        rec.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

        const bool last_step = rt.step_in_stage + 1 >= step_cap;
        if ((step + 1) % hp.eval_every == 0 || last_step) {
            const auto r1 = detail::train_rank1(
                model, registry, hp.eval_trials,
                derive_seed(seed, {0x4556414Cull /*EVAL*/, static_cast<std::uint64_t>(stage),
                                   static_cast<std::uint64_t>(step)}));
            rec.cmc_rank1_train = r1;
            if (plateau_mode && r1) {
                if (*r1 > best_rank1 + hp.plateau_min_delta) {
                    best_rank1 = *r1;
                    evals_without_improvement = 0;
                } else {
                    ++evals_without_improvement;
                }
            }
        }
        log.records.push_back(rec);
        if (on_step) on_step(model, rt, centers, step + 1);

        if (plateau_mode && evals_without_improvement >= hp.plateau_patience) {
            ++rt.step_in_stage;
            break;
        }
    }
}

// ---------------------------------------------------------------------------
// Checkpointing
// ---------------------------------------------------------------------------

template <typename S>
struct Checkpoint {
    int stage = 1;
    std::int64_t step_in_stage = 0;
    bool attributes_enabled = false;
    std::uint64_t run_seed = 0;
    std::uint64_t data_digest = 0;
    std::string hp_json;
    std::string model_config_json;
    std::vector<std::pair<std::string, Tensor<S>>> model_tensors;
    std::int64_t adam_t = 0;
    std::vector<Tensor<S>> adam_m, adam_v;
    bool has_centers = false;
    Tensor<S> centers;
};

template <typename S>
void save_checkpoint(const std::string& path, const Model<S>& model,
                     const AdamOptimizer<S>& adam, const Centers<S>* centers, int stage,
                     std::int64_t step_in_stage, bool attributes_enabled,
                     const Hyperparameters& hp, std::uint64_t data_digest,
                     std::uint64_t run_seed) {
    constexpr Dtype dtype = sizeof(S) == 4 ? Dtype::f32 : Dtype::f64;
    auto os = open_output(path);
    write_magic(os, "REIDCKPT");
    write_le<std::uint32_t>(os, 1);
    write_le<std::uint32_t>(os, static_cast<std::uint32_t>(stage));
    write_le<std::int64_t>(os, step_in_stage);
    write_le<std::uint8_t>(os, attributes_enabled ? 1 : 0);
    write_le<std::uint64_t>(os, run_seed);
    write_le<std::uint64_t>(os, data_digest);
    write_string(os, hp.to_json().dump());
    write_string(os, model.config().canonical_json());

    const auto params = model.parameters(true);
    write_le<std::uint32_t>(os, static_cast<std::uint32_t>(params.size()));
    for (const auto& p : params) write_tensor_record(os, p.name, *p.tensor, dtype);

    write_le<std::int64_t>(os, adam.step_count());
    const auto& m = adam.first_moments();
    const auto& v = adam.second_moments();
    if (m.size() != params.size() || v.size() != params.size())
        throw Error("save_checkpoint: optimizer state does not match parameters");
    for (std::size_t i = 0; i < params.size(); ++i)
        write_tensor_record(os, params[i].name + ".m", m[i], dtype);
    for (std::size_t i = 0; i < params.size(); ++i)
        write_tensor_record(os, params[i].name + ".v", v[i], dtype);

    write_le<std::uint8_t>(os, centers ? 1 : 0);
    if (centers) write_tensor_record(os, "centers", centers->matrix, dtype);
}

template <typename S>
Checkpoint<S> load_checkpoint(const std::string& path) {
    auto is = open_input(path);
    expect_magic(is, "REIDCKPT", "checkpoint");
    const auto version = read_le<std::uint32_t>(is);
    if (version != 1) throw IoError("unsupported checkpoint version");
    Checkpoint<S> c;
    c.stage = static_cast<int>(read_le<std::uint32_t>(is));
    c.step_in_stage = read_le<std::int64_t>(is);
    c.attributes_enabled = read_le<std::uint8_t>(is) != 0;
    c.run_seed = read_le<std::uint64_t>(is);
    c.data_digest = read_le<std::uint64_t>(is);
    c.hp_json = read_string(is);
    c.model_config_json = read_string(is);
    const auto count = read_le<std::uint32_t>(is);
    for (std::uint32_t i = 0; i < count; ++i) c.model_tensors.push_back(read_tensor_record<S>(is));
    c.adam_t = read_le<std::int64_t>(is);
    for (std::uint32_t i = 0; i < count; ++i) c.adam_m.push_back(read_tensor_record<S>(is).second);
    for (std::uint32_t i = 0; i < count; ++i) c.adam_v.push_back(read_tensor_record<S>(is).second);
    c.has_centers = read_le<std::uint8_t>(is) != 0;
    if (c.has_centers) c.centers = read_tensor_record<S>(is).second;
    return c;
}

/// Validates a checkpoint against the current run setup and installs its
/// state. The batch schedule is derived from (seed, stage, step), so rebuilt
/// state reproduces the uninterrupted trajectory exactly.
template <typename S>
void resume_from_checkpoint(const Checkpoint<S>& c, Model<S>& model, StageRuntime<S>& rt,
                            Centers<S>& centers, const Hyperparameters& hp,
                            std::uint64_t data_digest) {
    const nlohmann::json want_hp = hp.to_json();
    const nlohmann::json have_hp = nlohmann::json::parse(c.hp_json);
    for (auto& [key, val] : want_hp.items()) {
        if (!have_hp.contains(key) || have_hp.at(key) != val)
            throw ConfigError("checkpoint hyperparameter mismatch on '" + key + "': checkpoint has " +
                              (have_hp.contains(key) ? have_hp.at(key).dump() : "nothing") +
                              ", run has " + val.dump());
    }
    if (c.model_config_json != model.config().canonical_json())
        throw ConfigError("checkpoint model config does not match the run's model config");
    if (c.data_digest != data_digest)
        throw ConfigError("checkpoint was trained on different data (digest mismatch)");
    if (hp.alpha > 0.0 && !c.has_centers)
        throw ConfigError("checkpoint has no centers but alpha > 0 requires them");

    auto params = model.parameters(true);
    if (params.size() != c.model_tensors.size())
        throw ConfigError("checkpoint parameter count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& [name, tensor] = c.model_tensors[i];
        if (name != params[i].name || tensor.dims != params[i].tensor->dims)
            throw ConfigError("checkpoint tensor '" + name + "' does not match model tensor '" +
                              params[i].name + "'");
        *params[i].tensor = tensor;
    }
    rt.adam = AdamOptimizer<S>(hp.adam_beta1, hp.adam_beta2, hp.adam_epsilon);
    rt.adam.restore(c.adam_m, c.adam_v, c.adam_t);
    rt.step_in_stage = c.step_in_stage;
    if (c.has_centers) {
        if (c.centers.dims != centers.matrix.dims)
            throw ConfigError("checkpoint centers shape mismatch");
        centers.matrix = c.centers;
    }
}

} // namespace reid
