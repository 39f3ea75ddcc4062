#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "reid/config.hpp"
#include "reid/dataset.hpp"
#include "reid/error.hpp"
#include "reid/evaluator.hpp"
#include "reid/manifest.hpp"
#include "reid/matcher.hpp"
#include "reid/model.hpp"
#include "reid/plot.hpp"
#include "reid/synthetic.hpp"
#include "reid/trainer.hpp"

namespace reid {

namespace detail {

inline std::string hex64(std::uint64_t v) {
    char buf[19];
    std::snprintf(buf, sizeof(buf), "0x%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline std::filesystem::path resolve(const std::string& base_dir, const std::string& path) {
    std::filesystem::path p(path);
    if (p.is_absolute() || base_dir.empty()) return p;
    return std::filesystem::path(base_dir) / p;
}

} // namespace detail

/// Training corpus plus the held-out samples, with global identities already
/// assigned from the registry offsets.
struct AssembledData {
    DatasetRegistry registry;
    std::vector<Sample> test_samples;
    std::vector<SplitSpec> splits; // synthetic path only
};

inline AssembledData assemble_data(const RunConfig& rc, const std::string& base_dir = "") {
    AssembledData out;
    std::vector<std::pair<DatasetDescriptor, std::vector<Sample>>> train_sets;
    std::vector<std::vector<Sample>> test_sets;

    if (rc.synthetic) {
        auto generated = generate_synthetic(*rc.synthetic, rc.seed);
        for (auto& [desc, samples] : generated) {
            const SplitSpec split = make_split(desc, rc.split.protocol, rc.split.seed);
            std::set<int> test_ids(split.test_identities.begin(), split.test_identities.end());
            std::vector<Sample> train, test;
            for (auto& s : samples) {
                (test_ids.count(s.local_identity) ? test : train).push_back(std::move(s));
            }
            out.splits.push_back(split);
            train_sets.emplace_back(desc, std::move(train));
            test_sets.push_back(std::move(test));
        }
    } else {
        const AttributeSchema schema = rc.schema();
        int dataset_id = 0;
        for (const auto& m : rc.manifests) {
            auto loaded = load_manifest(detail::resolve(base_dir, m).string(), dataset_id,
                                        schema, rc.input_height, rc.input_width);
            train_sets.emplace_back(loaded.descriptor, std::move(loaded.train));
            test_sets.push_back(std::move(loaded.test));
            ++dataset_id;
        }
    }

    out.registry = DatasetRegistry::register_datasets(train_sets);
    for (auto& ts : test_sets) {
        for (auto& s : ts) {
            s.global_identity = out.registry.globalize(s.dataset_id, s.local_identity);
            out.test_samples.push_back(std::move(s));
        }
    }
    return out;
}

inline ModelConfig build_model_config(const RunConfig& rc, const AssembledData& data) {
    ModelConfig mc;
    mc.backbone = rc.backbone;
    mc.conv_channels = rc.conv_channels;
    mc.external_feature_dim = rc.external_feature_dim;
    mc.signature_dim = rc.signature_dim;
    mc.fc2_dim = rc.fc2_dim;
    mc.attribute_schema = rc.schema();
    mc.dropout_keep = rc.hp.dropout_keep;
    mc.fc2_stop_gradient = rc.fc2_stop_gradient;
    mc.input_height = data.registry.image_height();
    mc.input_width = data.registry.image_width();
    mc.input_channels = data.registry.image_channels();
    mc.num_identities = data.registry.total_identities();
    mc.validate();
    return mc;
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

/// Emits one manifest directory per synthetic dataset under out_dir; split
/// fields follow the config's split protocol, so loading the manifests
/// reconstructs the exact registry that in-memory assembly produces.
inline void run_synth(const RunConfig& rc, const std::string& out_dir) {
    if (!rc.synthetic) throw ConfigError("synth needs a config.data.synthetic block");
    const AttributeSchema schema = AttributeSchema::standard();
    auto generated = generate_synthetic(*rc.synthetic, rc.seed);
    std::filesystem::create_directories(out_dir);
    for (const auto& [desc, samples] : generated) {
        const SplitSpec split = make_split(desc, rc.split.protocol, rc.split.seed);
        std::set<int> test_ids(split.test_identities.begin(), split.test_identities.end());
        write_manifest_dataset(std::filesystem::path(out_dir) / desc.name, desc, samples, test_ids,
                               schema);
    }
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainResult {
    TrainingLog log;
    std::vector<std::string> checkpoint_paths;
    std::string final_weights_path;
};

inline TrainResult run_training(const RunConfig& rc, const std::string& out_dir,
                                const std::string& base_dir = "",
                                const std::string& resume_path = "") {
    rc.hp.validate();
    AssembledData data = assemble_data(rc, base_dir);
    const ModelConfig mc = build_model_config(rc, data);
    const std::uint64_t data_digest = data.registry.digest();

    Model<float> model(mc, derive_seed(rc.seed, {0x4D4F444Cull /*MODL*/}));
    Centers<float> centers =
        Centers<float>::zeros(data.registry.total_identities(), mc.signature_dim);
    TrainingLog log;
    StageRuntime<float> rt;

    std::size_t start_entry = 0;
    bool resumed = false;
    if (!resume_path.empty()) {
        const auto ckpt = load_checkpoint<float>(resume_path);
        bool found = false;
        for (std::size_t i = 0; i < rc.stages.size(); ++i) {
            if (rc.stages[i].stage == ckpt.stage &&
                rc.stages[i].attributes == ckpt.attributes_enabled) {
                start_entry = i;
                found = true;
                break;
            }
        }
        if (!found)
            throw ConfigError("checkpoint stage " + std::to_string(ckpt.stage) +
                              " does not match any entry of the configured stage plan");
        resume_from_checkpoint(ckpt, model, rt, centers, rc.hp, data_digest);
        resumed = true;
    }

    std::filesystem::create_directories(out_dir);
    {
        std::ofstream os(std::filesystem::path(out_dir) / "effective_config.json");
        os << rc.to_json().dump(2) << '\n';
    }

    TrainResult result;
    for (std::size_t i = start_entry; i < rc.stages.size(); ++i) {
        const auto& entry = rc.stages[i];
        if (i != start_entry || !resumed) rt = StageRuntime<float>();
        run_stage(model, data.registry, centers, rc.hp, entry.stage, entry.attributes,
                  derive_seed(rc.seed, {0x53544147ull /*STAG*/, static_cast<std::uint64_t>(i)}),
                  log, &rt);
        const auto ckpt_path =
            (std::filesystem::path(out_dir) / ("stage" + std::to_string(i + 1) + ".ckpt")).string();
        save_checkpoint(ckpt_path, model, rt.adam, &centers, entry.stage, rt.step_in_stage,
                        entry.attributes, rc.hp, data_digest, rc.seed);
        result.checkpoint_paths.push_back(ckpt_path);
        model.save_weights(
            (std::filesystem::path(out_dir) / ("stage" + std::to_string(i + 1) + ".weights"))
                .string());
    }
    result.final_weights_path = (std::filesystem::path(out_dir) / "final.weights").string();
    model.save_weights(result.final_weights_path);
    log.write_csv((std::filesystem::path(out_dir) / "training_log.csv").string());
    result.log = std::move(log);
    return result;
}

// ---------------------------------------------------------------------------
// extract / eval
// ---------------------------------------------------------------------------

inline Model<float> model_from_checkpoint(const Checkpoint<float>& ckpt) {
    const ModelConfig mc = ModelConfig::from_json(nlohmann::json::parse(ckpt.model_config_json));
    Model<float> model(mc, 0);
    auto params = model.parameters(true);
    if (params.size() != ckpt.model_tensors.size())
        throw IoError("checkpoint parameter count does not match its own model config");
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& [name, tensor] = ckpt.model_tensors[i];
        if (name != params[i].name || tensor.dims != params[i].tensor->dims)
            throw IoError("checkpoint tensor '" + name + "' is inconsistent with its model config");
        *params[i].tensor = tensor;
    }
    return model;
}

/// Per-attribute logits (M x head width) for a sample list, eval mode.
inline std::vector<Tensor<float>> attribute_logits_for(const Model<float>& model,
                                                       std::span<const Sample> samples,
                                                       int batch_size = 64) {
    const auto& cfg = model.config();
    std::vector<Tensor<float>> out;
    for (std::size_t l = 0; l < cfg.attribute_schema.size(); ++l)
        out.push_back(Tensor<float>::zeros({static_cast<std::int64_t>(samples.size()),
                                            cfg.attribute_schema.head_width(l)}));
    const std::size_t stride =
        static_cast<std::size_t>(cfg.input_height) * cfg.input_width * cfg.input_channels;
    std::int64_t row = 0;
    for (std::size_t start = 0; start < samples.size();
         start += static_cast<std::size_t>(batch_size)) {
        const std::size_t end =
            std::min(samples.size(), start + static_cast<std::size_t>(batch_size));
        const auto n = static_cast<std::int64_t>(end - start);
        Tensor<float> images =
            Tensor<float>::zeros({n, cfg.input_height, cfg.input_width, cfg.input_channels});
        for (std::int64_t i = 0; i < n; ++i) {
            const Sample& s = samples[start + static_cast<std::size_t>(i)];
            std::copy(s.image.px.begin(), s.image.px.end(),
                      images.data.begin() + static_cast<std::ptrdiff_t>(i * stride));
        }
        auto fr = model.forward(images, Mode::eval);
        for (std::size_t l = 0; l < out.size(); ++l) {
            for (std::int64_t i = 0; i < n; ++i) {
                auto dst = out[l].row(row + i);
                auto src = fr.out.attribute_logits[l].row(i);
                std::copy(src.begin(), src.end(), dst.begin());
            }
        }
        row += n;
    }
    return out;
}

struct EvaluationResult {
    CMCCurve curve;
    std::optional<AttributeAPReport> attributes;
    nlohmann::json report;
};

/// Runs the full evaluation protocol on the held-out split: seeded
/// cross-camera single-shot trials, CMC averaged over them, plus the
/// attribute APs when annotated test samples exist. When out_dir is
/// non-empty, writes report.json, cmc.svg and attributes.csv.
inline EvaluationResult run_evaluation(const RunConfig& rc, const std::string& checkpoint_path,
                                       const std::string& out_dir = "",
                                       const std::string& base_dir = "") {
    AssembledData data = assemble_data(rc, base_dir);
    const ModelConfig expected = build_model_config(rc, data);
    const auto ckpt = load_checkpoint<float>(checkpoint_path);
    if (ModelConfig::from_json(nlohmann::json::parse(ckpt.model_config_json)).digest() !=
        expected.digest())
        throw ConfigError("checkpoint/config digest mismatch: the checkpoint's model does not "
                          "match the config-built model");
    const Model<float> model = model_from_checkpoint(ckpt);

    if (data.test_samples.empty()) throw Error("run_evaluation: no test samples");
    const SignatureStore store = extract(model, data.test_samples);

    std::vector<ProbeGalleryTrial> trials;
    for (int t = 0; t < rc.eval.trials; ++t) {
        trials.push_back(make_trial(
            data.test_samples,
            derive_seed(rc.eval.seed, {0x4556544Cull /*EVTL*/, static_cast<std::uint64_t>(t)})));
    }
    EvaluationResult result;
    result.curve = cmc(trials, store, rc.eval.max_rank);

    std::vector<Sample> annotated;
    for (const auto& s : data.test_samples)
        if (s.attributes) annotated.push_back(s);
    const AttributeSchema schema = rc.schema();
    if (!annotated.empty() && !schema.empty()) {
        const auto logits = attribute_logits_for(model, annotated);
        std::vector<std::optional<AttributeAnnotation>> anns;
        for (const auto& s : annotated) anns.push_back(s.attributes);
        result.attributes = attribute_average_precision(logits, anns, schema, rc.eval.min_support);
    }

    nlohmann::json report;
    report["rank1"] = result.curve.rank1();
    report["cmc"] = result.curve.values;
    report["trials"] = result.curve.trials;
    report["num_probes"] = trials.front().probe_sample_ids.size();
    report["model_digest"] = detail::hex64(model.weights_digest());
    report["split"] = {{"protocol", rc.split.protocol.kind == SplitProtocol::Kind::half
                                        ? "half"
                                        : "fixed_test_count"},
                       {"fixed_test_count", rc.split.protocol.test_count},
                       {"seed", rc.split.seed}};
    report["seed"] = rc.eval.seed;
    nlohmann::json datasets = nlohmann::json::array();
    for (const auto& d : data.registry.descriptors()) {
        datasets.push_back({{"name", d.name},
                            {"identities", d.num_identities},
                            {"has_attributes", d.has_attributes}});
    }
    report["datasets"] = datasets;
    if (result.attributes) {
        nlohmann::json per;
        for (const auto& a : result.attributes->per_attribute) {
            if (a.included)
                per[a.name] = a.ap;
            else
                per[a.name] = nullptr; // excluded: no class met min_support
        }
        report["per_attribute_ap"] = per;
        report["mean_ap"] = result.attributes->mean_ap;
    } else {
        report["per_attribute_ap"] = nlohmann::json::object();
        report["mean_ap"] = nullptr;
    }
    result.report = report;

    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        {
            std::ofstream os(std::filesystem::path(out_dir) / "report.json");
            os << report.dump(2) << '\n';
        }
        PlotSeries s;
        s.label = "CMC";
        for (std::size_t k = 0; k < result.curve.values.size(); ++k) {
            s.x.push_back(static_cast<double>(k + 1));
            s.y.push_back(result.curve.values[k]);
        }
        write_line_plot_svg((std::filesystem::path(out_dir) / "cmc.svg").string(),
                            "CMC over held-out identities", "rank", "match probability", {s});
        std::ofstream att(std::filesystem::path(out_dir) / "attributes.csv");
        att << "attribute,ap,included\n";
        if (result.attributes) {
            for (const auto& a : result.attributes->per_attribute) {
                char buf[64];
                std::snprintf(buf, sizeof(buf), "%.17g", a.ap);
                att << a.name << ',' << (a.included ? buf : "") << ','
                    << (a.included ? "yes" : "no") << '\n';
            }
        }
    }
    return result;
}

inline std::string run_extract(const RunConfig& rc, const std::string& checkpoint_path,
                               const std::string& out_dir, const std::string& base_dir = "") {
    AssembledData data = assemble_data(rc, base_dir);
    const auto ckpt = load_checkpoint<float>(checkpoint_path);
    const ModelConfig expected = build_model_config(rc, data);
    if (ModelConfig::from_json(nlohmann::json::parse(ckpt.model_config_json)).digest() !=
        expected.digest())
        throw ConfigError("checkpoint/config digest mismatch");
    const Model<float> model = model_from_checkpoint(ckpt);

    std::vector<Sample> samples;
    if (rc.extract.split == "train" || rc.extract.split == "all")
        samples.insert(samples.end(), data.registry.samples().begin(),
                       data.registry.samples().end());
    if (rc.extract.split == "test" || rc.extract.split == "all")
        samples.insert(samples.end(), data.test_samples.begin(), data.test_samples.end());
    if (samples.empty()) throw Error("run_extract: no samples in the requested split");

    const SignatureStore store = extract(model, samples);
    std::filesystem::create_directories(out_dir);
    const auto path = (std::filesystem::path(out_dir) / "signatures.bin").string();
    store.save(path);
    return path;
}

/// Rebuilds the two training-curve panels (train rank-1 CMC and center loss
/// value against step) from a training log CSV.
inline void run_plot(const std::string& log_csv, const std::string& out_dir) {
    const TrainingLog log = TrainingLog::read_csv(log_csv);
    std::filesystem::create_directories(out_dir);

    PlotSeries rank1;
    rank1.label = "train rank-1";
    rank1.color = "#2266cc";
    for (const auto& r : log.records) {
        if (r.cmc_rank1_train) {
            rank1.x.push_back(static_cast<double>(r.step));
            rank1.y.push_back(*r.cmc_rank1_train);
        }
    }
    write_line_plot_svg((std::filesystem::path(out_dir) / "cmc_rank1_train.svg").string(),
                        "Training rank-1 CMC", "step", "rank-1", {rank1});

    PlotSeries cs;
    cs.label = "center loss";
    cs.color = "#cc4422";
    for (const auto& r : log.records) {
        cs.x.push_back(static_cast<double>(r.step));
        cs.y.push_back(r.l_cs);
    }
    write_line_plot_svg((std::filesystem::path(out_dir) / "center_loss.svg").string(),
                        "Center loss during training", "step", "center loss", {cs});
}

} // namespace reid
