#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "reid/error.hpp"
#include "reid/evaluator.hpp"
#include "reid/model.hpp"
#include "reid/synthetic.hpp"
#include "reid/trainer.hpp"

namespace reid {

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j, const std::set<std::string>& allowed,
                                const std::string& context) {
    if (!j.is_object()) throw ConfigError(context + " must be a JSON object");
    for (const auto& [key, _] : j.items()) {
        if (!allowed.count(key))
            throw ConfigError("unknown config key '" + context + "." + key + "'");
    }
}

template <typename T>
T get_or(const nlohmann::json& j, const std::string& key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config key '" + key + "': " + e.what());
    }
}

} // namespace detail

struct StagePlanEntry {
    int stage = 1;
    bool attributes = false;
};

struct SplitConfig {
    SplitProtocol protocol = SplitProtocol::half();
    std::uint64_t seed = 17;
};

struct EvalConfig {
    int trials = 10;
    std::int64_t max_rank = 0;     // 0 = full gallery
    std::int64_t min_support = 20; // attribute AP support filter
    std::uint64_t seed = 23;
    std::string checkpoint; // path, relative to the config file's directory
};

struct ExtractConfig {
    std::string checkpoint;
    std::string split = "test"; // train | test | all
};

/// Declarative run description. Hyperparameter defaults are the reference
/// values (dropout keep 0.8, L2 1e-3, batch 64, lambda 100, cs_alpha 0.9,
/// two-stage Adam at 1e-4 then 1e-6). Unknown keys anywhere are rejected.
struct RunConfig {
    std::uint64_t seed = 0;
    std::string out_dir;
    std::optional<SyntheticConfig> synthetic;
    std::vector<std::string> manifests;
    // model section (input size inherited from synthetic data when 0)
    Backbone backbone = Backbone::tiny_cnn;
    std::vector<int> conv_channels = {8, 16, 32};
    int external_feature_dim = 0;
    int signature_dim = 64;
    int fc2_dim = 32;
    std::string attribute_schema_kind = "standard"; // standard | none | custom
    AttributeSchema custom_schema;
    bool fc2_stop_gradient = false;
    int input_height = 0;
    int input_width = 0;
    int input_channels = 3;

    Hyperparameters hp;
    std::vector<StagePlanEntry> stages = {{1, false}, {2, true}};
    SplitConfig split;
    EvalConfig eval;
    ExtractConfig extract;

    AttributeSchema schema() const {
        if (attribute_schema_kind == "standard") return AttributeSchema::standard();
        if (attribute_schema_kind == "none") return AttributeSchema();
        return custom_schema;
    }

    static RunConfig from_json(const nlohmann::json& j) {
        detail::reject_unknown_keys(j,
                                    {"seed", "out_dir", "data", "model", "hyperparameters",
                                     "stages", "split", "eval", "extract"},
                                    "config");
        RunConfig rc;
        rc.seed = detail::get_or<std::uint64_t>(j, "seed", 0);
        rc.out_dir = detail::get_or<std::string>(j, "out_dir", "");

        if (j.contains("data")) {
            const auto& d = j.at("data");
            detail::reject_unknown_keys(d, {"synthetic", "manifests"}, "config.data");
            if (d.contains("synthetic") && !d.at("synthetic").is_null()) {
                const auto& s = d.at("synthetic");
                detail::reject_unknown_keys(s,
                                            {"num_datasets", "identities_per_dataset",
                                             "images_per_identity", "image_height", "image_width",
                                             "cameras", "attribute_fraction", "appearance_noise",
                                             "position_jitter"},
                                            "config.data.synthetic");
                SyntheticConfig sc;
                sc.num_datasets = detail::get_or<int>(s, "num_datasets", sc.num_datasets);
                sc.identities_per_dataset =
                    detail::get_or<int>(s, "identities_per_dataset", sc.identities_per_dataset);
                sc.images_per_identity =
                    detail::get_or<int>(s, "images_per_identity", sc.images_per_identity);
                sc.image_height = detail::get_or<int>(s, "image_height", sc.image_height);
                sc.image_width = detail::get_or<int>(s, "image_width", sc.image_width);
                sc.cameras = detail::get_or<int>(s, "cameras", sc.cameras);
                sc.attribute_fraction =
                    detail::get_or<double>(s, "attribute_fraction", sc.attribute_fraction);
                sc.appearance_noise =
                    detail::get_or<double>(s, "appearance_noise", sc.appearance_noise);
                sc.position_jitter = detail::get_or<int>(s, "position_jitter", sc.position_jitter);
                rc.synthetic = sc;
            }
            rc.manifests = detail::get_or<std::vector<std::string>>(d, "manifests", {});
        }
        if (rc.synthetic && !rc.manifests.empty())
            throw ConfigError("config.data: choose either synthetic or manifests, not both");
        if (!rc.synthetic && rc.manifests.empty())
            throw ConfigError("config.data: needs a synthetic block or a manifests list");

        if (j.contains("model")) {
            const auto& m = j.at("model");
            detail::reject_unknown_keys(m,
                                        {"backbone", "conv_channels", "external_feature_dim",
                                         "signature_dim", "fc2_dim", "attribute_schema",
                                         "fc2_stop_gradient", "input_height", "input_width",
                                         "input_channels"},
                                        "config.model");
            const auto bb = detail::get_or<std::string>(m, "backbone", "tiny_cnn");
            if (bb == "tiny_cnn")
                rc.backbone = Backbone::tiny_cnn;
            else if (bb == "external_pretrained")
                rc.backbone = Backbone::external_pretrained;
            else
                throw ConfigError("config.model.backbone: unknown value '" + bb + "'");
            rc.conv_channels =
                detail::get_or<std::vector<int>>(m, "conv_channels", rc.conv_channels);
            rc.external_feature_dim =
                detail::get_or<int>(m, "external_feature_dim", rc.external_feature_dim);
            rc.signature_dim = detail::get_or<int>(m, "signature_dim", rc.signature_dim);
            rc.fc2_dim = detail::get_or<int>(m, "fc2_dim", rc.fc2_dim);
            rc.fc2_stop_gradient =
                detail::get_or<bool>(m, "fc2_stop_gradient", rc.fc2_stop_gradient);
            rc.input_height = detail::get_or<int>(m, "input_height", 0);
            rc.input_width = detail::get_or<int>(m, "input_width", 0);
            rc.input_channels = detail::get_or<int>(m, "input_channels", 3);
            if (m.contains("attribute_schema")) {
                const auto& sch = m.at("attribute_schema");
                if (sch.is_string()) {
                    rc.attribute_schema_kind = sch.get<std::string>();
                    if (rc.attribute_schema_kind != "standard" && rc.attribute_schema_kind != "none")
                        throw ConfigError(
                            "config.model.attribute_schema: expected \"standard\", \"none\" or an "
                            "array of entries");
                } else {
                    rc.attribute_schema_kind = "custom";
                    rc.custom_schema = schema_from_json(sch);
                }
            }
        }

        if (j.contains("hyperparameters")) {
            const auto& h = j.at("hyperparameters");
            nlohmann::json defaults = Hyperparameters().to_json();
            std::set<std::string> allowed;
            for (const auto& [k, _] : defaults.items()) allowed.insert(k);
            detail::reject_unknown_keys(h, allowed, "config.hyperparameters");
            for (const auto& [k, v] : h.items()) defaults[k] = v;
            rc.hp = Hyperparameters::from_json(defaults);
        }

        if (j.contains("stages")) {
            rc.stages.clear();
            if (!j.at("stages").is_array()) throw ConfigError("config.stages must be an array");
            for (const auto& s : j.at("stages")) {
                detail::reject_unknown_keys(s, {"stage", "attributes"}, "config.stages[]");
                StagePlanEntry e;
                e.stage = detail::get_or<int>(s, "stage", 1);
                e.attributes = detail::get_or<bool>(s, "attributes", false);
                if (e.stage != 1 && e.stage != 2)
                    throw ConfigError("config.stages[].stage must be 1 or 2");
                rc.stages.push_back(e);
            }
            if (rc.stages.empty()) throw ConfigError("config.stages must not be empty");
        }

        if (j.contains("split")) {
            const auto& s = j.at("split");
            detail::reject_unknown_keys(s, {"protocol", "fixed_test_count", "seed"}, "config.split");
            const auto p = detail::get_or<std::string>(s, "protocol", "half");
            if (p == "half") {
                rc.split.protocol = SplitProtocol::half();
            } else if (p == "fixed_test_count") {
                rc.split.protocol =
                    SplitProtocol::fixed_test_count(detail::get_or<int>(s, "fixed_test_count", 0));
            } else {
                throw ConfigError("config.split.protocol: unknown value '" + p + "'");
            }
            rc.split.seed = detail::get_or<std::uint64_t>(s, "seed", rc.split.seed);
        }

        if (j.contains("eval")) {
            const auto& e = j.at("eval");
            detail::reject_unknown_keys(e, {"trials", "max_rank", "min_support", "seed", "checkpoint"},
                                        "config.eval");
            rc.eval.trials = detail::get_or<int>(e, "trials", rc.eval.trials);
            rc.eval.max_rank = detail::get_or<std::int64_t>(e, "max_rank", rc.eval.max_rank);
            rc.eval.min_support =
                detail::get_or<std::int64_t>(e, "min_support", rc.eval.min_support);
            rc.eval.seed = detail::get_or<std::uint64_t>(e, "seed", rc.eval.seed);
            rc.eval.checkpoint = detail::get_or<std::string>(e, "checkpoint", "");
            if (rc.eval.trials < 1) throw ConfigError("config.eval.trials must be >= 1");
        }

        if (j.contains("extract")) {
            const auto& e = j.at("extract");
            detail::reject_unknown_keys(e, {"checkpoint", "split"}, "config.extract");
            rc.extract.checkpoint = detail::get_or<std::string>(e, "checkpoint", "");
            rc.extract.split = detail::get_or<std::string>(e, "split", rc.extract.split);
            if (rc.extract.split != "train" && rc.extract.split != "test" &&
                rc.extract.split != "all")
                throw ConfigError("config.extract.split must be train, test or all");
        }

        return rc;
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["seed"] = seed;
        j["out_dir"] = out_dir;
        nlohmann::json data;
        if (synthetic) {
            data["synthetic"] = {{"num_datasets", synthetic->num_datasets},
                                 {"identities_per_dataset", synthetic->identities_per_dataset},
                                 {"images_per_identity", synthetic->images_per_identity},
                                 {"image_height", synthetic->image_height},
                                 {"image_width", synthetic->image_width},
                                 {"cameras", synthetic->cameras},
                                 {"attribute_fraction", synthetic->attribute_fraction},
                                 {"appearance_noise", synthetic->appearance_noise},
                                 {"position_jitter", synthetic->position_jitter}};
        }
        data["manifests"] = manifests;
        j["data"] = data;
        nlohmann::json model = {
            {"backbone", backbone == Backbone::tiny_cnn ? "tiny_cnn" : "external_pretrained"},
            {"conv_channels", conv_channels},
            {"external_feature_dim", external_feature_dim},
            {"signature_dim", signature_dim},
            {"fc2_dim", fc2_dim},
            {"fc2_stop_gradient", fc2_stop_gradient},
            {"input_height", input_height},
            {"input_width", input_width},
            {"input_channels", input_channels}};
        if (attribute_schema_kind == "custom")
            model["attribute_schema"] = schema_to_json(custom_schema);
        else
            model["attribute_schema"] = attribute_schema_kind;
        j["model"] = model;
        j["hyperparameters"] = hp.to_json();
        nlohmann::json stages_j = nlohmann::json::array();
        for (const auto& s : stages)
            stages_j.push_back({{"stage", s.stage}, {"attributes", s.attributes}});
        j["stages"] = stages_j;
        j["split"] = {{"protocol", split.protocol.kind == SplitProtocol::Kind::half
                                       ? "half"
                                       : "fixed_test_count"},
                      {"fixed_test_count", split.protocol.test_count},
                      {"seed", split.seed}};
        j["eval"] = {{"trials", eval.trials},
                     {"max_rank", eval.max_rank},
                     {"min_support", eval.min_support},
                     {"seed", eval.seed},
                     {"checkpoint", eval.checkpoint}};
        j["extract"] = {{"checkpoint", extract.checkpoint}, {"split", extract.split}};
        return j;
    }

    static RunConfig load(const std::string& path) {
        std::ifstream is(path);
        if (!is) throw ConfigError("cannot open config: " + path);
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(is);
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("config parse error in " + path + ": " + e.what());
        }
        return from_json(j);
    }
};

} // namespace reid
