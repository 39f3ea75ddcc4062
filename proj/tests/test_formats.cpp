#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "reid/config.hpp"
#include "reid/pipeline.hpp"
#include "reid/plot.hpp"

using namespace reid;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("reid_fmt_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

nlohmann::json desk_config_json() {
    return nlohmann::json::parse(R"({
        "seed": 3,
        "data": {"synthetic": {"num_datasets": 2, "identities_per_dataset": 4,
                                "images_per_identity": 4, "image_height": 16, "image_width": 16,
                                "cameras": 2, "attribute_fraction": 0.5}},
        "model": {"conv_channels": [4, 8], "signature_dim": 12, "fc2_dim": 6},
        "hyperparameters": {"batch_size": 8, "stage1_steps": 4, "stage2_steps": 2,
                             "stage1_lr": 0.001, "stage2_lr": 0.0005, "eval_every": 4,
                             "eval_trials": 1},
        "split": {"protocol": "half", "seed": 5},
        "eval": {"trials": 2, "min_support": 1, "seed": 6}
    })");
}

} // namespace

TEST_CASE("configs default to the reference hyperparameters", "[formats]") {
    auto j = nlohmann::json::parse(
        R"({"data": {"synthetic": {}}})");
    auto rc = RunConfig::from_json(j);
    REQUIRE(rc.hp.dropout_keep == 0.8);
    REQUIRE(rc.hp.l2_regularization == 0.001);
    REQUIRE(rc.hp.batch_size == 64);
    REQUIRE(rc.hp.lambda == 100.0);
    REQUIRE(rc.hp.cs_alpha == 0.9);
    REQUIRE(rc.hp.stage1_lr == 1e-4);
    REQUIRE(rc.hp.stage2_lr == 1e-6);
    REQUIRE(rc.hp.adam_beta1 == 0.9);
    REQUIRE(rc.hp.adam_beta2 == 0.999);
    REQUIRE(rc.hp.adam_epsilon == 1e-8);
}

TEST_CASE("unknown config keys are rejected at any level", "[formats]") {
    auto top = desk_config_json();
    top["typo_key"] = 1;
    REQUIRE_THROWS_WITH(RunConfig::from_json(top),
                        Catch::Matchers::ContainsSubstring("typo_key"));

    auto nested = desk_config_json();
    nested["hyperparameters"]["lamda"] = 10; // misspelled
    REQUIRE_THROWS_WITH(RunConfig::from_json(nested),
                        Catch::Matchers::ContainsSubstring("lamda"));

    auto model = desk_config_json();
    model["model"]["dropout"] = 0.5;
    REQUIRE_THROWS_AS(RunConfig::from_json(model), ConfigError);

    auto synth = desk_config_json();
    synth["data"]["synthetic"]["noise"] = 0.5;
    REQUIRE_THROWS_AS(RunConfig::from_json(synth), ConfigError);
}

TEST_CASE("the effective config round-trips to an equal document", "[formats]") {
    auto rc = RunConfig::from_json(desk_config_json());
    const auto effective = rc.to_json();
    auto rc2 = RunConfig::from_json(effective);
    REQUIRE(rc2.to_json() == effective);
    // defaulted values materialize in the effective document
    REQUIRE(effective.at("hyperparameters").at("lambda") == 100.0);
    REQUIRE(effective.at("model").at("attribute_schema") == "standard");
}

TEST_CASE("config validation rejects contradictory data blocks", "[formats]") {
    auto both = desk_config_json();
    both["data"]["manifests"] = {"x/manifest.jsonl"};
    REQUIRE_THROWS_AS(RunConfig::from_json(both), ConfigError);
    auto neither = nlohmann::json::parse(R"({"data": {"manifests": []}})");
    REQUIRE_THROWS_AS(RunConfig::from_json(neither), ConfigError);
    auto bad_stage = desk_config_json();
    bad_stage["stages"] = {{{"stage", 3}}};
    REQUIRE_THROWS_AS(RunConfig::from_json(bad_stage), ConfigError);
}

TEST_CASE("synth manifests reload into the identical registry", "[formats]") {
    auto rc = RunConfig::from_json(desk_config_json());
    const auto dir = temp_dir("synth_rt");
    run_synth(rc, dir.string());

    // in-memory assembly
    const auto direct = assemble_data(rc);

    // via the written manifests
    RunConfig via = rc;
    via.synthetic.reset();
    via.manifests = {(dir / "synth0" / "manifest.jsonl").string(),
                     (dir / "synth1" / "manifest.jsonl").string()};
    const auto loaded = assemble_data(via);

    REQUIRE(loaded.registry.descriptors().size() == direct.registry.descriptors().size());
    for (std::size_t i = 0; i < loaded.registry.descriptors().size(); ++i)
        REQUIRE(loaded.registry.descriptors()[i] == direct.registry.descriptors()[i]);
    REQUIRE(loaded.registry.total_identities() == direct.registry.total_identities());
    REQUIRE(loaded.registry.class_counts() == direct.registry.class_counts());
    REQUIRE(loaded.registry.samples().size() == direct.registry.samples().size());
    for (std::size_t i = 0; i < loaded.registry.samples().size(); ++i) {
        const auto& a = loaded.registry.samples()[i];
        const auto& b = direct.registry.samples()[i];
        REQUIRE(a.sample_id == b.sample_id);
        REQUIRE(a.global_identity == b.global_identity);
        REQUIRE(a.camera_id == b.camera_id);
        REQUIRE(a.attributes == b.attributes);
        REQUIRE(a.image == b.image);
    }
    REQUIRE(loaded.registry.digest() == direct.registry.digest());
    REQUIRE(loaded.test_samples.size() == direct.test_samples.size());
    std::filesystem::remove_all(dir);
}

TEST_CASE("synth is idempotent given the seed", "[formats]") {
    auto rc = RunConfig::from_json(desk_config_json());
    const auto d1 = temp_dir("synth_a");
    const auto d2 = temp_dir("synth_b");
    run_synth(rc, d1.string());
    run_synth(rc, d2.string());
    std::size_t files = 0;
    for (const auto& entry : std::filesystem::recursive_directory_iterator(d1)) {
        if (!entry.is_regular_file()) continue;
        ++files;
        const auto rel = std::filesystem::relative(entry.path(), d1);
        REQUIRE(slurp(entry.path()) == slurp(d2 / rel));
    }
    REQUIRE(files > 0);
    std::filesystem::remove_all(d1);
    std::filesystem::remove_all(d2);
}

TEST_CASE("weight files round trip byte-identically", "[formats]") {
    ModelConfig mc;
    mc.input_height = 16;
    mc.input_width = 16;
    mc.conv_channels = {4};
    mc.signature_dim = 8;
    mc.fc2_dim = 4;
    mc.num_identities = 3;
    Model<float> m(mc, 42);
    const auto dir = temp_dir("weights");
    const auto p1 = dir / "a.weights";
    const auto p2 = dir / "b.weights";
    m.save_weights(p1.string());
    Model<float> n(mc, 0);
    n.load_weights(p1.string());
    n.save_weights(p2.string());
    REQUIRE(slurp(p1) == slurp(p2));
    std::filesystem::remove_all(dir);
}

TEST_CASE("training log CSV round trips through the parser", "[formats]") {
    TrainingLog log;
    for (int i = 0; i < 5; ++i) {
        TrainingRecord r;
        r.step = i;
        r.stage = i < 3 ? 1 : 2;
        r.step_in_stage = i < 3 ? i : i - 3;
        r.l_id = 0.1 * i + 0.013;
        r.l_cs = 1.5 / (i + 1);
        r.l_att = i == 4 ? 0.25 : 0.0;
        r.total = r.l_id + 0.06 * r.l_cs + 100.0 * r.l_att;
        if (i % 2 == 0) r.cmc_rank1_train = 0.25 * i;
        log.records.push_back(r);
    }
    const auto dir = temp_dir("csv");
    const auto path = (dir / "training_log.csv").string();
    log.write_csv(path);
    const auto back = TrainingLog::read_csv(path);
    REQUIRE(back.records.size() == log.records.size());
    for (std::size_t i = 0; i < log.records.size(); ++i) {
        REQUIRE(back.records[i].step == log.records[i].step);
        REQUIRE(back.records[i].stage == log.records[i].stage);
        REQUIRE(back.records[i].l_id == log.records[i].l_id); // %.17g is lossless
        REQUIRE(back.records[i].l_cs == log.records[i].l_cs);
        REQUIRE(back.records[i].l_att == log.records[i].l_att);
        REQUIRE(back.records[i].total == log.records[i].total);
        REQUIRE(back.records[i].cmc_rank1_train.has_value() ==
                log.records[i].cmc_rank1_train.has_value());
    }
    const std::string head = slurp(path).substr(0, 52);
    REQUIRE(head == "step,stage,l_id,l_cs,l_att,total,cmc_rank1_train\n0,1");
    std::filesystem::remove_all(dir);
}

TEST_CASE("plots are deterministic SVG documents", "[formats]") {
    const auto dir = temp_dir("plots");
    PlotSeries s;
    s.label = "x";
    for (int i = 0; i < 10; ++i) {
        s.x.push_back(i);
        s.y.push_back(std::sin(0.3 * i));
    }
    write_line_plot_svg((dir / "a.svg").string(), "t", "x", "y", {s});
    write_line_plot_svg((dir / "b.svg").string(), "t", "x", "y", {s});
    const auto a = slurp(dir / "a.svg");
    REQUIRE(a == slurp(dir / "b.svg"));
    REQUIRE(a.find("<svg") != std::string::npos);
    REQUIRE(a.find("polyline") != std::string::npos);
    std::filesystem::remove_all(dir);
}

TEST_CASE("evaluation report has the documented schema", "[formats]") {
    auto rc = RunConfig::from_json(desk_config_json());
    const auto dir = temp_dir("evalrep");
    auto train = run_training(rc, dir.string());
    REQUIRE(train.checkpoint_paths.size() == 2);

    auto result =
        run_evaluation(rc, train.checkpoint_paths.back(), (dir / "eval").string());
    const auto& rep = result.report;
    REQUIRE(rep.contains("rank1"));
    REQUIRE(rep.at("rank1").is_number());
    REQUIRE(rep.at("cmc").is_array());
    REQUIRE_FALSE(rep.at("cmc").empty());
    REQUIRE(rep.at("per_attribute_ap").is_object());
    REQUIRE(rep.contains("mean_ap"));
    REQUIRE(rep.at("split").is_object());
    REQUIRE(rep.contains("seed"));
    REQUIRE(std::filesystem::exists(dir / "eval" / "report.json"));
    REQUIRE(std::filesystem::exists(dir / "eval" / "cmc.svg"));
    REQUIRE(std::filesystem::exists(dir / "eval" / "attributes.csv"));

    // the report's rank1 equals the evaluator's value exactly
    REQUIRE(rep.at("rank1").get<double>() == result.curve.rank1());

    // digest mismatch: evaluating a checkpoint against a different model config
    RunConfig other = rc;
    other.signature_dim = 24;
    REQUIRE_THROWS_WITH(run_evaluation(other, train.checkpoint_paths.back(), ""),
                        Catch::Matchers::ContainsSubstring("digest"));
    std::filesystem::remove_all(dir);
}

TEST_CASE("extract writes a loadable store for the chosen split", "[formats]") {
    auto rc = RunConfig::from_json(desk_config_json());
    const auto dir = temp_dir("extract");
    auto train = run_training(rc, dir.string());
    rc.extract.split = "test";
    const auto store_path =
        run_extract(rc, train.checkpoint_paths.back(), (dir / "sig").string());
    auto store = SignatureStore::load(store_path);
    const auto data = assemble_data(rc);
    REQUIRE(store.size() == static_cast<std::int64_t>(data.test_samples.size()));
    REQUIRE(store.dim() == 12);
    std::filesystem::remove_all(dir);
}
