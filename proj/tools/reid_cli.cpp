// Command-line front end: synthetic corpus generation, two-stage training,
// signature extraction, evaluation and training-curve plots.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "reid/reid.hpp"

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    std::string resume_path;
    std::int64_t seed_override = -1;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool needs_config = true) {
    auto* opt = cmd->add_option("--config", args.config_path, "run configuration (JSON)");
    if (needs_config) opt->required();
    cmd->add_option("--out", args.out_dir, "output directory");
    cmd->add_option("--seed", args.seed_override, "override the config seed");
}

reid::RunConfig load_config(const CommonArgs& args) {
    reid::RunConfig rc = reid::RunConfig::load(args.config_path);
    if (args.seed_override >= 0) rc.seed = static_cast<std::uint64_t>(args.seed_override);
    if (!args.out_dir.empty()) rc.out_dir = args.out_dir;
    if (rc.out_dir.empty()) throw reid::ConfigError("no output directory (config out_dir or --out)");
    return rc;
}

std::string config_base_dir(const CommonArgs& args) {
    return std::filesystem::path(args.config_path).parent_path().string();
}

std::string resolve_checkpoint(const CommonArgs& args, const std::string& from_config,
                               const char* what) {
    if (from_config.empty())
        throw reid::ConfigError(std::string(what) + " needs config.eval.checkpoint or "
                                                    "config.extract.checkpoint");
    return reid::detail::resolve(config_base_dir(args), from_config).string();
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"multi-dataset person re-identification toolkit"};
    app.require_subcommand(1);

    CommonArgs synth_args, train_args, extract_args, eval_args, plot_args;
    std::string plot_log_csv;

    auto* synth = app.add_subcommand("synth", "generate a synthetic manifest corpus");
    add_common(synth, synth_args);

    auto* train = app.add_subcommand("train", "run the configured stage plan");
    add_common(train, train_args);
    train->add_option("--resume", train_args.resume_path, "resume from a checkpoint");

    auto* extract = app.add_subcommand("extract", "write a signature store for a sample split");
    add_common(extract, extract_args);

    auto* eval = app.add_subcommand("eval", "evaluate CMC and attribute AP on the test split");
    add_common(eval, eval_args);

    auto* plot = app.add_subcommand("plot", "render training curves from a training log CSV");
    plot->add_option("--log", plot_log_csv, "training_log.csv path")->required();
    add_common(plot, plot_args, /*needs_config=*/false);

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) {
            auto rc = load_config(synth_args);
            reid::run_synth(rc, rc.out_dir);
            std::printf("synth: wrote %d dataset manifest(s) under %s\n",
                        rc.synthetic ? rc.synthetic->num_datasets : 0, rc.out_dir.c_str());
        } else if (train->parsed()) {
            auto rc = load_config(train_args);
            auto result = reid::run_training(rc, rc.out_dir, config_base_dir(train_args),
                                             train_args.resume_path);
            const auto& recs = result.log.records;
            std::printf("train: %zu steps logged, %zu checkpoint(s)\n", recs.size(),
                        result.checkpoint_paths.size());
            if (!recs.empty()) {
                std::printf("train: final total loss %.6g", recs.back().total);
                for (auto it = recs.rbegin(); it != recs.rend(); ++it) {
                    if (it->cmc_rank1_train) {
                        std::printf(", last train rank-1 %.4f", *it->cmc_rank1_train);
                        break;
                    }
                }
                std::printf("\n");
            }
        } else if (extract->parsed()) {
            auto rc = load_config(extract_args);
            const auto ckpt = resolve_checkpoint(extract_args, rc.extract.checkpoint, "extract");
            const auto path =
                reid::run_extract(rc, ckpt, rc.out_dir, config_base_dir(extract_args));
            std::printf("extract: wrote %s\n", path.c_str());
        } else if (eval->parsed()) {
            auto rc = load_config(eval_args);
            const auto ckpt = resolve_checkpoint(eval_args, rc.eval.checkpoint, "eval");
            auto result = reid::run_evaluation(rc, ckpt, rc.out_dir, config_base_dir(eval_args));
            std::printf("eval: rank-1 %.4f over %d trial(s)\n", result.curve.rank1(),
                        result.curve.trials);
            if (result.attributes)
                std::printf("eval: attribute mean AP %.4f (%d attribute(s) included)\n",
                            result.attributes->mean_ap, result.attributes->included_count);
        } else if (plot->parsed()) {
            if (plot_args.out_dir.empty())
                throw reid::ConfigError("plot needs --out");
            reid::run_plot(plot_log_csv, plot_args.out_dir);
            std::printf("plot: wrote curves under %s\n", plot_args.out_dir.c_str());
        }
    } catch (const reid::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const reid::DivergenceError& e) {
        std::fprintf(stderr, "divergence: %s\n", e.what());
        return 3;
    } catch (const reid::IoError& e) {
        std::fprintf(stderr, "io error: %s\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
