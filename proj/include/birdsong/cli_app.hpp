#pragma once

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "birdsong/config.hpp"
#include "birdsong/fetch.hpp"
#include "birdsong/pipeline.hpp"

namespace birdsong::cli {

/// Entry point shared by the binary and the in-process CLI tests.
/// Exit codes: 0 success, 1 config/usage/missing-input errors, 2 partial
/// fetch failure (network or API schema).
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
    CLI::App app{"birdsong classification pipeline"};
    app.require_subcommand(1);

    std::string config_path;
    std::int64_t seed_override = -1;
    std::int64_t jobs_override = -1;
    bool paper_mode = false;
    app.add_option("--config", config_path, "pipeline config file (JSON)");
    app.add_option("--seed", seed_override, "override the config seed");
    app.add_option("--jobs", jobs_override, "worker threads for training/augmentation");
    app.add_flag("--paper-mode", paper_mode,
                 "ungrouped clip-level splits/CV, reproducing the leaky protocol");

    auto* fetch_cmd = app.add_subcommand("fetch", "download recordings from the archive");
    std::string species;
    std::int64_t fetch_limit = -1;
    std::string dest;
    fetch_cmd->add_option("--species", species, "species query string")->required();
    fetch_cmd->add_option("--limit", fetch_limit, "maximum new downloads");
    fetch_cmd->add_option("--dest", dest, "download directory (default: data dir)");

    auto* preprocess_cmd =
        app.add_subcommand("preprocess", "split, augment and cache features/images");

    auto* train_cmd = app.add_subcommand("train", "train the configured model");

    auto* evaluate_cmd = app.add_subcommand("evaluate", "evaluate on the held-out test split");
    std::int64_t cv_folds = -1;
    evaluate_cmd->add_option("--cv", cv_folds, "k-fold cross-validation (numeric models)");

    auto* ablate_cmd = app.add_subcommand("ablate", "train one CNN per configured plan");

    auto* predict_cmd = app.add_subcommand("predict", "classify one audio file");
    std::string audio_path;
    predict_cmd->add_option("audio", audio_path, "input WAV file")->required();

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            out << app.help();
            return 0;
        }
        err << "error: " << e.what() << "\n";
        return 1;
    }

    PipelineConfig cfg;
    try {
        cfg = config_path.empty() ? config_from_json(nlohmann::json::object())
                                  : load_config(config_path);
        if (seed_override >= 0) {
            cfg.seed = static_cast<std::uint64_t>(seed_override);
            cfg.split.seed = cfg.seed;
        }
        if (jobs_override > 0) cfg.jobs = static_cast<std::size_t>(jobs_override);
        if (paper_mode) cfg.paper_mode = true;
    } catch (const std::exception& e) {
        err << "config error: " << e.what() << "\n";
        return 1;
    }

    try {
        if (fetch_cmd->parsed()) {
            FetchOptions opts = cfg.fetch;
            if (fetch_limit >= 0) opts.limit = static_cast<std::size_t>(fetch_limit);
            const auto dest_dir = dest.empty() ? cfg.data_dir : std::filesystem::path(dest);
            try {
                const auto result = fetch_recordings(species, dest_dir, cfg.manifest(), opts);
                out << "downloaded " << result.downloaded.size() << " recordings ("
                    << result.skipped << " already present)\n";
                return 0;
            } catch (const NetworkError& e) {
                err << "fetch failed: " << e.what() << "\n";
                return 2;
            } catch (const ApiSchemaChanged& e) {
                err << "fetch failed: " << e.what() << "\n";
                return 2;
            }
        }
        if (preprocess_cmd->parsed()) {
            cmd_preprocess(cfg, default_recording_loader, out);
            return 0;
        }
        if (train_cmd->parsed()) {
            cmd_train(cfg, out);
            return 0;
        }
        if (evaluate_cmd->parsed()) {
            if (cv_folds > 0) cfg.cv_folds = static_cast<std::size_t>(cv_folds);
            cmd_evaluate(cfg, out);
            return 0;
        }
        if (ablate_cmd->parsed()) {
            cmd_ablate(cfg, default_recording_loader, out);
            return 0;
        }
        if (predict_cmd->parsed()) {
            cmd_predict(cfg, audio_path, out);
            return 0;
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}

inline int run(int argc, char** argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run(args);
}

}  // namespace birdsong::cli
