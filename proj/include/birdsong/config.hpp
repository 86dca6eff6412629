#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "birdsong/augment.hpp"
#include "birdsong/cnn.hpp"
#include "birdsong/core.hpp"
#include "birdsong/dsp.hpp"
#include "birdsong/evaluate.hpp"
#include "birdsong/fetch.hpp"

namespace birdsong {

enum class RebalanceStrategy { none, downsample, smote_tomek, custom };

inline RebalanceStrategy rebalance_strategy_from_string(const std::string& s) {
    if (s == "none") return RebalanceStrategy::none;
    if (s == "downsample") return RebalanceStrategy::downsample;
    if (s == "smote_tomek") return RebalanceStrategy::smote_tomek;
    if (s == "custom") return RebalanceStrategy::custom;
    throw ParseError("unknown rebalance strategy '" + s + "'");
}

struct RebalanceConfig {
    RebalanceStrategy strategy = RebalanceStrategy::none;
    std::size_t low = 10;    // custom: oversample classes below this
    std::size_t high = 100;  // custom/downsample target for large classes
    std::size_t k = 5;       // SMOTE neighbours
};

struct ModelConfig {
    std::string kind = "cnn";  // knn | forest | cnn
    // knn
    std::size_t knn_k = 5;
    // forest
    std::size_t n_trees = 100;
    std::size_t max_features = 4;
    // cnn
    std::size_t epochs = 20;
    std::size_t patience = 3;
    double learning_rate = 1e-3;
    std::size_t batch_size = 32;
    FinalActivation final_activation = FinalActivation::softmax;
};

/// Everything a pipeline run needs, loaded from one JSON config file.
/// CLI flags override individual keys.
struct PipelineConfig {
    std::filesystem::path data_dir = "data";
    std::filesystem::path cache_dir = "cache";
    std::filesystem::path output_dir = "out";
    std::filesystem::path manifest_path;  // default: data_dir / "manifest.csv"

    SpectrogramParams spectrogram;
    bool include_c0 = false;
    std::vector<AugmentPlan> plans;
    bool apply_noise_reduce = false;
    double min_image_std = 0.0;  // 0 disables low-feature filtering
    bool cache_clips = true;

    RebalanceConfig rebalance;
    ModelConfig model;
    SplitSpec split;
    VoteMode vote = VoteMode::majority;
    std::size_t cv_folds = 0;  // > 0: evaluate numeric models by k-fold CV
    bool paper_mode = false;   // ungrouped clip-level CV, reproducing the leaky protocol

    FetchOptions fetch;
    std::uint64_t seed = 42;
    std::size_t jobs = 1;

    std::filesystem::path manifest() const {
        return manifest_path.empty() ? data_dir / "manifest.csv" : manifest_path;
    }
};

namespace detail {

inline AugmentPlan plan_from_json(const nlohmann::json& j) {
    AugmentPlan plan;
    plan.window_s = j.value("window_s", plan.window_s);
    plan.stride_s = j.value("stride_s", plan.stride_s);
    plan.min_len_s = j.value("min_len_s", plan.min_len_s);
    plan.head_limit_s = j.value("head_limit_s", plan.head_limit_s);
    plan.with_origin = j.value("origin", plan.with_origin);
    if (j.contains("transforms")) {
        const auto& t = j["transforms"];
        auto& tf = plan.transforms;
        tf.nonsilent = t.value("nonsilent", tf.nonsilent);
        tf.nonsilent_top_db = t.value("nonsilent_top_db", tf.nonsilent_top_db);
        tf.highpass = t.value("highpass", tf.highpass);
        tf.highpass_cutoff_hz = t.value("highpass_cutoff_hz", tf.highpass_cutoff_hz);
        tf.pitch_shift = t.value("pitch_shift", tf.pitch_shift);
        tf.pitch_steps = t.value("pitch_steps", tf.pitch_steps);
        tf.wrap = t.value("wrap", tf.wrap);
        tf.gaussian = t.value("gaussian", tf.gaussian);
        tf.gaussian_snr_db = t.value("gaussian_snr_db", tf.gaussian_snr_db);
    }
    plan.validate();
    return plan;
}

inline nlohmann::json plan_to_json(const AugmentPlan& p) {
    return {{"window_s", p.window_s},
            {"stride_s", p.stride_s},
            {"min_len_s", p.min_len_s},
            {"head_limit_s", p.head_limit_s},
            {"origin", p.with_origin},
            {"transforms",
             {{"nonsilent", p.transforms.nonsilent},
              {"nonsilent_top_db", p.transforms.nonsilent_top_db},
              {"highpass", p.transforms.highpass},
              {"highpass_cutoff_hz", p.transforms.highpass_cutoff_hz},
              {"pitch_shift", p.transforms.pitch_shift},
              {"pitch_steps", p.transforms.pitch_steps},
              {"wrap", p.transforms.wrap},
              {"gaussian", p.transforms.gaussian},
              {"gaussian_snr_db", p.transforms.gaussian_snr_db}}}};
}

}  // namespace detail

inline PipelineConfig config_from_json(const nlohmann::json& j) {
    PipelineConfig cfg;
    if (j.contains("paths")) {
        const auto& p = j["paths"];
        cfg.data_dir = p.value("data_dir", cfg.data_dir.string());
        cfg.cache_dir = p.value("cache_dir", cfg.cache_dir.string());
        cfg.output_dir = p.value("output_dir", cfg.output_dir.string());
        if (p.contains("manifest")) cfg.manifest_path = p["manifest"].get<std::string>();
    }
    if (j.contains("spectrogram")) {
        const auto& s = j["spectrogram"];
        cfg.spectrogram.n_fft = s.value("n_fft", cfg.spectrogram.n_fft);
        cfg.spectrogram.hop = s.value("hop", cfg.spectrogram.hop);
        cfg.spectrogram.n_mels = s.value("n_mels", cfg.spectrogram.n_mels);
        cfg.spectrogram.fmin = s.value("fmin", cfg.spectrogram.fmin);
        cfg.spectrogram.fmax = s.value("fmax", cfg.spectrogram.fmax);
        cfg.spectrogram.sample_rate = s.value("sample_rate", cfg.spectrogram.sample_rate);
        cfg.include_c0 = s.value("include_c0", cfg.include_c0);
        cfg.spectrogram.validate();
    }
    if (j.contains("plans"))
        for (const auto& p : j["plans"]) cfg.plans.push_back(detail::plan_from_json(p));
    cfg.apply_noise_reduce = j.value("noise_reduce", cfg.apply_noise_reduce);
    cfg.min_image_std = j.value("min_image_std", cfg.min_image_std);
    cfg.cache_clips = j.value("cache_clips", cfg.cache_clips);

    if (j.contains("rebalance")) {
        const auto& r = j["rebalance"];
        cfg.rebalance.strategy =
            rebalance_strategy_from_string(r.value("strategy", std::string("none")));
        cfg.rebalance.low = r.value("low", cfg.rebalance.low);
        cfg.rebalance.high = r.value("high", cfg.rebalance.high);
        cfg.rebalance.k = r.value("k", cfg.rebalance.k);
    }
    if (j.contains("model")) {
        const auto& m = j["model"];
        cfg.model.kind = m.value("kind", cfg.model.kind);
        cfg.model.knn_k = m.value("knn_k", cfg.model.knn_k);
        cfg.model.n_trees = m.value("n_trees", cfg.model.n_trees);
        cfg.model.max_features = m.value("max_features", cfg.model.max_features);
        cfg.model.epochs = m.value("epochs", cfg.model.epochs);
        cfg.model.patience = m.value("patience", cfg.model.patience);
        cfg.model.learning_rate = m.value("lr", cfg.model.learning_rate);
        cfg.model.batch_size = m.value("batch_size", cfg.model.batch_size);
        const std::string act = m.value("final_activation", std::string("softmax"));
        if (act == "sigmoid")
            cfg.model.final_activation = FinalActivation::sigmoid;
        else if (act != "softmax")
            throw ParseError("unknown final activation '" + act + "'");
    }
    if (j.contains("split")) {
        const auto& s = j["split"];
        cfg.split.train = s.value("train", cfg.split.train);
        cfg.split.val = s.value("val", cfg.split.val);
        cfg.split.test = s.value("test", cfg.split.test);
        cfg.split.group_by_recording = s.value("group_by_recording", true);
        cfg.split.validate();
    }
    const std::string vote = j.value("vote", std::string("majority"));
    if (vote == "probability")
        cfg.vote = VoteMode::probability;
    else if (vote != "majority")
        throw ParseError("unknown vote mode '" + vote + "'");
    cfg.cv_folds = j.value("cv_folds", cfg.cv_folds);
    cfg.paper_mode = j.value("paper_mode", cfg.paper_mode);

    if (j.contains("fetch")) {
        const auto& f = j["fetch"];
        cfg.fetch.base_url = f.value("base_url", cfg.fetch.base_url);
        cfg.fetch.rate_limit_ms = f.value("rate_limit_ms", cfg.fetch.rate_limit_ms);
        cfg.fetch.limit = f.value("limit", cfg.fetch.limit);
    }
    cfg.seed = j.value("seed", cfg.seed);
    cfg.jobs = j.value("jobs", cfg.jobs);

    // default plan: the paper's 10 s windows, discard tails under 5 s
    if (cfg.plans.empty()) cfg.plans.emplace_back();
    cfg.split.seed = cfg.seed;

    if (const char* env = std::getenv("BIRDSONG_CACHE"); env && *env) cfg.cache_dir = env;
    return cfg;
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open config " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("config: ") + e.what());
    }
    return config_from_json(j);
}

}  // namespace birdsong
