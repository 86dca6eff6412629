#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "birdsong/audio.hpp"
#include "birdsong/augment.hpp"
#include "birdsong/config.hpp"
#include "birdsong/core.hpp"
#include "birdsong/denoise.hpp"
#include "birdsong/evaluate.hpp"
#include "birdsong/features.hpp"
#include "birdsong/image.hpp"
#include "birdsong/model_io.hpp"
#include "birdsong/rebalance.hpp"

namespace birdsong {

namespace detail {

inline std::string fs_safe(const std::string& id) {
    std::string out = id;
    for (auto& c : out)
        if (c == ':' || c == '/' || c == '\\' || c == ' ') c = '_';
    return out;
}

inline std::string source_of_clip_id(const std::string& clip_id) {
    const auto pos = clip_id.find(':');
    return pos == std::string::npos ? clip_id : clip_id.substr(0, pos);
}

inline std::string join_tags(const std::vector<std::string>& tags) {
    std::string out;
    for (std::size_t i = 0; i < tags.size(); ++i) {
        if (i) out += '+';
        out += tags[i];
    }
    return out.empty() ? "origin" : out;
}

}  // namespace detail

/// Expand every configured plan over the manifest. Noise reduction, when
/// enabled, runs on the whole recording before splitting.
inline ApplyPlanResult generate_clips(const DatasetManifest& manifest, const PipelineConfig& cfg,
                                      const RecordingLoader& base_loader = default_recording_loader) {
    RecordingLoader loader = base_loader;
    if (cfg.apply_noise_reduce) {
        const SpectrogramParams params = cfg.spectrogram;
        loader = [base_loader, params](const RecordingEntry& e) {
            return noise_reduce(base_loader(e), params);
        };
    }

    ApplyPlanResult all;
    for (const auto& plan : cfg.plans) {
        auto part = apply_plan(manifest, plan, cfg.seed, loader, cfg.spectrogram);
        all.clips.insert(all.clips.end(), std::make_move_iterator(part.clips.begin()),
                         std::make_move_iterator(part.clips.end()));
        all.failures.insert(all.failures.end(), part.failures.begin(), part.failures.end());
    }
    return all;
}

struct PreprocessSummary {
    std::size_t clips_written = 0;
    std::size_t clips_rejected = 0;  // low-feature or too short
    std::map<std::string, std::size_t> per_class;
    std::vector<std::pair<std::string, std::string>> failures;
};

/// Cache one clip set: FeatureVector CSV, 64x64 PGMs with an index CSV, and
/// (optionally) the augmented clip audio under
/// cache/clips/<source_id>/<start_ms>_<tags>.wav.
inline PreprocessSummary cmd_preprocess(const PipelineConfig& cfg,
                                        const RecordingLoader& loader = default_recording_loader,
                                        std::ostream& log = std::cout) {
    const auto manifest = load_manifest(cfg.manifest());
    auto generated = generate_clips(manifest, cfg, loader);

    std::filesystem::create_directories(cfg.cache_dir / "images");
    std::ofstream features_csv(cfg.cache_dir / "features.csv");
    if (!features_csv) throw Error("cannot write features.csv");
    features_csv << "clip_id";
    for (std::size_t i = 0; i < kFeatureDim; ++i) features_csv << ",f" << i;
    features_csv << ",label\n";
    features_csv.precision(17);

    std::ofstream index_csv(cfg.cache_dir / "images.csv");
    if (!index_csv) throw Error("cannot write images.csv");
    index_csv << "clip_id,source_id,label,category,start_ms,tags,path\n";

    PreprocessSummary summary;
    summary.failures = generated.failures;

    for (const auto& clip : generated.clips) {
        const std::string clip_id = clip.clip_id();
        try {
            if (clip.samples.samples.size() < cfg.spectrogram.n_fft)
                throw TooShort("clip shorter than one analysis frame");

            const auto spec = mel_spectrogram(clip.samples, cfg.spectrogram);
            ClipImage img = render_image(spec);
            img.clip_id = clip_id;
            if (cfg.min_image_std > 0.0 && pixel_stddev(img) < cfg.min_image_std) {
                ++summary.clips_rejected;
                continue;
            }
            const FeatureVector fv = feature_vector(clip.samples, cfg.spectrogram, cfg.include_c0);

            const auto img_path = cfg.cache_dir / "images" / (detail::fs_safe(clip_id) + ".pgm");
            save_pgm(img_path, img);

            features_csv << detail::csv_escape(clip_id);
            for (double v : fv.values) features_csv << ',' << v;
            features_csv << ',' << detail::csv_escape(clip.label) << '\n';

            const auto start_ms = static_cast<long long>(std::llround(clip.start_s * 1000.0));
            index_csv << detail::csv_escape(clip_id) << ',' << detail::csv_escape(clip.source_id)
                      << ',' << detail::csv_escape(clip.label) << ',' << to_string(clip.category)
                      << ',' << start_ms << ',' << detail::join_tags(clip.augmentations) << ','
                      << img_path.generic_string() << '\n';

            if (cfg.cache_clips) {
                const auto clip_dir = cfg.cache_dir / "clips" / detail::fs_safe(clip.source_id);
                std::filesystem::create_directories(clip_dir);
                save_wav(clip_dir / (std::to_string(start_ms) + "_" +
                                     detail::join_tags(clip.augmentations) + ".wav"),
                         clip.samples);
            }

            ++summary.clips_written;
            ++summary.per_class[clip.label];
        } catch (const std::exception& e) {
            summary.failures.emplace_back(clip_id, e.what());
        }
    }

    log << "preprocessed " << summary.clips_written << " clips";
    if (summary.clips_rejected > 0) log << " (" << summary.clips_rejected << " low-feature rejected)";
    log << "\n";
    for (const auto& [label, count] : summary.per_class)
        log << "  " << label << ": " << count << " clips\n";
    if (!summary.failures.empty()) {
        log << summary.failures.size() << " failures:\n";
        for (const auto& [id, msg] : summary.failures) log << "  " << id << ": " << msg << "\n";
    }
    return summary;
}

struct CachedFeatures {
    std::vector<std::string> clip_ids;
    std::vector<std::string> source_ids;
    std::vector<int> labels;
    std::vector<std::vector<double>> points;
};

inline CachedFeatures load_feature_cache(const PipelineConfig& cfg,
                                         const std::vector<std::string>& class_table) {
    std::ifstream in(cfg.cache_dir / "features.csv");
    if (!in) throw Error("feature cache not found; run preprocess first");

    CachedFeatures cache;
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = detail::split_csv_line(line);
        if (f.size() != kFeatureDim + 2) throw ParseError("malformed features.csv row");
        cache.clip_ids.push_back(f[0]);
        cache.source_ids.push_back(detail::source_of_clip_id(f[0]));
        std::vector<double> point(kFeatureDim);
        for (std::size_t i = 0; i < kFeatureDim; ++i) point[i] = std::stod(f[1 + i]);
        cache.points.push_back(std::move(point));
        const auto it = std::find(class_table.begin(), class_table.end(), f.back());
        if (it == class_table.end())
            throw ParseError("cached label '" + f.back() + "' not in the manifest class table");
        cache.labels.push_back(static_cast<int>(it - class_table.begin()));
    }
    return cache;
}

struct CachedImages {
    std::vector<std::string> clip_ids;
    std::vector<std::string> source_ids;
    std::vector<int> labels;
    std::vector<ClipImage> images;
};

inline CachedImages load_image_cache(const PipelineConfig& cfg,
                                     const std::vector<std::string>& class_table) {
    std::ifstream in(cfg.cache_dir / "images.csv");
    if (!in) throw Error("image cache not found; run preprocess first");

    CachedImages cache;
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = detail::split_csv_line(line);
        if (f.size() != 7) throw ParseError("malformed images.csv row");
        cache.clip_ids.push_back(f[0]);
        cache.source_ids.push_back(f[1]);
        const auto it = std::find(class_table.begin(), class_table.end(), f[2]);
        if (it == class_table.end())
            throw ParseError("cached label '" + f[2] + "' not in the manifest class table");
        cache.labels.push_back(static_cast<int>(it - class_table.begin()));
        cache.images.push_back(load_pgm(f[6]));
        cache.images.back().clip_id = f[0];
    }
    return cache;
}

namespace detail {

inline NumericSet rebalance_numeric(const NumericSet& set, const RebalanceConfig& rb,
                                    std::uint64_t seed) {
    switch (rb.strategy) {
        case RebalanceStrategy::none: return set;
        case RebalanceStrategy::downsample: return random_downsample(set, rb.high, seed);
        case RebalanceStrategy::smote_tomek: return smote_tomek(set, rb.k, seed);
        case RebalanceStrategy::custom:
            return custom_rebalance(set, rb.low, rb.high, rb.k, seed);
    }
    return set;
}

/// Image-path rebalancing. Downsampling drops images; oversampling
/// duplicates clip references, re-noising each copy from the cached clip
/// audio under a fresh seed when that audio is available.
inline void rebalance_images(std::vector<ClipImage>& images, std::vector<int>& labels,
                             std::vector<std::string>& sources, const PipelineConfig& cfg) {
    const auto& rb = cfg.rebalance;
    if (rb.strategy == RebalanceStrategy::none) return;

    struct Ref {
        std::size_t index;
    };
    LabeledSet<Ref> set;
    for (std::size_t i = 0; i < images.size(); ++i) {
        set.items.push_back({i});
        set.labels.push_back(labels[i]);
    }

    const auto counts = set.class_counts();
    std::size_t max_count = 0;
    for (const auto& [cls, n] : counts) max_count = std::max(max_count, n);

    std::size_t down_target = std::numeric_limits<std::size_t>::max();
    std::size_t up_target = 0;
    if (rb.strategy == RebalanceStrategy::downsample) down_target = rb.high;
    if (rb.strategy == RebalanceStrategy::smote_tomek) up_target = max_count;
    if (rb.strategy == RebalanceStrategy::custom) {
        down_target = rb.high;
        up_target = rb.low;
    }

    LabeledSet<Ref> balanced = set;
    if (down_target != std::numeric_limits<std::size_t>::max())
        balanced = random_downsample(balanced, down_target, derive_seed(cfg.seed, "img.down"));
    if (up_target > 0)
        balanced = oversample_duplicate(balanced, up_target, derive_seed(cfg.seed, "img.dup"));

    std::vector<ClipImage> new_images;
    std::vector<int> new_labels;
    std::vector<std::string> new_sources;
    std::map<std::size_t, std::size_t> copy_count;
    for (std::size_t i = 0; i < balanced.items.size(); ++i) {
        const std::size_t src = balanced.items[i].index;
        const std::size_t copy = copy_count[src]++;
        ClipImage img = images[src];
        if (copy > 0) {
            // re-render the duplicate from cached audio with fresh noise
            const auto clip_id = images[src].clip_id;
            const auto start = clip_id.find(':');
            const auto second = clip_id.find(':', start + 1);
            if (start != std::string::npos) {
                const std::string source = clip_id.substr(0, start);
                const std::string start_ms =
                    clip_id.substr(start + 1, second == std::string::npos ? std::string::npos
                                                                          : second - start - 1);
                for (const auto& entry : std::filesystem::directory_iterator(
                         cfg.cache_dir / "clips" / fs_safe(source),
                         std::filesystem::directory_options::skip_permission_denied)) {
                    const auto name = entry.path().filename().string();
                    if (name.rfind(start_ms + "_", 0) != 0) continue;
                    try {
                        ClipRecord clip;
                        clip.samples = load_wav(entry.path());
                        clip = add_gaussian_noise(clip, 20.0,
                                                  derive_seed(cfg.seed, "dup.noise",
                                                              fnv1a(clip_id), copy));
                        img = render_image(mel_spectrogram(clip.samples, cfg.spectrogram));
                        img.clip_id = clip_id;
                    } catch (const std::exception&) {
                        // fall back to the plain duplicate
                    }
                    break;
                }
            }
        }
        new_images.push_back(std::move(img));
        new_labels.push_back(balanced.labels[i]);
        new_sources.push_back(sources[src]);
    }
    images = std::move(new_images);
    labels = std::move(new_labels);
    sources = std::move(new_sources);
}

}  // namespace detail

struct TrainOutcome {
    std::filesystem::path artifact_path;
    std::optional<TrainHistory> history;  // CNN only
    std::size_t train_count = 0;
};

/// Train the configured model on the cached clips: split (grouped by
/// recording unless paper_mode), rebalance the training partition only,
/// fit, and write the model artifact (plus history for the CNN).
inline TrainOutcome cmd_train(const PipelineConfig& cfg, std::ostream& log = std::cout) {
    const auto manifest = load_manifest(cfg.manifest());
    if (manifest.class_table.empty()) throw Error("manifest has no classes");
    std::filesystem::create_directories(cfg.output_dir);

    SplitSpec split = cfg.split;
    split.seed = cfg.seed;
    split.group_by_recording = !cfg.paper_mode && cfg.split.group_by_recording;

    ModelArtifact artifact;
    artifact.class_table = manifest.class_table;
    const int n_classes = static_cast<int>(manifest.class_table.size());

    TrainOutcome outcome;
    outcome.artifact_path = cfg.output_dir / "model.bsng";

    if (cfg.model.kind == "knn" || cfg.model.kind == "forest") {
        const auto cache = load_feature_cache(cfg, manifest.class_table);
        std::vector<std::string> groups = split.group_by_recording ? cache.source_ids
                                                                   : cache.clip_ids;
        const auto idx = split_indices(cache.labels, groups, split);

        NumericSet train;
        for (std::size_t i : idx.train) {
            train.items.push_back(cache.points[i]);
            train.labels.push_back(cache.labels[i]);
        }
        if (train.items.empty()) throw EmptyTrainingSet("no training clips after split");
        train = detail::rebalance_numeric(train, cfg.rebalance, derive_seed(cfg.seed, "rebalance"));
        outcome.train_count = train.size();

        if (cfg.model.kind == "knn") {
            artifact.kind = ModelKind::knn;
            artifact.hyper_params = {{"kind", "knn"}, {"k", cfg.model.knn_k}};
            artifact.model =
                knn_fit(train, std::min(cfg.model.knn_k, train.size()), n_classes);
        } else {
            artifact.kind = ModelKind::forest;
            artifact.hyper_params = {{"kind", "forest"},
                                     {"n_trees", cfg.model.n_trees},
                                     {"max_features", cfg.model.max_features}};
            artifact.model = forest_fit(train, cfg.model.n_trees, cfg.model.max_features,
                                        derive_seed(cfg.seed, "forest"), n_classes);
        }
    } else if (cfg.model.kind == "cnn") {
        auto cache = load_image_cache(cfg, manifest.class_table);
        std::vector<std::string> groups = split.group_by_recording ? cache.source_ids
                                                                   : cache.clip_ids;
        const auto idx = split_indices(cache.labels, groups, split);

        std::vector<ClipImage> train_images, val_images;
        std::vector<int> train_labels, val_labels;
        std::vector<std::string> train_sources;
        for (std::size_t i : idx.train) {
            train_images.push_back(cache.images[i]);
            train_labels.push_back(cache.labels[i]);
            train_sources.push_back(cache.source_ids[i]);
        }
        for (std::size_t i : idx.val) {
            val_images.push_back(cache.images[i]);
            val_labels.push_back(cache.labels[i]);
        }
        if (train_images.empty()) throw EmptyTrainingSet("no training clips after split");
        detail::rebalance_images(train_images, train_labels, train_sources, cfg);
        outcome.train_count = train_images.size();

        CnnConfig cnn_cfg;
        cnn_cfg.n_classes = static_cast<std::size_t>(n_classes);
        cnn_cfg.final_activation = cfg.model.final_activation;
        CnnModel model = CnnModel::create(cnn_cfg, cfg.seed);
        outcome.history = cnn_train(model, train_images, train_labels, val_images, val_labels,
                                    cfg.model.epochs, cfg.model.patience, cfg.seed,
                                    cfg.model.learning_rate, cfg.model.batch_size, cfg.jobs);

        artifact.kind = ModelKind::cnn;
        artifact.hyper_params = {
            {"kind", "cnn"},
            {"epochs", cfg.model.epochs},
            {"patience", cfg.model.patience},
            {"lr", cfg.model.learning_rate},
            {"batch_size", cfg.model.batch_size},
            {"final_activation",
             cfg.model.final_activation == FinalActivation::sigmoid ? "sigmoid" : "softmax"}};
        artifact.model = std::move(model);

        nlohmann::json hist = nlohmann::json::array();
        for (const auto& e : outcome.history->epochs)
            hist.push_back({{"epoch", e.epoch},
                            {"train_loss", e.train_loss},
                            {"val_loss", e.val_loss},
                            {"val_accuracy", e.val_accuracy}});
        nlohmann::json hist_doc{{"epochs", hist},
                                {"best_epoch", outcome.history->best_epoch},
                                {"stopped_early", outcome.history->stopped_early}};
        std::ofstream hist_out(cfg.output_dir / "history.json");
        hist_out << hist_doc.dump(2) << '\n';
    } else {
        throw ParseError("unknown model kind '" + cfg.model.kind + "'");
    }

    save_model_file(outcome.artifact_path, artifact);
    log << "trained " << cfg.model.kind << " on " << outcome.train_count << " clips -> "
        << outcome.artifact_path.string() << "\n";
    return outcome;
}

struct EvaluateOutcome {
    MetricsReport report;
    std::filesystem::path report_json;
    std::filesystem::path report_txt;
};

namespace detail {

inline void write_report(const PipelineConfig& cfg, const MetricsReport& report,
                         const std::vector<std::string>& class_table, const std::string& mode,
                         EvaluateOutcome& outcome) {
    std::filesystem::create_directories(cfg.output_dir);
    outcome.report_json = cfg.output_dir / "report.json";
    outcome.report_txt = cfg.output_dir / "report.txt";

    nlohmann::json doc = report.to_json();
    doc["mode"] = mode;
    doc["class_table"] = class_table;
    std::ofstream json_out(outcome.report_json);
    json_out << doc.dump(2) << '\n';

    std::ofstream txt_out(outcome.report_txt);
    txt_out << format_metrics_table(report, class_table);

    save_confusion_csv(cfg.output_dir / "confusion.csv", report, class_table);
}

}  // namespace detail

/// Evaluate the trained artifact on the held-out test partition, or (for
/// numeric models with cv_folds > 0) by k-fold cross-validation over the
/// whole cache. paper_mode switches the folds to ungrouped clip level.
inline EvaluateOutcome cmd_evaluate(const PipelineConfig& cfg, std::ostream& log = std::cout) {
    const auto manifest = load_manifest(cfg.manifest());
    const auto& class_table = manifest.class_table;
    EvaluateOutcome outcome;

    const bool cross_validate = cfg.cv_folds > 0 && cfg.model.kind != "cnn";

    if (cross_validate) {
        const auto cache = load_feature_cache(cfg, class_table);
        if (cache.points.empty()) throw Error("feature cache is empty");
        const bool grouped = !cfg.paper_mode && cfg.split.group_by_recording;
        std::vector<std::string> groups = grouped ? cache.source_ids : cache.clip_ids;

        const auto folds = kfold(cache.labels, groups, cfg.cv_folds, cfg.seed);
        Matrix predictions(cache.points.size(), class_table.size(), 0.0);
        for (const auto& [train_idx, test_idx] : folds) {
            NumericSet train;
            for (std::size_t i : train_idx) {
                train.items.push_back(cache.points[i]);
                train.labels.push_back(cache.labels[i]);
            }
            train = detail::rebalance_numeric(train, cfg.rebalance,
                                              derive_seed(cfg.seed, "rebalance"));

            ModelArtifact fold_model;
            fold_model.class_table = class_table;
            if (cfg.model.kind == "knn") {
                fold_model.kind = ModelKind::knn;
                fold_model.model = knn_fit(train, std::min(cfg.model.knn_k, train.size()),
                                           static_cast<int>(class_table.size()));
            } else if (cfg.model.kind == "forest") {
                fold_model.kind = ModelKind::forest;
                fold_model.model =
                    forest_fit(train, cfg.model.n_trees, cfg.model.max_features,
                               derive_seed(cfg.seed, "forest"), static_cast<int>(class_table.size()));
            } else {
                throw ParseError("unknown model kind '" + cfg.model.kind + "'");
            }
            for (std::size_t i : test_idx) {
                const auto probs = predict_probabilities(fold_model, cache.points[i]);
                for (std::size_t c = 0; c < probs.size(); ++c) predictions(i, c) = probs[c];
            }
        }

        outcome.report = compute_metrics(predictions, cache.labels);
        std::vector<ClipPrediction> clip_preds(cache.points.size());
        std::map<std::string, int> truth;
        for (std::size_t i = 0; i < cache.points.size(); ++i) {
            clip_preds[i].recording_id = cache.source_ids[i];
            clip_preds[i].probs.assign(predictions.data.begin() +
                                           static_cast<std::ptrdiff_t>(i * predictions.cols),
                                       predictions.data.begin() +
                                           static_cast<std::ptrdiff_t>((i + 1) * predictions.cols));
            truth[cache.source_ids[i]] = cache.labels[i];
        }
        outcome.report.audio_accuracy = audio_accuracy(vote_audio(clip_preds, cfg.vote), truth);
        detail::write_report(cfg, outcome.report, class_table,
                             std::to_string(cfg.cv_folds) + "-fold cv" +
                                 (grouped ? " (grouped)" : " (ungrouped)"),
                             outcome);
        log << format_metrics_table(outcome.report, class_table);
        return outcome;
    }

    const auto artifact_path = cfg.output_dir / "model.bsng";
    if (!std::filesystem::exists(artifact_path))
        throw Error("model artifact not found at " + artifact_path.string() +
                    "; run train first");
    const auto artifact = load_model_file(artifact_path);

    SplitSpec split = cfg.split;
    split.seed = cfg.seed;
    split.group_by_recording = !cfg.paper_mode && cfg.split.group_by_recording;

    Matrix predictions;
    std::vector<int> labels;
    std::vector<std::string> sources;

    if (artifact.kind == ModelKind::cnn) {
        const auto cache = load_image_cache(cfg, class_table);
        std::vector<std::string> groups = split.group_by_recording ? cache.source_ids
                                                                   : cache.clip_ids;
        const auto idx = split_indices(cache.labels, groups, split);
        std::vector<ClipImage> test_images;
        for (std::size_t i : idx.test) {
            test_images.push_back(cache.images[i]);
            labels.push_back(cache.labels[i]);
            sources.push_back(cache.source_ids[i]);
        }
        predictions = cnn_forward(std::get<CnnModel>(artifact.model), test_images);
    } else {
        const auto cache = load_feature_cache(cfg, class_table);
        std::vector<std::string> groups = split.group_by_recording ? cache.source_ids
                                                                   : cache.clip_ids;
        const auto idx = split_indices(cache.labels, groups, split);
        predictions = Matrix(idx.test.size(), class_table.size(), 0.0);
        std::size_t row = 0;
        for (std::size_t i : idx.test) {
            const auto probs = predict_probabilities(artifact, cache.points[i]);
            for (std::size_t c = 0; c < probs.size(); ++c) predictions(row, c) = probs[c];
            labels.push_back(cache.labels[i]);
            sources.push_back(cache.source_ids[i]);
            ++row;
        }
    }

    if (labels.empty()) throw Error("test partition is empty");
    outcome.report = compute_metrics(predictions, labels);

    std::vector<ClipPrediction> clip_preds(labels.size());
    std::map<std::string, int> truth;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        clip_preds[i].recording_id = sources[i];
        clip_preds[i].probs.assign(
            predictions.data.begin() + static_cast<std::ptrdiff_t>(i * predictions.cols),
            predictions.data.begin() + static_cast<std::ptrdiff_t>((i + 1) * predictions.cols));
        truth[sources[i]] = labels[i];
    }
    outcome.report.audio_accuracy = audio_accuracy(vote_audio(clip_preds, cfg.vote), truth);

    detail::write_report(cfg, outcome.report, class_table, "held-out test", outcome);
    log << format_metrics_table(outcome.report, class_table);
    return outcome;
}

struct PredictOutcome {
    std::vector<std::pair<std::string, double>> ranked;  // class name, probability
};

/// Run one audio file through split -> features/images -> model ->
/// vote_audio and return the ranked classes.
inline PredictOutcome cmd_predict(const PipelineConfig& cfg, const std::filesystem::path& audio,
                                  std::ostream& log = std::cout) {
    const auto artifact_path = cfg.output_dir / "model.bsng";
    if (!std::filesystem::exists(artifact_path))
        throw Error("model artifact not found at " + artifact_path.string() +
                    "; run train first");
    const auto artifact = load_model_file(artifact_path);

    DatasetManifest one;
    RecordingEntry entry;
    entry.id = audio.stem().string();
    entry.species_label = "?";
    entry.file_path = audio.string();
    one.entries.push_back(entry);
    one.rebuild_class_table();

    PipelineConfig clip_cfg = cfg;
    if (clip_cfg.plans.empty()) clip_cfg.plans.emplace_back();
    auto generated = generate_clips(one, clip_cfg);
    if (generated.clips.empty())
        throw TooShort("audio yields no clips under the configured plan");

    const std::size_t n_classes = artifact.class_table.size();
    std::vector<std::vector<double>> clip_probs;
    for (const auto& clip : generated.clips) {
        try {
            if (artifact.kind == ModelKind::cnn) {
                auto img = render_image(mel_spectrogram(clip.samples, cfg.spectrogram));
                const auto m = cnn_forward(std::get<CnnModel>(artifact.model), {img});
                clip_probs.emplace_back(m.data.begin(), m.data.end());
            } else {
                const auto fv = feature_vector(clip.samples, cfg.spectrogram, cfg.include_c0);
                clip_probs.push_back(predict_probabilities(
                    artifact, std::vector<double>(fv.values.begin(), fv.values.end())));
            }
        } catch (const TooShort&) {
            continue;  // skip degenerate clips
        }
    }
    if (clip_probs.empty()) throw TooShort("no usable clips in the input audio");

    std::vector<double> summed(n_classes, 0.0);
    for (const auto& p : clip_probs)
        for (std::size_t c = 0; c < n_classes; ++c) summed[c] += p[c];
    double total = 0.0;
    for (double s : summed) total += s;

    PredictOutcome outcome;
    for (std::size_t c = 0; c < n_classes; ++c)
        outcome.ranked.emplace_back(artifact.class_table[c],
                                    total > 0 ? summed[c] / total : 0.0);
    const std::size_t voted = vote_group(clip_probs, cfg.vote);
    std::stable_sort(outcome.ranked.begin(), outcome.ranked.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    // the voted class leads even if majority and summed probability disagree
    const std::string voted_name = artifact.class_table[voted];
    const auto it = std::find_if(outcome.ranked.begin(), outcome.ranked.end(),
                                 [&](const auto& r) { return r.first == voted_name; });
    if (it != outcome.ranked.begin() && it != outcome.ranked.end())
        std::rotate(outcome.ranked.begin(), it, it + 1);

    log << "prediction over " << clip_probs.size() << " clips:\n";
    for (const auto& [name, prob] : outcome.ranked) {
        log.setf(std::ios::fixed);
        log.precision(4);
        log << "  " << name << "  " << prob << "\n";
    }
    return outcome;
}

struct AblationRow {
    std::string plan;
    std::size_t image_count = 0;
    double clip_accuracy = 0.0;
    double audio_accuracy = 0.0;
    bool failed = false;
    std::string error;
};

/// Table 1-style grid: train one CNN per plan on identically split
/// recordings (same seed) and report clip/audio accuracy per row. Rows fail
/// independently.
inline std::vector<AblationRow> run_ablation(const DatasetManifest& manifest,
                                             const PipelineConfig& cfg,
                                             const RecordingLoader& loader = default_recording_loader,
                                             std::ostream& log = std::cout) {
    SplitSpec split = cfg.split;
    split.seed = cfg.seed;
    const auto parts = split_dataset(manifest, split);

    std::vector<AblationRow> rows;
    for (const auto& plan : cfg.plans) {
        AblationRow row;
        row.plan = plan.describe();
        try {
            PipelineConfig plan_cfg = cfg;
            plan_cfg.plans = {plan};

            auto make_images = [&](const DatasetManifest& part, std::vector<ClipImage>& images,
                                   std::vector<int>& labels, std::vector<std::string>& sources) {
                auto generated = generate_clips(part, plan_cfg, loader);
                for (const auto& clip : generated.clips) {
                    if (clip.samples.samples.size() < cfg.spectrogram.n_fft) continue;
                    auto img = render_image(mel_spectrogram(clip.samples, cfg.spectrogram));
                    if (cfg.min_image_std > 0.0 && pixel_stddev(img) < cfg.min_image_std) continue;
                    img.clip_id = clip.clip_id();
                    images.push_back(std::move(img));
                    labels.push_back(manifest.class_index(clip.label));
                    sources.push_back(clip.source_id);
                }
            };

            std::vector<ClipImage> train_images, val_images, test_images;
            std::vector<int> train_labels, val_labels, test_labels;
            std::vector<std::string> train_sources, val_sources, test_sources;
            make_images(parts.train, train_images, train_labels, train_sources);
            make_images(parts.val, val_images, val_labels, val_sources);
            make_images(parts.test, test_images, test_labels, test_sources);
            row.image_count = train_images.size() + val_images.size() + test_images.size();
            if (train_images.empty() || test_images.empty())
                throw EmptyTrainingSet("plan yields no train or test images");

            CnnConfig cnn_cfg;
            cnn_cfg.n_classes = manifest.class_table.size();
            cnn_cfg.final_activation = cfg.model.final_activation;
            CnnModel model = CnnModel::create(cnn_cfg, cfg.seed);
            cnn_train(model, train_images, train_labels, val_images, val_labels, cfg.model.epochs,
                      cfg.model.patience, cfg.seed, cfg.model.learning_rate, cfg.model.batch_size,
                      cfg.jobs);

            const Matrix predictions = cnn_forward(model, test_images);
            row.clip_accuracy = compute_metrics(predictions, test_labels).accuracy;

            std::vector<ClipPrediction> clip_preds(test_images.size());
            std::map<std::string, int> truth;
            for (std::size_t i = 0; i < test_images.size(); ++i) {
                clip_preds[i].recording_id = test_sources[i];
                clip_preds[i].probs.assign(
                    predictions.data.begin() + static_cast<std::ptrdiff_t>(i * predictions.cols),
                    predictions.data.begin() +
                        static_cast<std::ptrdiff_t>((i + 1) * predictions.cols));
                truth[test_sources[i]] = test_labels[i];
            }
            row.audio_accuracy = audio_accuracy(vote_audio(clip_preds, cfg.vote), truth);
        } catch (const std::exception& e) {
            row.failed = true;
            row.error = e.what();
        }
        log << "[ablate] " << row.plan << ": "
            << (row.failed ? "FAILED (" + row.error + ")"
                           : std::to_string(row.image_count) + " images, clip acc " +
                                 std::to_string(row.clip_accuracy) + ", audio acc " +
                                 std::to_string(row.audio_accuracy))
            << "\n";
        rows.push_back(std::move(row));
    }
    return rows;
}

/// `ablate` subcommand: run the grid and write ablation.json plus a text
/// table next to it.
inline std::vector<AblationRow> cmd_ablate(const PipelineConfig& cfg,
                                           const RecordingLoader& loader = default_recording_loader,
                                           std::ostream& log = std::cout) {
    const auto manifest = load_manifest(cfg.manifest());
    const auto rows = run_ablation(manifest, cfg, loader, log);

    std::filesystem::create_directories(cfg.output_dir);
    nlohmann::json table = nlohmann::json::array();
    for (const auto& r : rows) {
        nlohmann::json j{{"plan", r.plan},
                         {"image_count", r.image_count},
                         {"clip_accuracy", r.clip_accuracy},
                         {"audio_accuracy", r.audio_accuracy}};
        if (r.failed) j["error"] = r.error;
        table.push_back(j);
    }
    std::ofstream json_out(cfg.output_dir / "ablation.json");
    json_out << table.dump(2) << '\n';

    std::ofstream txt(cfg.output_dir / "ablation.txt");
    txt << "plan | images | clip acc | audio acc\n";
    for (const auto& r : rows) {
        if (r.failed)
            txt << r.plan << " | FAILED: " << r.error << "\n";
        else
            txt << r.plan << " | " << r.image_count << " | " << r.clip_accuracy << " | "
                << r.audio_accuracy << "\n";
    }
    return rows;
}

}  // namespace birdsong
