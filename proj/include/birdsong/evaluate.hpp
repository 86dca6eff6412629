#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "birdsong/core.hpp"
#include "birdsong/manifest.hpp"
#include "birdsong/rng.hpp"

namespace birdsong {

struct SplitSpec {
    double train = 0.8;
    double val = 0.1;
    double test = 0.1;
    bool group_by_recording = true;
    std::uint64_t seed = 0;

    void validate() const {
        if (train < 0 || val < 0 || test < 0) throw Error("split ratios must be >= 0");
        if (std::abs(train + val + test - 1.0) > 1e-9) throw Error("split ratios must sum to 1");
    }
};

struct SplitIndices {
    std::vector<std::size_t> train, val, test;
    std::vector<std::string> warnings;  // classes too small to fill every partition
};

namespace detail {

/// Largest-remainder allotment of n units over the three ratios; ties go to
/// the earlier partition (train first).
inline std::array<std::size_t, 3> allot(std::size_t n, const SplitSpec& spec) {
    const double ratios[3] = {spec.train, spec.val, spec.test};
    std::array<std::size_t, 3> counts{};
    double remainders[3];
    std::size_t assigned = 0;
    for (int i = 0; i < 3; ++i) {
        const double exact = ratios[i] * static_cast<double>(n);
        counts[i] = static_cast<std::size_t>(exact);
        remainders[i] = exact - static_cast<double>(counts[i]);
        assigned += counts[i];
    }
    while (assigned < n) {
        int best = 0;
        for (int i = 1; i < 3; ++i)
            if (remainders[i] > remainders[best] + 1e-12) best = i;
        ++counts[best];
        remainders[best] = -1.0;
        ++assigned;
    }
    return counts;
}

}  // namespace detail

/// Stratified grouped split of arbitrary items. Ratios apply per class to
/// group counts (or to item counts when each item is its own group);
/// every item of a group lands in one partition.
inline SplitIndices split_indices(const std::vector<int>& labels,
                                  const std::vector<std::string>& groups, const SplitSpec& spec) {
    spec.validate();
    if (labels.size() != groups.size()) throw LengthMismatch("labels/groups size mismatch");

    // class -> ordered distinct groups -> item indices
    std::map<int, std::vector<std::pair<std::string, std::vector<std::size_t>>>> by_class;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        auto& cls = by_class[labels[i]];
        auto it = std::find_if(cls.begin(), cls.end(),
                               [&](const auto& g) { return g.first == groups[i]; });
        if (it == cls.end()) {
            cls.emplace_back(groups[i], std::vector<std::size_t>{i});
        } else {
            it->second.push_back(i);
        }
    }

    SplitIndices out;
    for (auto& [label, cls_groups] : by_class) {
        if (cls_groups.size() < 3)
            out.warnings.push_back("class " + std::to_string(label) + " has only " +
                                   std::to_string(cls_groups.size()) +
                                   " recordings; cannot fill all partitions");

        Rng rng(derive_seed(spec.seed, "split", static_cast<std::uint64_t>(label)));
        for (std::size_t i = cls_groups.size(); i > 1; --i)
            std::swap(cls_groups[i - 1], cls_groups[static_cast<std::size_t>(rng.next_below(i))]);

        const auto counts = detail::allot(cls_groups.size(), spec);
        std::size_t g = 0;
        for (int part = 0; part < 3; ++part) {
            auto& dest = part == 0 ? out.train : part == 1 ? out.val : out.test;
            for (std::size_t c = 0; c < counts[static_cast<std::size_t>(part)]; ++c, ++g)
                for (std::size_t idx : cls_groups[g].second) dest.push_back(idx);
        }
    }
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.val.begin(), out.val.end());
    std::sort(out.test.begin(), out.test.end());
    return out;
}

struct ManifestSplit {
    DatasetManifest train, val, test;
    std::vector<std::string> warnings;
};

/// Partition a manifest's recordings per the spec ratios, stratified by
/// species. Partitions are disjoint and exhaustive; deterministic under the
/// seed.
inline ManifestSplit split_dataset(const DatasetManifest& manifest, const SplitSpec& spec) {
    std::vector<int> labels;
    std::vector<std::string> groups;
    for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
        labels.push_back(manifest.class_index(manifest.entries[i].species_label));
        // recordings are already whole units; grouping off would not change this
        groups.push_back(spec.group_by_recording ? manifest.entries[i].id
                                                 : manifest.entries[i].id);
    }
    const auto idx = split_indices(labels, groups, spec);

    ManifestSplit out;
    out.warnings = idx.warnings;
    auto fill = [&](const std::vector<std::size_t>& indices, DatasetManifest& dest) {
        for (std::size_t i : indices) dest.entries.push_back(manifest.entries[i]);
        dest.rebuild_class_table();
    };
    fill(idx.train, out.train);
    fill(idx.val, out.val);
    fill(idx.test, out.test);
    return out;
}

/// Stratified k-fold assignment, grouped by recording id under the same
/// leakage rule as split_dataset. Returns per-fold (train, test) index
/// pairs; each item tests exactly once.
inline std::vector<std::pair<std::vector<std::size_t>, std::vector<std::size_t>>> kfold(
    const std::vector<int>& labels, const std::vector<std::string>& groups, std::size_t k,
    std::uint64_t seed) {
    if (k < 2) throw Error("kfold needs k >= 2");
    if (labels.size() != groups.size()) throw LengthMismatch("labels/groups size mismatch");
    if (k > labels.size()) throw TooFewItems("more folds than items");

    std::map<int, std::vector<std::pair<std::string, std::vector<std::size_t>>>> by_class;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        auto& cls = by_class[labels[i]];
        auto it = std::find_if(cls.begin(), cls.end(),
                               [&](const auto& g) { return g.first == groups[i]; });
        if (it == cls.end()) {
            cls.emplace_back(groups[i], std::vector<std::size_t>{i});
        } else {
            it->second.push_back(i);
        }
    }

    std::vector<std::vector<std::size_t>> folds(k);
    for (auto& [label, cls_groups] : by_class) {
        Rng rng(derive_seed(seed, "kfold", static_cast<std::uint64_t>(label)));
        for (std::size_t i = cls_groups.size(); i > 1; --i)
            std::swap(cls_groups[i - 1], cls_groups[static_cast<std::size_t>(rng.next_below(i))]);
        // deal each group to the currently smallest fold
        for (const auto& [gid, items] : cls_groups) {
            std::size_t best = 0;
            for (std::size_t f = 1; f < k; ++f)
                if (folds[f].size() < folds[best].size()) best = f;
            folds[best].insert(folds[best].end(), items.begin(), items.end());
        }
    }

    std::vector<std::pair<std::vector<std::size_t>, std::vector<std::size_t>>> out(k);
    for (std::size_t f = 0; f < k; ++f) {
        std::sort(folds[f].begin(), folds[f].end());
        out[f].second = folds[f];
        for (std::size_t g = 0; g < k; ++g) {
            if (g == f) continue;
            out[f].first.insert(out[f].first.end(), folds[g].begin(), folds[g].end());
        }
        std::sort(out[f].first.begin(), out[f].first.end());
    }
    return out;
}

struct MetricsReport {
    double accuracy = 0.0;
    std::vector<double> precision, recall, f1;  // per class
    double macro_precision = 0.0, macro_recall = 0.0, macro_f1 = 0.0;
    std::map<std::size_t, double> top_k_accuracy;
    std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
    std::optional<double> audio_accuracy;

    nlohmann::json to_json() const {
        nlohmann::json j{{"accuracy", accuracy},
                         {"precision", precision},
                         {"recall", recall},
                         {"f1", f1},
                         {"macro_precision", macro_precision},
                         {"macro_recall", macro_recall},
                         {"macro_f1", macro_f1},
                         {"confusion", confusion}};
        nlohmann::json topk = nlohmann::json::object();
        for (const auto& [k, v] : top_k_accuracy) topk[std::to_string(k)] = v;
        j["top_k_accuracy"] = topk;
        if (audio_accuracy) j["audio_accuracy"] = *audio_accuracy;
        return j;
    }
};

inline std::size_t argmax_row(const Matrix& m, std::size_t row) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < m.cols; ++c)
        if (m(row, c) > m(row, best)) best = c;  // ties keep the lower index
    return best;
}

/// Confusion matrix, accuracy, per-class and macro precision/recall/F1, and
/// top-k accuracy for the requested ks. Undefined ratios count as 0.
inline MetricsReport compute_metrics(const Matrix& predictions, const std::vector<int>& labels,
                                     const std::vector<std::size_t>& top_ks = {1, 3, 5}) {
    if (predictions.rows != labels.size())
        throw LengthMismatch("prediction rows do not match label count");
    const std::size_t n_classes = predictions.cols;
    const std::size_t n = labels.size();

    MetricsReport report;
    report.confusion.assign(n_classes, std::vector<std::size_t>(n_classes, 0));
    for (std::size_t i = 0; i < n; ++i) {
        const auto truth = static_cast<std::size_t>(labels[i]);
        if (truth >= n_classes) throw LengthMismatch("label outside class range");
        report.confusion[truth][argmax_row(predictions, i)] += 1;
    }

    std::size_t correct = 0;
    for (std::size_t c = 0; c < n_classes; ++c) correct += report.confusion[c][c];
    report.accuracy = n > 0 ? static_cast<double>(correct) / static_cast<double>(n) : 0.0;

    report.precision.assign(n_classes, 0.0);
    report.recall.assign(n_classes, 0.0);
    report.f1.assign(n_classes, 0.0);
    for (std::size_t c = 0; c < n_classes; ++c) {
        std::size_t tp = report.confusion[c][c], fp = 0, fn = 0;
        for (std::size_t o = 0; o < n_classes; ++o) {
            if (o == c) continue;
            fp += report.confusion[o][c];
            fn += report.confusion[c][o];
        }
        if (tp + fp > 0) report.precision[c] = static_cast<double>(tp) / (tp + fp);
        if (tp + fn > 0) report.recall[c] = static_cast<double>(tp) / (tp + fn);
        const double pr = report.precision[c] + report.recall[c];
        if (pr > 0) report.f1[c] = 2.0 * report.precision[c] * report.recall[c] / pr;
        report.macro_precision += report.precision[c];
        report.macro_recall += report.recall[c];
        report.macro_f1 += report.f1[c];
    }
    if (n_classes > 0) {
        report.macro_precision /= static_cast<double>(n_classes);
        report.macro_recall /= static_cast<double>(n_classes);
        report.macro_f1 /= static_cast<double>(n_classes);
    }

    for (std::size_t k : top_ks) {
        const std::size_t kk = std::min(k, n_classes);
        std::size_t hits = 0;
        std::vector<std::size_t> order(n_classes);
        for (std::size_t i = 0; i < n; ++i) {
            std::iota(order.begin(), order.end(), std::size_t{0});
            std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                return predictions(i, a) > predictions(i, b);  // stable: index breaks ties
            });
            const auto truth = static_cast<std::size_t>(labels[i]);
            for (std::size_t r = 0; r < kk; ++r)
                if (order[r] == truth) {
                    ++hits;
                    break;
                }
        }
        report.top_k_accuracy[k] = n > 0 ? static_cast<double>(hits) / static_cast<double>(n) : 0.0;
    }
    return report;
}

enum class VoteMode { majority, probability };

/// Aggregate one recording's clip probability rows into a class. Majority
/// ties fall back to summed probabilities; remaining ties take the lowest
/// class index.
inline std::size_t vote_group(const std::vector<std::vector<double>>& clip_probs, VoteMode mode) {
    if (clip_probs.empty()) throw EmptyGroup("vote over a recording with no clips");
    const std::size_t n_classes = clip_probs.front().size();

    std::vector<double> summed(n_classes, 0.0);
    for (const auto& p : clip_probs)
        for (std::size_t c = 0; c < n_classes; ++c) summed[c] += p[c];
    const auto prob_winner = [&] {
        std::size_t best = 0;
        for (std::size_t c = 1; c < n_classes; ++c)
            if (summed[c] > summed[best]) best = c;
        return best;
    };

    if (mode == VoteMode::probability) return prob_winner();

    std::vector<std::size_t> votes(n_classes, 0);
    for (const auto& p : clip_probs) {
        std::size_t arg = 0;
        for (std::size_t c = 1; c < n_classes; ++c)
            if (p[c] > p[arg]) arg = c;
        votes[arg] += 1;
    }
    std::size_t best = 0;
    bool tie = false;
    for (std::size_t c = 1; c < n_classes; ++c) {
        if (votes[c] > votes[best]) {
            best = c;
            tie = false;
        } else if (votes[c] == votes[best] && votes[c] > 0 && c != best) {
            tie = true;
        }
    }
    return tie ? prob_winner() : best;
}

struct ClipPrediction {
    std::string recording_id;
    std::vector<double> probs;
};

/// Per-recording verdicts from clip predictions (ordered by recording id).
inline std::map<std::string, std::size_t> vote_audio(const std::vector<ClipPrediction>& clips,
                                                     VoteMode mode) {
    std::map<std::string, std::vector<std::vector<double>>> grouped;
    for (const auto& c : clips) grouped[c.recording_id].push_back(c.probs);

    std::map<std::string, std::size_t> verdicts;
    for (const auto& [id, probs] : grouped) verdicts[id] = vote_group(probs, mode);
    return verdicts;
}

/// Fraction of recordings whose voted class matches the truth.
inline double audio_accuracy(const std::map<std::string, std::size_t>& verdicts,
                             const std::map<std::string, int>& truth) {
    if (verdicts.empty()) return 0.0;
    std::size_t correct = 0;
    for (const auto& [id, cls] : verdicts) {
        auto it = truth.find(id);
        if (it != truth.end() && static_cast<std::size_t>(it->second) == cls) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(verdicts.size());
}

/// Aligned-column text rendering of a report.
inline std::string format_metrics_table(const MetricsReport& report,
                                        const std::vector<std::string>& class_table) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(4);
    os << "overall accuracy: " << report.accuracy << "\n";
    for (const auto& [k, v] : report.top_k_accuracy)
        os << "top-" << k << " accuracy:   " << v << "\n";
    if (report.audio_accuracy) os << "audio accuracy:   " << *report.audio_accuracy << "\n";
    os << "\n";

    std::size_t width = 5;
    for (const auto& name : class_table) width = std::max(width, name.size());
    os << std::string(width, ' ') << "  precision  recall     f1\n";
    for (std::size_t c = 0; c < report.precision.size(); ++c) {
        const std::string name = c < class_table.size() ? class_table[c] : std::to_string(c);
        os << name << std::string(width - name.size(), ' ') << "  " << report.precision[c]
           << "     " << report.recall[c] << "     " << report.f1[c] << "\n";
    }
    os << "macro" << std::string(width - 5, ' ') << "  " << report.macro_precision << "     "
       << report.macro_recall << "     " << report.macro_f1 << "\n";
    return os.str();
}

inline void save_confusion_csv(const std::filesystem::path& path, const MetricsReport& report,
                               const std::vector<std::string>& class_table) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << "true_class";
    for (const auto& name : class_table) out << ',' << name;
    out << '\n';
    for (std::size_t r = 0; r < report.confusion.size(); ++r) {
        out << (r < class_table.size() ? class_table[r] : std::to_string(r));
        for (std::size_t c = 0; c < report.confusion[r].size(); ++c)
            out << ',' << report.confusion[r][c];
        out << '\n';
    }
}

}  // namespace birdsong
