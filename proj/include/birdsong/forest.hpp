#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "birdsong/core.hpp"
#include "birdsong/rebalance.hpp"
#include "birdsong/rng.hpp"

namespace birdsong {

/// Gini impurity of a class-count histogram: 1 - sum p_c^2.
inline double gini_impurity(const std::vector<double>& counts) {
    double total = 0.0;
    for (double c : counts) total += c;
    if (total <= 0.0) return 0.0;
    double sum_sq = 0.0;
    for (double c : counts) {
        const double p = c / total;
        sum_sq += p * p;
    }
    return 1.0 - sum_sq;
}

struct TreeNode {
    int feature = -1;         // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    std::vector<double> histogram;  // class counts, leaves only
};

struct DecisionTree {
    std::vector<TreeNode> nodes;

    const std::vector<double>& leaf_for(const std::vector<double>& x) const {
        int idx = 0;
        while (nodes[static_cast<std::size_t>(idx)].feature >= 0) {
            const auto& n = nodes[static_cast<std::size_t>(idx)];
            idx = x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
        }
        return nodes[static_cast<std::size_t>(idx)].histogram;
    }
};

struct ForestModel {
    std::vector<DecisionTree> trees;
    std::size_t n_trees = 0;
    std::size_t max_features = 0;
    std::uint64_t seed = 0;
    int n_classes = 0;
};

namespace detail {

struct TreeBuilder {
    const NumericSet& data;
    int n_classes;
    std::size_t max_features;
    Rng& rng;
    DecisionTree tree;

    int build(std::vector<std::size_t>& indices) {
        std::vector<double> counts(static_cast<std::size_t>(n_classes), 0.0);
        for (std::size_t i : indices)
            counts[static_cast<std::size_t>(data.labels[i])] += 1.0;

        const bool pure = gini_impurity(counts) <= 0.0;
        if (pure || indices.size() < 2) return make_leaf(std::move(counts));

        const std::size_t dim = data.items.front().size();
        const std::size_t n_try = std::min(max_features, dim);

        // random feature subset, without replacement
        std::vector<std::size_t> features(dim);
        std::iota(features.begin(), features.end(), std::size_t{0});
        for (std::size_t i = 0; i < n_try; ++i) {
            const std::size_t j = i + rng.next_below(dim - i);
            std::swap(features[i], features[j]);
        }
        features.resize(n_try);
        std::sort(features.begin(), features.end());

        double best_impurity = std::numeric_limits<double>::infinity();
        int best_feature = -1;
        double best_threshold = 0.0;

        std::vector<double> values;
        for (std::size_t f : features) {
            values.clear();
            for (std::size_t i : indices) values.push_back(data.items[i][f]);
            std::sort(values.begin(), values.end());
            values.erase(std::unique(values.begin(), values.end()), values.end());
            if (values.size() < 2) continue;

            for (std::size_t v = 0; v + 1 < values.size(); ++v) {
                const double thr = 0.5 * (values[v] + values[v + 1]);
                std::vector<double> left_counts(static_cast<std::size_t>(n_classes), 0.0);
                std::vector<double> right_counts(static_cast<std::size_t>(n_classes), 0.0);
                for (std::size_t i : indices) {
                    auto& side = data.items[i][f] <= thr ? left_counts : right_counts;
                    side[static_cast<std::size_t>(data.labels[i])] += 1.0;
                }
                double nl = 0.0, nr = 0.0;
                for (double c : left_counts) nl += c;
                for (double c : right_counts) nr += c;
                const double impurity = (nl * gini_impurity(left_counts) +
                                         nr * gini_impurity(right_counts)) /
                                        (nl + nr);
                if (impurity < best_impurity) {
                    best_impurity = impurity;
                    best_feature = static_cast<int>(f);
                    best_threshold = thr;
                }
            }
        }

        if (best_feature < 0) return make_leaf(std::move(counts));

        std::vector<std::size_t> left_idx, right_idx;
        for (std::size_t i : indices) {
            if (data.items[i][static_cast<std::size_t>(best_feature)] <= best_threshold)
                left_idx.push_back(i);
            else
                right_idx.push_back(i);
        }
        if (left_idx.empty() || right_idx.empty()) return make_leaf(std::move(counts));

        const int node_idx = static_cast<int>(tree.nodes.size());
        tree.nodes.emplace_back();
        tree.nodes.back().feature = best_feature;
        tree.nodes.back().threshold = best_threshold;
        const int left = build(left_idx);
        const int right = build(right_idx);
        tree.nodes[static_cast<std::size_t>(node_idx)].left = left;
        tree.nodes[static_cast<std::size_t>(node_idx)].right = right;
        return node_idx;
    }

    int make_leaf(std::vector<double>&& counts) {
        const int idx = static_cast<int>(tree.nodes.size());
        tree.nodes.emplace_back();
        tree.nodes.back().histogram = std::move(counts);
        return idx;
    }
};

}  // namespace detail

/// Random forest: each tree is fit on a bootstrap sample (train size, with
/// replacement), choosing at every node the best Gini split over a random
/// subset of max_features features, thresholds at midpoints of sorted
/// unique values. Trees grow until pure or fewer than 2 samples.
inline ForestModel forest_fit(const NumericSet& train, std::size_t n_trees,
                              std::size_t max_features, std::uint64_t seed, int n_classes) {
    if (train.size() == 0) throw EmptyTrainingSet("forest_fit with no samples");
    if (n_trees == 0) throw Error("need at least one tree");

    ForestModel model;
    model.n_trees = n_trees;
    model.max_features = max_features;
    model.seed = seed;
    model.n_classes = n_classes;
    model.trees.reserve(n_trees);

    for (std::size_t t = 0; t < n_trees; ++t) {
        Rng rng(derive_seed(seed, "tree", t));
        std::vector<std::size_t> sample(train.size());
        for (auto& i : sample) i = static_cast<std::size_t>(rng.next_below(train.size()));

        detail::TreeBuilder builder{train, n_classes, max_features, rng, {}};
        builder.build(sample);
        model.trees.push_back(std::move(builder.tree));
    }
    return model;
}

/// Soft voting: per-tree leaf histograms are normalized and averaged.
inline std::vector<double> forest_predict(const ForestModel& model, const std::vector<double>& x) {
    std::vector<double> probs(static_cast<std::size_t>(model.n_classes), 0.0);
    for (const auto& tree : model.trees) {
        const auto& hist = tree.leaf_for(x);
        double total = 0.0;
        for (double c : hist) total += c;
        if (total <= 0.0) continue;
        for (std::size_t c = 0; c < hist.size(); ++c) probs[c] += hist[c] / total;
    }
    double sum = 0.0;
    for (double p : probs) sum += p;
    if (sum > 0.0)
        for (auto& p : probs) p /= sum;
    return probs;
}

}  // namespace birdsong
