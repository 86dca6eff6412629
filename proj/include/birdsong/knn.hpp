#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "birdsong/core.hpp"
#include "birdsong/rebalance.hpp"

namespace birdsong {

/// k-nearest-neighbour classifier over z-score-normalized features.
/// Constant training columns are flagged and excluded from the distance.
struct KnnModel {
    std::size_t k = 5;
    int n_classes = 0;
    std::vector<double> feature_mean;
    std::vector<double> feature_std;
    std::vector<bool> feature_active;
    std::vector<std::vector<double>> train_points;  // already normalized
    std::vector<int> train_labels;
};

inline KnnModel knn_fit(const NumericSet& train, std::size_t k, int n_classes) {
    if (train.size() == 0) throw EmptyTrainingSet("knn_fit with no samples");
    if (k < 1 || k > train.size()) throw Error("k must be in [1, train size]");

    const std::size_t dim = train.items.front().size();
    KnnModel model;
    model.k = k;
    model.n_classes = n_classes;
    model.feature_mean.assign(dim, 0.0);
    model.feature_std.assign(dim, 0.0);
    model.feature_active.assign(dim, true);

    const double n = static_cast<double>(train.size());
    for (const auto& x : train.items)
        for (std::size_t d = 0; d < dim; ++d) model.feature_mean[d] += x[d];
    for (std::size_t d = 0; d < dim; ++d) model.feature_mean[d] /= n;
    for (const auto& x : train.items)
        for (std::size_t d = 0; d < dim; ++d) {
            const double c = x[d] - model.feature_mean[d];
            model.feature_std[d] += c * c;
        }
    for (std::size_t d = 0; d < dim; ++d) {
        model.feature_std[d] = std::sqrt(model.feature_std[d] / n);
        if (model.feature_std[d] <= 0.0) {
            model.feature_active[d] = false;  // constant column
            model.feature_std[d] = 1.0;
        }
    }

    model.train_points.reserve(train.size());
    for (const auto& x : train.items) {
        std::vector<double> z(dim);
        for (std::size_t d = 0; d < dim; ++d)
            z[d] = (x[d] - model.feature_mean[d]) / model.feature_std[d];
        model.train_points.push_back(std::move(z));
    }
    model.train_labels = train.labels;
    return model;
}

/// Class probabilities = neighbour class frequencies among the k nearest
/// (Euclidean over active normalized features); distance ties break toward
/// the lower training index.
inline std::vector<double> knn_predict(const KnnModel& model, const std::vector<double>& x) {
    const std::size_t dim = model.feature_mean.size();
    if (x.size() != dim) throw ShapeMismatch("feature dimension mismatch");

    std::vector<double> z(dim);
    for (std::size_t d = 0; d < dim; ++d)
        z[d] = (x[d] - model.feature_mean[d]) / model.feature_std[d];

    std::vector<std::pair<double, std::size_t>> dist(model.train_points.size());
    for (std::size_t i = 0; i < model.train_points.size(); ++i) {
        double s = 0.0;
        const auto& p = model.train_points[i];
        for (std::size_t d = 0; d < dim; ++d) {
            if (!model.feature_active[d]) continue;
            const double diff = z[d] - p[d];
            s += diff * diff;
        }
        dist[i] = {s, i};
    }
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(model.k),
                      dist.end());

    std::vector<double> probs(static_cast<std::size_t>(model.n_classes), 0.0);
    for (std::size_t i = 0; i < model.k; ++i)
        probs[static_cast<std::size_t>(model.train_labels[dist[i].second])] += 1.0;
    for (auto& p : probs) p /= static_cast<double>(model.k);
    return probs;
}

}  // namespace birdsong
