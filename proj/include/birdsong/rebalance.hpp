#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <vector>

#include "birdsong/core.hpp"
#include "birdsong/rng.hpp"

namespace birdsong {

/// A labeled collection. Labels are class indices into whatever class table
/// the caller maintains; items can be feature vectors, clip references, or
/// anything else the strategy does not need to look inside.
template <typename Item>
struct LabeledSet {
    std::vector<Item> items;
    std::vector<int> labels;

    std::size_t size() const { return items.size(); }

    std::map<int, std::size_t> class_counts() const {
        std::map<int, std::size_t> counts;
        for (int l : labels) ++counts[l];
        return counts;
    }
};

using NumericSet = LabeledSet<std::vector<double>>;

namespace detail {

inline double sq_distance(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

/// Choose `take` of `n` indices uniformly without replacement (partial
/// Fisher-Yates), returned in ascending order so the subset keeps the input
/// ordering.
inline std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t take,
                                                           Rng& rng) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = 0; i < take; ++i) {
        const std::size_t j = i + rng.next_below(n - i);
        std::swap(idx[i], idx[j]);
    }
    idx.resize(take);
    std::sort(idx.begin(), idx.end());
    return idx;
}

}  // namespace detail

/// Reduce every class with more than `target` items to exactly `target` by
/// uniform sampling without replacement. Never fabricates items; classes at
/// or below the target are untouched.
template <typename Item>
LabeledSet<Item> random_downsample(const LabeledSet<Item>& set, std::size_t target,
                                   std::uint64_t seed) {
    if (target < 1) throw Error("downsample target must be >= 1");

    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < set.size(); ++i) by_class[set.labels[i]].push_back(i);

    std::vector<bool> keep(set.size(), true);
    for (const auto& [label, indices] : by_class) {
        if (indices.size() <= target) continue;
        Rng rng(derive_seed(seed, "downsample", static_cast<std::uint64_t>(label)));
        auto chosen = detail::sample_without_replacement(indices.size(), target, rng);
        std::vector<bool> class_keep(indices.size(), false);
        for (std::size_t c : chosen) class_keep[c] = true;
        for (std::size_t c = 0; c < indices.size(); ++c)
            if (!class_keep[c]) keep[indices[c]] = false;
    }

    LabeledSet<Item> out;
    for (std::size_t i = 0; i < set.size(); ++i) {
        if (!keep[i]) continue;
        out.items.push_back(set.items[i]);
        out.labels.push_back(set.labels[i]);
    }
    return out;
}

namespace detail {

/// SMOTE synthesis for one class: each new point is x + lambda*(nn - x)
/// with x a random class member, nn one of its k nearest same-class
/// neighbors, lambda uniform in [0,1].
inline void smote_class(const NumericSet& set, const std::vector<std::size_t>& class_indices,
                        std::size_t n_new, std::size_t k, Rng& rng,
                        std::vector<std::vector<double>>& out_points) {
    const std::size_t m = class_indices.size();
    if (m < 2) throw TooFewSamples("SMOTE needs at least 2 samples per class");
    const std::size_t k_eff = std::min(k, m - 1);

    // k nearest same-class neighbors per member, ties broken by lower index
    std::vector<std::vector<std::size_t>> neighbors(m);
    for (std::size_t i = 0; i < m; ++i) {
        std::vector<std::pair<double, std::size_t>> dist;
        dist.reserve(m - 1);
        for (std::size_t j = 0; j < m; ++j) {
            if (j == i) continue;
            dist.emplace_back(sq_distance(set.items[class_indices[i]], set.items[class_indices[j]]),
                              j);
        }
        std::sort(dist.begin(), dist.end());
        for (std::size_t t = 0; t < k_eff; ++t) neighbors[i].push_back(dist[t].second);
    }

    for (std::size_t s = 0; s < n_new; ++s) {
        const std::size_t i = static_cast<std::size_t>(rng.next_below(m));
        const std::size_t nn = neighbors[i][static_cast<std::size_t>(rng.next_below(k_eff))];
        const double lambda = rng.next_double();
        const auto& x = set.items[class_indices[i]];
        const auto& y = set.items[class_indices[nn]];
        std::vector<double> p(x.size());
        for (std::size_t d = 0; d < x.size(); ++d) p[d] = x[d] + lambda * (y[d] - x[d]);
        out_points.push_back(std::move(p));
    }
}

}  // namespace detail

/// SMOTE every minority class up to the size of the largest class; the
/// result of that phase alone has exactly equal counts.
inline NumericSet smote_oversample(const NumericSet& set, std::size_t k, std::uint64_t seed) {
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < set.size(); ++i) by_class[set.labels[i]].push_back(i);
    for (const auto& [label, idx] : by_class)
        if (idx.size() < 2)
            throw TooFewSamples("class " + std::to_string(label) + " has fewer than 2 samples");

    std::size_t max_count = 0;
    for (const auto& [label, idx] : by_class) max_count = std::max(max_count, idx.size());

    NumericSet out = set;
    for (const auto& [label, idx] : by_class) {
        if (idx.size() >= max_count) continue;
        Rng rng(derive_seed(seed, "smote", static_cast<std::uint64_t>(label)));
        std::vector<std::vector<double>> synth;
        detail::smote_class(out, idx, max_count - idx.size(), k, rng, synth);
        for (auto& p : synth) {
            out.items.push_back(std::move(p));
            out.labels.push_back(label);
        }
    }
    return out;
}

/// Indices of points forming Tomek links: pairs of opposite-class points
/// that are each other's nearest neighbor.
inline std::vector<std::size_t> tomek_link_members(const NumericSet& set) {
    const std::size_t n = set.size();
    std::vector<std::size_t> nn(n);
    for (std::size_t i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t best_j = i;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            const double d = detail::sq_distance(set.items[i], set.items[j]);
            if (d < best) {
                best = d;
                best_j = j;
            }
        }
        nn[i] = best_j;
    }

    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t j = nn[i];
        if (j > i && nn[j] == i && set.labels[i] != set.labels[j]) {
            members.push_back(i);
            members.push_back(j);
        }
    }
    std::sort(members.begin(), members.end());
    return members;
}

/// SMOTE up to the top class, then remove both members of every Tomek link.
inline NumericSet smote_tomek(const NumericSet& set, std::size_t k, std::uint64_t seed) {
    NumericSet oversampled = smote_oversample(set, k, seed);
    const auto links = tomek_link_members(oversampled);

    std::vector<bool> drop(oversampled.size(), false);
    for (std::size_t i : links) drop[i] = true;

    NumericSet out;
    for (std::size_t i = 0; i < oversampled.size(); ++i) {
        if (drop[i]) continue;
        out.items.push_back(std::move(oversampled.items[i]));
        out.labels.push_back(oversampled.labels[i]);
    }
    return out;
}

/// Mixed strategy: classes above high_target are downsampled to it, classes
/// below low_target are SMOTE-oversampled to it, classes in between are left
/// alone.
inline NumericSet custom_rebalance(const NumericSet& set, std::size_t low_target,
                                   std::size_t high_target, std::size_t k, std::uint64_t seed) {
    if (low_target > high_target) throw Error("low_target must be <= high_target");

    NumericSet down = random_downsample(set, high_target, derive_seed(seed, "custom.down"));

    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < down.size(); ++i) by_class[down.labels[i]].push_back(i);

    NumericSet out = down;
    for (const auto& [label, idx] : by_class) {
        if (idx.size() >= low_target) continue;
        if (idx.size() < 2)
            throw TooFewSamples("class " + std::to_string(label) + " has fewer than 2 samples");
        Rng rng(derive_seed(seed, "custom.smote", static_cast<std::uint64_t>(label)));
        std::vector<std::vector<double>> synth;
        detail::smote_class(out, idx, low_target - idx.size(), k, rng, synth);
        for (auto& p : synth) {
            out.items.push_back(std::move(p));
            out.labels.push_back(label);
        }
    }
    return out;
}

/// Oversampling for non-numeric items (clip references): duplicate random
/// existing members until each class reaches `target`. The pipeline layer
/// re-augments duplicates under fresh per-copy seeds.
template <typename Item>
LabeledSet<Item> oversample_duplicate(const LabeledSet<Item>& set, std::size_t target,
                                      std::uint64_t seed) {
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < set.size(); ++i) by_class[set.labels[i]].push_back(i);

    LabeledSet<Item> out = set;
    for (const auto& [label, idx] : by_class) {
        if (idx.empty() || idx.size() >= target) continue;
        Rng rng(derive_seed(seed, "duplicate", static_cast<std::uint64_t>(label)));
        for (std::size_t s = idx.size(); s < target; ++s) {
            const std::size_t pick = idx[static_cast<std::size_t>(rng.next_below(idx.size()))];
            out.items.push_back(set.items[pick]);
            out.labels.push_back(label);
        }
    }
    return out;
}

}  // namespace birdsong
