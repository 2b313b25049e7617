#pragma once

#include <cstdint>
#include <vector>

#include "kmfm/common.hpp"

namespace kmfm {

/// Pair agreement counts between two partitions over all n(n-1)/2
/// unordered sample pairs. "Positive" means same predicted cluster.
struct PairCounts {
    std::uint64_t tp = 0;  // same pred, same truth
    std::uint64_t tn = 0;  // diff pred, diff truth
    std::uint64_t fp = 0;  // same pred, diff truth
    std::uint64_t fn = 0;  // diff pred, same truth

    std::uint64_t total() const { return tp + tn + fp + fn; }
};

/// k x k* contingency table between a predicted and a truth partition.
struct Contingency {
    std::vector<std::vector<std::uint64_t>> cells;  // [pred][truth]
    std::vector<std::uint64_t> pred_sizes;
    std::vector<std::uint64_t> truth_sizes;
    std::uint64_t n = 0;
};

Contingency contingency_table(const std::vector<int>& pred, const std::vector<int>& truth);

/// Contingency-based O(n + k*k') pair counting.
PairCounts pair_counts(const std::vector<int>& pred, const std::vector<int>& truth);

/// Rand index in [0,1]: fraction of pairs on which the partitions agree.
double rand_index(const std::vector<int>& pred, const std::vector<int>& truth);

/// Normalized mutual information in [0,1], natural log, geometric-mean
/// normalization. A zero-entropy (single cluster) partition yields 0.
double nmi(const std::vector<int>& pred, const std::vector<int>& truth);

}  // namespace kmfm
