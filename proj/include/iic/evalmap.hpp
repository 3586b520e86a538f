// Mapping predicted clusters to ground-truth classes for evaluation only:
// one-to-one permutation via linear assignment, or many-to-one majority map
// for overclustering heads. Tie-breaking is lowest-index everywhere.
#pragma once

#include <cstdint>
#include <vector>

namespace iic {

// counts[c][g] = number of samples (or pixels) predicted c with ground truth g.
struct ConfusionMatrix {
    std::vector<std::vector<int64_t>> counts;  // k rows, k_gt columns

    int64_t k() const { return static_cast<int64_t>(counts.size()); }
    int64_t k_gt() const { return counts.empty() ? 0 : static_cast<int64_t>(counts[0].size()); }
    int64_t total() const;
};

ConfusionMatrix confusion_from_labels(const std::vector<int64_t>& predictions, const std::vector<int64_t>& truths,
                                      int64_t k, int64_t k_gt);

enum class MapKind { permutation, many_to_one };

struct EvalMap {
    MapKind kind = MapKind::permutation;
    std::vector<int64_t> map;  // ground-truth class per predicted cluster

    int64_t operator()(int64_t pred) const { return map[static_cast<size_t>(pred)]; }
};

// Permutation maximizing the matched total, via min-cost assignment on
// negated counts (O(k^3) augmenting paths with potentials).
EvalMap hungarian_match(const ConfusionMatrix& counts);

// map(c) = argmax_g counts[c][g]; all-zero rows and ties resolve to the
// lowest class index.
EvalMap majority_map(const ConfusionMatrix& counts);

// Fraction of samples with map(pred) == truth. Errors on empty input or
// out-of-range labels.
double accuracy(const std::vector<int64_t>& predictions, const std::vector<int64_t>& truths, const EvalMap& map,
                int64_t k_gt);

// Index of the lowest loss; ties to the lowest index. Errors on NaN.
int64_t select_subhead(const std::vector<double>& losses);

}  // namespace iic
