#include "iic/evalmap.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace iic {

int64_t ConfusionMatrix::total() const {
    int64_t t = 0;
    for (const auto& row : counts)
        for (int64_t v : row) t += v;
    return t;
}

ConfusionMatrix confusion_from_labels(const std::vector<int64_t>& predictions, const std::vector<int64_t>& truths,
                                      int64_t k, int64_t k_gt) {
    if (predictions.size() != truths.size())
        throw std::invalid_argument("confusion_from_labels: length mismatch");
    ConfusionMatrix cm;
    cm.counts.assign(static_cast<size_t>(k), std::vector<int64_t>(static_cast<size_t>(k_gt), 0));
    for (size_t i = 0; i < predictions.size(); ++i) {
        int64_t p = predictions[i], g = truths[i];
        if (p < 0 || p >= k) throw std::invalid_argument("confusion_from_labels: prediction out of range");
        if (g < 0 || g >= k_gt) throw std::invalid_argument("confusion_from_labels: truth out of range");
        ++cm.counts[static_cast<size_t>(p)][static_cast<size_t>(g)];
    }
    return cm;
}

// Shortest-augmenting-path assignment with potentials on an n x n cost
// matrix (minimization). Rows/columns are scanned in index order, so equal
// costs resolve to the lowest-index assignment.
static std::vector<int64_t> min_cost_assignment(const std::vector<std::vector<double>>& cost) {
    const int64_t n = static_cast<int64_t>(cost.size());
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(static_cast<size_t>(n + 1), 0.0), v(static_cast<size_t>(n + 1), 0.0);
    std::vector<int64_t> p(static_cast<size_t>(n + 1), 0), way(static_cast<size_t>(n + 1), 0);
    for (int64_t i = 1; i <= n; ++i) {
        p[0] = i;
        int64_t j0 = 0;
        std::vector<double> minv(static_cast<size_t>(n + 1), inf);
        std::vector<char> used(static_cast<size_t>(n + 1), 0);
        do {
            used[static_cast<size_t>(j0)] = 1;
            int64_t i0 = p[static_cast<size_t>(j0)], j1 = 0;
            double delta = inf;
            for (int64_t j = 1; j <= n; ++j) {
                if (used[static_cast<size_t>(j)]) continue;
                double cur = cost[static_cast<size_t>(i0 - 1)][static_cast<size_t>(j - 1)] -
                             u[static_cast<size_t>(i0)] - v[static_cast<size_t>(j)];
                if (cur < minv[static_cast<size_t>(j)]) {
                    minv[static_cast<size_t>(j)] = cur;
                    way[static_cast<size_t>(j)] = j0;
                }
                if (minv[static_cast<size_t>(j)] < delta) {
                    delta = minv[static_cast<size_t>(j)];
                    j1 = j;
                }
            }
            for (int64_t j = 0; j <= n; ++j) {
                if (used[static_cast<size_t>(j)]) {
                    u[static_cast<size_t>(p[static_cast<size_t>(j)])] += delta;
                    v[static_cast<size_t>(j)] -= delta;
                } else {
                    minv[static_cast<size_t>(j)] -= delta;
                }
            }
            j0 = j1;
        } while (p[static_cast<size_t>(j0)] != 0);
        do {
            int64_t j1 = way[static_cast<size_t>(j0)];
            p[static_cast<size_t>(j0)] = p[static_cast<size_t>(j1)];
            j0 = j1;
        } while (j0);
    }
    std::vector<int64_t> row_to_col(static_cast<size_t>(n), -1);
    for (int64_t j = 1; j <= n; ++j)
        if (p[static_cast<size_t>(j)] > 0) row_to_col[static_cast<size_t>(p[static_cast<size_t>(j)] - 1)] = j - 1;
    return row_to_col;
}

EvalMap hungarian_match(const ConfusionMatrix& counts) {
    const int64_t k = counts.k();
    if (k < 1 || counts.k_gt() != k)
        throw std::invalid_argument("hungarian_match: square confusion matrix required, got " +
                                    std::to_string(k) + "x" + std::to_string(counts.k_gt()));
    std::vector<std::vector<double>> cost(static_cast<size_t>(k), std::vector<double>(static_cast<size_t>(k)));
    for (int64_t c = 0; c < k; ++c)
        for (int64_t g = 0; g < k; ++g)
            cost[static_cast<size_t>(c)][static_cast<size_t>(g)] =
                -static_cast<double>(counts.counts[static_cast<size_t>(c)][static_cast<size_t>(g)]);
    EvalMap out;
    out.kind = MapKind::permutation;
    out.map = min_cost_assignment(cost);
    return out;
}

EvalMap majority_map(const ConfusionMatrix& counts) {
    if (counts.k() < counts.k_gt())
        throw std::invalid_argument("majority_map: requires k >= k_gt");
    EvalMap out;
    out.kind = MapKind::many_to_one;
    out.map.reserve(static_cast<size_t>(counts.k()));
    for (const auto& row : counts.counts) {
        int64_t best = 0;
        for (size_t g = 1; g < row.size(); ++g)
            if (row[g] > row[static_cast<size_t>(best)]) best = static_cast<int64_t>(g);
        out.map.push_back(best);
    }
    return out;
}

double accuracy(const std::vector<int64_t>& predictions, const std::vector<int64_t>& truths, const EvalMap& map,
                int64_t k_gt) {
    if (predictions.size() != truths.size()) throw std::invalid_argument("accuracy: length mismatch");
    if (predictions.empty()) throw std::invalid_argument("accuracy: empty evaluation set");
    const int64_t k = static_cast<int64_t>(map.map.size());
    int64_t hits = 0;
    for (size_t i = 0; i < predictions.size(); ++i) {
        int64_t p = predictions[i], g = truths[i];
        if (p < 0 || p >= k) throw std::invalid_argument("accuracy: prediction out of range");
        if (g < 0 || g >= k_gt) throw std::invalid_argument("accuracy: truth out of range");
        if (map(p) == g) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

int64_t select_subhead(const std::vector<double>& losses) {
    if (losses.empty()) throw std::invalid_argument("select_subhead: no losses");
    int64_t best = 0;
    for (size_t i = 0; i < losses.size(); ++i) {
        if (std::isnan(losses[i])) throw std::invalid_argument("select_subhead: NaN loss at head " + std::to_string(i));
        if (losses[i] < losses[static_cast<size_t>(best)]) best = static_cast<int64_t>(i);
    }
    return best;
}

}  // namespace iic
