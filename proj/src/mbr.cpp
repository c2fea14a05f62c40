#include "avnsl/mbr.hpp"

#include <algorithm>
#include <iostream>
#include <numeric>

namespace avnsl {

namespace {

// Minimum-cost assignment on a square matrix (potentials method, O(n^3)).
// Returns row -> column.
std::vector<int> min_cost_assignment(const Mat& cost) {
    int n = static_cast<int>(cost.rows());
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            int i0 = p[j0], j1 = -1;
            double delta = inf;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }
    std::vector<int> row_to_col(n, -1);
    for (int j = 1; j <= n; ++j)
        if (p[j] >= 1) row_to_col[p[j] - 1] = j - 1;
    return row_to_col;
}

} // namespace

std::vector<std::pair<int, int>> max_weight_span_matching(const Segmentation& a,
                                                          const Segmentation& b) {
    a.validate();
    b.validate();
    int na = static_cast<int>(a.size()), nb = static_cast<int>(b.size());
    if (na == 0 || nb == 0) return {};
    int n = std::max(na, nb);
    Mat cost = Mat::Zero(n, n);
    for (int i = 0; i < na; ++i)
        for (int j = 0; j < nb; ++j) cost(i, j) = -span_overlap(a.spans[i], b.spans[j]);
    std::vector<int> match = min_cost_assignment(cost);
    std::vector<std::pair<int, int>> out;
    for (int i = 0; i < na; ++i) {
        int j = match[i];
        if (j < 0 || j >= nb) continue;
        if (span_overlap(a.spans[i], b.spans[j]) <= 0.0) continue;
        out.emplace_back(i, j);
    }
    return out;
}

double miou_loss(const Segmentation& a, const Segmentation& b, MiouNorm norm) {
    if (a.empty() || b.empty()) {
        std::cerr << "warning: miou_loss over an empty segmentation, returning 0\n";
        return 0.0;
    }
    std::vector<std::pair<int, int>> pairs = max_weight_span_matching(a, b);
    if (pairs.empty()) return 0.0;
    double sum = 0.0;
    for (const auto& [i, j] : pairs) sum += span_iou(a.spans[i], b.spans[j]);
    double denom = norm == MiouNorm::Matched
                       ? static_cast<double>(pairs.size())
                       : static_cast<double>(std::max(a.size(), b.size()));
    return -(sum / denom);
}

double tree_f1_loss(const ParseTree& t1, const ParseTree& t2) {
    if (t1.n_leaves() != t2.n_leaves())
        throw std::invalid_argument("tree_f1_loss: trees cover different segment counts (" +
                                    std::to_string(t1.n_leaves()) + " vs " +
                                    std::to_string(t2.n_leaves()) + ")");
    std::set<IndexSpan> b1 = tree_spans(t1, false);
    std::set<IndexSpan> b2 = tree_spans(t2, false);
    if (b1.empty() && b2.empty()) return 0.0;
    std::size_t inter = 0;
    for (const IndexSpan& s : b1) inter += b2.count(s);
    double f1 = 2.0 * static_cast<double>(inter) / static_cast<double>(b1.size() + b2.size());
    return 1.0 - f1;
}

TwoStageResult two_stage_select(const std::vector<std::vector<Segmentation>>& validation_candidates,
                                const std::vector<std::vector<Segmentation>>& train_candidates,
                                int k, const SegLossFn& loss) {
    std::size_t grid = validation_candidates.size();
    if (grid == 0 || train_candidates.size() != grid)
        throw std::invalid_argument("two_stage_select: grid sizes differ or are empty");
    std::size_t n_val = validation_candidates[0].size();
    std::size_t n_train = train_candidates[0].size();
    for (std::size_t g = 0; g < grid; ++g)
        if (validation_candidates[g].size() != n_val || train_candidates[g].size() != n_train)
            throw std::invalid_argument("two_stage_select: ragged candidate lists");
    if (n_val == 0 || n_train == 0)
        throw std::invalid_argument("two_stage_select: empty corpus");
    if (k < 1) throw std::invalid_argument("two_stage_select: k < 1");
    SegLossFn l = loss ? loss : [](const Segmentation& x, const Segmentation& y) {
        return miou_loss(x, y);
    };

    TwoStageResult out;
    out.stage1_tally.assign(grid, 0);
    for (std::size_t u = 0; u < n_val; ++u) {
        std::vector<Segmentation> cands;
        cands.reserve(grid);
        for (std::size_t g = 0; g < grid; ++g) cands.push_back(validation_candidates[g][u]);
        out.stage1_tally[mbr_select(cands, l)] += 1;
    }

    std::vector<std::size_t> order(grid);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
        return out.stage1_tally[x] > out.stage1_tally[y];
    });
    order.resize(std::min<std::size_t>(order.size(), static_cast<std::size_t>(k)));
    out.top_sets = order;

    out.train_choice.resize(n_train);
    for (std::size_t u = 0; u < n_train; ++u) {
        std::vector<Segmentation> cands;
        cands.reserve(out.top_sets.size());
        for (std::size_t g : out.top_sets) cands.push_back(train_candidates[g][u]);
        out.train_choice[u] = out.top_sets[mbr_select(cands, l)];
    }
    return out;
}

} // namespace avnsl
