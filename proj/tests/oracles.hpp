#ifndef AVNSL_TEST_ORACLES_HPP
#define AVNSL_TEST_ORACLES_HPP

// Reference implementations used only by the tests. Everything here is
// written from the definitions, not from the library code, so the two sides
// can disagree when one of them is wrong.

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>
#include <vector>

#include "avnsl/eval.hpp"
#include "avnsl/grad.hpp"
#include "avnsl/rng.hpp"
#include "avnsl/tree.hpp"
#include "avnsl/types.hpp"

namespace oracle {

// ---------------------------------------------------------------------------
// Finite differences

// Central-difference gradient of f with respect to every entry of t.v.
inline avnsl::Mat numeric_grad(const std::function<double()>& f, avnsl::Tensor& t,
                               double eps = 1e-5) {
    avnsl::Mat g(t.v.rows(), t.v.cols());
    for (long r = 0; r < t.v.rows(); ++r) {
        for (long c = 0; c < t.v.cols(); ++c) {
            double saved = t.v(r, c);
            t.v(r, c) = saved + eps;
            double hi = f();
            t.v(r, c) = saved - eps;
            double lo = f();
            t.v(r, c) = saved;
            g(r, c) = (hi - lo) / (2.0 * eps);
        }
    }
    return g;
}

// Worst relative error between an analytic and a numeric gradient, with an
// absolute floor so near-zero entries do not blow the ratio up.
inline double grad_rel_error(const avnsl::Mat& analytic, const avnsl::Mat& numeric,
                             double floor_val = 1e-6) {
    double worst = 0.0;
    for (long r = 0; r < analytic.rows(); ++r)
        for (long c = 0; c < analytic.cols(); ++c) {
            double denom = std::max({std::abs(analytic(r, c)), std::abs(numeric(r, c)), floor_val});
            worst = std::max(worst, std::abs(analytic(r, c) - numeric(r, c)) / denom);
        }
    return worst;
}

// ---------------------------------------------------------------------------
// Exhaustive maximum-weight span matching

inline double overlap_of(const avnsl::TimeSpan& a, const avnsl::TimeSpan& b) {
    return std::max(0.0, std::min(a.end, b.end) - std::max(a.start, b.start));
}

inline double iou_of(const avnsl::TimeSpan& a, const avnsl::TimeSpan& b) {
    double inter = overlap_of(a, b);
    double uni = (a.end - a.start) + (b.end - b.start) - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

// Best total overlap over all one-to-one assignments, by trying every option
// for every span of a. Usable up to ~6x6.
inline double exhaustive_matching_total(const avnsl::Segmentation& a, const avnsl::Segmentation& b) {
    std::vector<bool> used(b.size(), false);
    std::function<double(std::size_t)> go = [&](std::size_t i) -> double {
        if (i == a.size()) return 0.0;
        double best = go(i + 1); // leave a_i unmatched
        for (std::size_t j = 0; j < b.size(); ++j) {
            if (used[j]) continue;
            used[j] = true;
            best = std::max(best, overlap_of(a.spans[i], b.spans[j]) + go(i + 1));
            used[j] = false;
        }
        return best;
    };
    return go(0);
}

// ---------------------------------------------------------------------------
// Brute-force structured span alignment

// All-pairs ancestor closure; anc[i][j] is true when i is a proper ancestor
// of j.
inline std::vector<std::vector<bool>> ancestor_matrix(const avnsl::SpanTree& t) {
    int n = t.size();
    std::vector<std::vector<bool>> anc(n, std::vector<bool>(n, false));
    std::function<void(int, std::vector<int>&)> walk = [&](int id, std::vector<int>& path) {
        for (int p : path) anc[p][id] = true;
        path.push_back(id);
        for (int c : t.nodes[id].children) walk(c, path);
        path.pop_back();
    };
    std::vector<int> path;
    walk(t.root, path);
    return anc;
}

// Maximum total IoU over all alignments that preserve ancestor/descendant
// relations in both directions and never cross in time. Exponential search
// with incremental pruning; fine for trees up to 8 nodes.
inline double brute_force_alignment(const avnsl::SpanTree& t1, const avnsl::SpanTree& t2) {
    const int n = t1.size(), m = t2.size();
    auto anc1 = ancestor_matrix(t1);
    auto anc2 = ancestor_matrix(t2);

    std::vector<std::pair<int, int>> chosen;
    std::vector<bool> used(m, false);
    double best = 0.0;

    auto compatible = [&](int a, int b) {
        for (const auto& [a2, b2] : chosen) {
            if (anc1[a][a2] != anc2[b][b2]) return false;
            if (anc1[a2][a] != anc2[b2][b]) return false;
            if (!anc1[a][a2] && !anc1[a2][a]) {
                // Unrelated in both trees: must keep the same temporal order.
                bool before1 = t1.nodes[a].span.start < t1.nodes[a2].span.start;
                bool before2 = t2.nodes[b].span.start < t2.nodes[b2].span.start;
                if (before1 != before2) return false;
            }
        }
        return true;
    };

    std::function<void(int, double)> go = [&](int a, double total) {
        if (a == n) {
            best = std::max(best, total);
            return;
        }
        go(a + 1, total); // leave node a unaligned
        for (int b = 0; b < m; ++b) {
            if (used[b] || !compatible(a, b)) continue;
            used[b] = true;
            chosen.emplace_back(a, b);
            go(a + 1, total + iou_of(t1.nodes[a].span, t2.nodes[b].span));
            chosen.pop_back();
            used[b] = false;
        }
    };
    go(0, 0.0);
    return best;
}

inline double brute_force_saiou(const avnsl::SpanTree& t1, const avnsl::SpanTree& t2) {
    return 2.0 * brute_force_alignment(t1, t2) / static_cast<double>(t1.size() + t2.size());
}

// ---------------------------------------------------------------------------
// Tree enumeration and generation

// Every binary tree over leaves [lo, hi) as its internal bracket set.
inline std::vector<std::set<avnsl::IndexSpan>> enumerate_binary_trees(int lo, int hi) {
    std::vector<std::set<avnsl::IndexSpan>> out;
    if (hi - lo == 1) {
        out.push_back({});
        return out;
    }
    for (int k = lo + 1; k < hi; ++k) {
        for (const auto& left : enumerate_binary_trees(lo, k)) {
            for (const auto& right : enumerate_binary_trees(k, hi)) {
                std::set<avnsl::IndexSpan> spans = left;
                spans.insert(right.begin(), right.end());
                spans.insert(avnsl::IndexSpan{lo, hi});
                out.push_back(std::move(spans));
            }
        }
    }
    return out;
}

// Random binary ParseTree over given leaf spans, merging a uniformly chosen
// adjacent pair at every step. Covers shapes trivial_tree cannot reach the
// same way, since it is a different process.
inline avnsl::ParseTree random_merge_tree(const std::vector<avnsl::TimeSpan>& leaf_spans,
                                          avnsl::Rng& rng) {
    int n = static_cast<int>(leaf_spans.size());
    std::vector<int> frontier(n);
    for (int i = 0; i < n; ++i) frontier[i] = i;
    std::vector<std::pair<int, int>> merges;
    while (frontier.size() > 1) {
        int k = rng.uniform_int(static_cast<int>(frontier.size()) - 1);
        merges.emplace_back(frontier[k], frontier[k + 1]);
        frontier[k] = n + static_cast<int>(merges.size()) - 1;
        frontier.erase(frontier.begin() + k + 1);
    }
    return avnsl::ParseTree::from_merges(leaf_spans, merges);
}

inline std::vector<avnsl::TimeSpan> random_leaf_spans(int n, avnsl::Rng& rng) {
    std::vector<avnsl::TimeSpan> spans;
    double t = rng.uniform(0.0, 0.2);
    for (int i = 0; i < n; ++i) {
        double len = rng.uniform(0.05, 0.4);
        spans.emplace_back(t, t + len);
        t += len + (rng.bernoulli(0.3) ? rng.uniform(0.01, 0.15) : 0.0);
    }
    return spans;
}

// Random ordered tree with arbitrary arity over a time interval; children
// subdivide the parent with optional shrink so gaps occur. Node budget keeps
// the brute-force alignment tractable.
inline avnsl::SpanTree random_span_tree(int max_nodes, avnsl::Rng& rng) {
    avnsl::SpanTree t;
    int budget = max_nodes;
    std::function<int(double, double, int)> build = [&](double lo, double hi, int depth) -> int {
        int id = t.size();
        t.nodes.push_back({avnsl::TimeSpan(lo, hi), {}});
        --budget;
        if (depth >= 3 || budget <= 0 || rng.bernoulli(0.35)) return id;
        int arity = 1 + rng.uniform_int(std::min(3, std::max(1, budget)));
        if (arity < 2) return id;
        std::vector<double> cuts{lo};
        for (int c = 1; c < arity; ++c) cuts.push_back(lo + (hi - lo) * c / arity);
        cuts.push_back(hi);
        std::vector<int> children;
        for (int c = 0; c < arity && budget > 0; ++c) {
            double a = cuts[c], b = cuts[c + 1];
            double shrink = rng.uniform(0.0, 0.2) * (b - a);
            children.push_back(build(a + shrink / 2, b - shrink / 2, depth + 1));
        }
        t.nodes[id].children = children;
        return id;
    };
    build(0.0, rng.uniform(1.0, 3.0), 0);
    t.root = 0;
    return t;
}

inline avnsl::Segmentation random_segmentation(int n, avnsl::Rng& rng) {
    return avnsl::Segmentation{random_leaf_spans(n, rng)};
}

} // namespace oracle

#endif
