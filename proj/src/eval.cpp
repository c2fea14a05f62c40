#include "avnsl/eval.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace avnsl {

SpanTree span_tree_of(const ParseTree& tree) {
    tree.validate();
    SpanTree out;
    out.nodes.resize(tree.n_nodes());
    for (int i = 0; i < tree.n_nodes(); ++i) {
        out.nodes[i].span = tree.node_time_span(i);
        const ParseTree::Node& nd = tree.node(i);
        if (!nd.is_leaf()) out.nodes[i].children = {nd.left, nd.right};
    }
    out.root = tree.root();
    return out;
}

SpanTree span_tree_of(const LabeledRefTree& tree) {
    tree.validate();
    SpanTree out;
    out.nodes.resize(tree.n_nodes());
    for (int i = 0; i < tree.n_nodes(); ++i) {
        out.nodes[i].span = tree.node(i).span;
        out.nodes[i].children = tree.node(i).children;
    }
    out.root = tree.root();
    return out;
}

std::set<IndexSpan> ref_tree_brackets(const LabeledRefTree& tree, bool include_trivial) {
    std::vector<int> leaves = tree.leaves();
    std::map<int, int> leaf_index;
    for (std::size_t i = 0; i < leaves.size(); ++i)
        leaf_index[leaves[i]] = static_cast<int>(i);
    int n = static_cast<int>(leaves.size());

    std::set<IndexSpan> out;
    // Interval of node = [min leaf index, max leaf index + 1] over descendants.
    auto walk = [&](auto&& self, int id) -> IndexSpan {
        const LabeledRefTree::Node& nd = tree.node(id);
        if (nd.is_leaf()) return {leaf_index.at(id), leaf_index.at(id) + 1};
        IndexSpan span{n, 0};
        for (int c : nd.children) {
            IndexSpan cs = self(self, c);
            span.begin = std::min(span.begin, cs.begin);
            span.end = std::max(span.end, cs.end);
        }
        if (include_trivial || (span.width() >= 2 && span.width() < n)) out.insert(span);
        return span;
    };
    if (tree.n_nodes() > 0) walk(walk, tree.root());
    return out;
}

namespace {

ParsevalScore bracket_prf(const std::set<IndexSpan>& pred, const std::set<IndexSpan>& gold) {
    ParsevalScore s;
    if (pred.empty() && gold.empty()) {
        s.precision = s.recall = s.f1 = 1.0;
        return s;
    }
    std::size_t inter = 0;
    for (const IndexSpan& sp : pred) inter += gold.count(sp);
    s.precision = pred.empty() ? 0.0 : static_cast<double>(inter) / static_cast<double>(pred.size());
    s.recall = gold.empty() ? 0.0 : static_cast<double>(inter) / static_cast<double>(gold.size());
    s.f1 = s.precision + s.recall == 0.0
               ? 0.0
               : 2.0 * s.precision * s.recall / (s.precision + s.recall);
    return s;
}

[[noreturn]] void leaf_mismatch(int pred_n, int gold_n) {
    throw std::invalid_argument("parseval_f1: trees cover different segment counts (" +
                                std::to_string(pred_n) + " vs " + std::to_string(gold_n) +
                                "); use saiou for trees over different segmentations");
}

} // namespace

ParsevalScore parseval_f1(const ParseTree& pred, const ParseTree& gold) {
    if (pred.n_leaves() != gold.n_leaves()) leaf_mismatch(pred.n_leaves(), gold.n_leaves());
    return bracket_prf(tree_spans(pred, false), tree_spans(gold, false));
}

ParsevalScore parseval_f1(const ParseTree& pred, const LabeledRefTree& gold) {
    int gold_n = static_cast<int>(gold.leaves().size());
    if (pred.n_leaves() != gold_n) leaf_mismatch(pred.n_leaves(), gold_n);
    return bracket_prf(tree_spans(pred, false), ref_tree_brackets(gold, false));
}

ParsevalScore parseval_f1(const LabeledRefTree& pred, const LabeledRefTree& gold) {
    int pred_n = static_cast<int>(pred.leaves().size());
    int gold_n = static_cast<int>(gold.leaves().size());
    if (pred_n != gold_n) leaf_mismatch(pred_n, gold_n);
    return bracket_prf(ref_tree_brackets(pred, false), ref_tree_brackets(gold, false));
}

namespace {

ConstituentRecall recall_against_spans(const std::vector<TimeSpan>& pred_spans,
                                       const LabeledRefTree& gold, double tol,
                                       const std::vector<std::string>& labels) {
    if (tol < 0.0) throw std::invalid_argument("constituent_recall: negative tol");
    ConstituentRecall out;
    for (const std::string& l : labels) {
        out.support[l] = 0;
        out.recalled[l] = 0;
    }
    for (int i = 0; i < gold.n_nodes(); ++i) {
        const LabeledRefTree::Node& nd = gold.node(i);
        if (std::find(labels.begin(), labels.end(), nd.label) == labels.end()) continue;
        out.support[nd.label] += 1;
        for (const TimeSpan& ps : pred_spans) {
            if (std::abs(ps.start - nd.span.start) <= tol &&
                std::abs(ps.end - nd.span.end) <= tol) {
                out.recalled[nd.label] += 1;
                break;
            }
        }
    }
    for (const std::string& l : labels)
        if (out.support[l] > 0)
            out.recall[l] =
                static_cast<double>(out.recalled[l]) / static_cast<double>(out.support[l]);
    return out;
}

} // namespace

ConstituentRecall constituent_recall(const ParseTree& pred, const LabeledRefTree& gold,
                                     double tol, const std::vector<std::string>& labels) {
    std::vector<TimeSpan> pred_spans;
    for (int i = 0; i < pred.n_nodes(); ++i) pred_spans.push_back(pred.node_time_span(i));
    return recall_against_spans(pred_spans, gold, tol, labels);
}

ConstituentRecall constituent_recall(const LabeledRefTree& pred, const LabeledRefTree& gold,
                                     double tol, const std::vector<std::string>& labels) {
    std::vector<TimeSpan> pred_spans;
    for (int i = 0; i < pred.n_nodes(); ++i) pred_spans.push_back(pred.node(i).span);
    return recall_against_spans(pred_spans, gold, tol, labels);
}

namespace {

// Postorder view of a tree for the alignment DP: per postorder position, the
// node's span and the position of its leftmost leaf. Keyroots are the heads
// of the leftmost paths (every node lies on exactly one), ascending.
struct PostorderView {
    std::vector<TimeSpan> span;
    std::vector<int> lml;
    std::vector<int> keyroots;
};

PostorderView postorder_view(const SpanTree& t) {
    PostorderView v;
    const int n = t.size();
    v.span.resize(n);
    v.lml.resize(n, 0);
    int next = 0;
    std::function<int(int)> walk = [&](int id) -> int {
        int first = -1;
        for (int c : t.nodes[id].children) {
            int cpos = walk(c);
            if (first < 0) first = v.lml[cpos];
        }
        int pos = next++;
        v.span[pos] = t.nodes[id].span;
        v.lml[pos] = first < 0 ? pos : first;
        return pos;
    };
    walk(t.root);
    std::vector<bool> seen(n, false);
    for (int pos = n - 1; pos >= 0; --pos) {
        if (!seen[v.lml[pos]]) {
            seen[v.lml[pos]] = true;
            v.keyroots.push_back(pos);
        }
    }
    std::sort(v.keyroots.begin(), v.keyroots.end());
    return v;
}

} // namespace

double saiou(const SpanTree& t1, const SpanTree& t2) {
    if (t1.size() < 1 || t2.size() < 1 || t1.root < 0 || t2.root < 0)
        throw std::invalid_argument("saiou: trees must have at least one node");
    const int n = t1.size(), m = t2.size();
    PostorderView a = postorder_view(t1);
    PostorderView b = postorder_view(t2);

    // Maximum-weight node matching preserving ancestry in both directions and
    // the temporal order of unrelated nodes, via the Zhang-Shasha interval
    // recursion with unmatched nodes free of charge. A postorder interval is
    // an ordered forest, and dropping its last node exposes that node's
    // children to the surrounding forest, so an unmatched node's children may
    // match across several subtrees on the other side. A per-pair recursion
    // over child lists misses exactly those matchings. td(i, j) holds the
    // optimum for the subtree pair rooted at postorder positions (i, j).
    Mat td = Mat::Zero(n, m);
    for (int k1 : a.keyroots) {
        const int la = a.lml[k1];
        for (int k2 : b.keyroots) {
            const int lb = b.lml[k2];
            Mat fd = Mat::Zero(k1 - la + 2, k2 - lb + 2);
            for (int i = la; i <= k1; ++i) {
                for (int j = lb; j <= k2; ++j) {
                    const int di = i - la + 1, dj = j - lb + 1;
                    if (a.lml[i] == la && b.lml[j] == lb) {
                        // Both prefixes are whole subtrees: the match i <-> j
                        // is admissible, and the cell doubles as td(i, j).
                        fd(di, dj) =
                            std::max({fd(di - 1, dj), fd(di, dj - 1),
                                      fd(di - 1, dj - 1) + span_iou(a.span[i], b.span[j])});
                        td(i, j) = fd(di, dj);
                    } else {
                        fd(di, dj) = std::max({fd(di - 1, dj), fd(di, dj - 1),
                                               fd(a.lml[i] - la, b.lml[j] - lb) + td(i, j)});
                    }
                }
            }
        }
    }
    return 2.0 * td(n - 1, m - 1) / static_cast<double>(n + m);
}

double saiou(const ParseTree& t1, const ParseTree& t2) {
    return saiou(span_tree_of(t1), span_tree_of(t2));
}
double saiou(const ParseTree& t1, const LabeledRefTree& t2) {
    return saiou(span_tree_of(t1), span_tree_of(t2));
}
double saiou(const LabeledRefTree& t1, const ParseTree& t2) {
    return saiou(span_tree_of(t1), span_tree_of(t2));
}
double saiou(const LabeledRefTree& t1, const LabeledRefTree& t2) {
    return saiou(span_tree_of(t1), span_tree_of(t2));
}

} // namespace avnsl
