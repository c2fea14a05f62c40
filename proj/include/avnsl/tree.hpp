#ifndef AVNSL_TREE_HPP
#define AVNSL_TREE_HPP

#include "avnsl/types.hpp"

#include <set>
#include <string>
#include <utility>
#include <vector>

namespace avnsl {

// Segment-index interval [begin, end), end > begin.
struct IndexSpan {
    int begin = 0;
    int end = 0;

    int width() const { return end - begin; }
    bool operator==(const IndexSpan& o) const { return begin == o.begin && end == o.end; }
    bool operator<(const IndexSpan& o) const {
        return begin != o.begin ? begin < o.begin : end < o.end;
    }
};

// Binary tree over segment indices. Leaves are single segments; every internal
// node has exactly two children that partition its interval. Time spans of
// internal nodes are the hulls of their leaf spans.
class ParseTree {
public:
    struct Node {
        IndexSpan span;
        int left = -1;  // node index, -1 for leaves
        int right = -1;

        bool is_leaf() const { return left < 0; }
    };

    ParseTree() = default;

    // Single-leaf tree.
    static ParseTree leaf(TimeSpan span);

    // Assemble from a merge list: merges[k] = (left node id, right node id).
    // Node ids 0..n-1 are the leaves in order; each merge creates node n+k.
    static ParseTree from_merges(const std::vector<TimeSpan>& leaf_spans,
                                 const std::vector<std::pair<int, int>>& merges);

    int n_leaves() const { return n_leaves_; }
    int n_nodes() const { return static_cast<int>(nodes_.size()); }
    int root() const { return root_; }
    const Node& node(int i) const { return nodes_[i]; }
    const std::vector<Node>& nodes() const { return nodes_; }
    const std::vector<TimeSpan>& leaf_spans() const { return leaf_spans_; }

    // Hull of the node's leaf time spans.
    TimeSpan node_time_span(int i) const;

    void validate() const;

    // Structural equality (same shape over the same leaf count).
    bool same_shape(const ParseTree& other) const;

    bool operator==(const ParseTree& o) const;

private:
    std::vector<Node> nodes_;     // leaves first (ids 0..n-1), then internals
    std::vector<TimeSpan> leaf_spans_;
    int n_leaves_ = 0;
    int root_ = -1;
};

// All internal-node intervals of the tree. With include_trivial=false the
// width-1 intervals and the full-sentence interval are excluded.
std::set<IndexSpan> tree_spans(const ParseTree& tree, bool include_trivial);

// Canonical text form, e.g. "((0 1) (2 3))"; a single leaf prints as "0".
std::string tree_to_sexpr(const ParseTree& tree);

// Parse the canonical text form. Leaf time spans are taken from `leaf_spans`,
// which must list one span per leaf index.
ParseTree tree_from_sexpr(const std::string& text, const std::vector<TimeSpan>& leaf_spans);

// Arbitrary-arity reference tree. Nodes carry time spans and optional labels
// from {NP, VP, PP, ADJP, other}.
class LabeledRefTree {
public:
    struct Node {
        TimeSpan span;
        std::string label;          // empty = unlabeled
        std::vector<int> children;  // node indices, temporally ordered

        bool is_leaf() const { return children.empty(); }
    };

    LabeledRefTree() = default;
    LabeledRefTree(std::vector<Node> nodes, int root);

    int n_nodes() const { return static_cast<int>(nodes_.size()); }
    int root() const { return root_; }
    const Node& node(int i) const { return nodes_[i]; }
    const std::vector<Node>& nodes() const { return nodes_; }

    // Leaf node indices in temporal order.
    std::vector<int> leaves() const;

    void validate() const;

    bool operator==(const LabeledRefTree& o) const;

private:
    std::vector<Node> nodes_;
    int root_ = -1;
};

// Annotated S-expression: node = "(label:start:end child child ...)", label "-"
// for unlabeled nodes. Doubles print with full round-trip precision.
std::string ref_tree_to_sexpr(const LabeledRefTree& tree);
LabeledRefTree ref_tree_from_sexpr(const std::string& text);

// Binarized view of a ParseTree as a reference tree (labels empty).
LabeledRefTree ref_tree_from_parse_tree(const ParseTree& tree);

} // namespace avnsl

#endif
