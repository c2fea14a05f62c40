#ifndef AVNSL_EVAL_HPP
#define AVNSL_EVAL_HPP

#include "avnsl/tree.hpp"
#include "avnsl/types.hpp"

#include <map>
#include <set>
#include <string>
#include <vector>

namespace avnsl {

// Serialization-neutral tree of time spans with temporally ordered children;
// the common input shape for structural metrics.
struct SpanTree {
    struct Node {
        TimeSpan span;
        std::vector<int> children;
    };
    std::vector<Node> nodes;
    int root = -1;

    int size() const { return static_cast<int>(nodes.size()); }
};

SpanTree span_tree_of(const ParseTree& tree);
SpanTree span_tree_of(const LabeledRefTree& tree);

// Segment-index brackets of a reference tree over its own leaves, in temporal
// order. include_trivial=false drops singletons and the whole-sentence span.
std::set<IndexSpan> ref_tree_brackets(const LabeledRefTree& tree, bool include_trivial);

struct ParsevalScore {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

// Unlabeled bracket P/R/F1 over non-trivial spans. Both sets empty scores 1;
// trees over differing leaf counts are an error (use saiou instead).
ParsevalScore parseval_f1(const ParseTree& pred, const ParseTree& gold);
ParsevalScore parseval_f1(const ParseTree& pred, const LabeledRefTree& gold);
// For predictions reloaded from disk, where only the span form survives.
ParsevalScore parseval_f1(const LabeledRefTree& pred, const LabeledRefTree& gold);

struct ConstituentRecall {
    std::map<std::string, int> support;    // gold constituents per label
    std::map<std::string, int> recalled;
    std::map<std::string, double> recall;  // only labels with support > 0
};

// A gold constituent counts as recalled when some predicted node covers the
// same time span within `tol` seconds at both endpoints (exact segmentations
// match at tol 0). Labels absent from the gold are omitted (n/a).
ConstituentRecall constituent_recall(const ParseTree& pred, const LabeledRefTree& gold,
                                     double tol = 0.02,
                                     const std::vector<std::string>& labels = {"NP", "VP", "PP",
                                                                               "ADJP"});
ConstituentRecall constituent_recall(const LabeledRefTree& pred, const LabeledRefTree& gold,
                                     double tol = 0.02,
                                     const std::vector<std::string>& labels = {"NP", "VP", "PP",
                                                                               "ADJP"});

// Maximum structured average IoU over valid alignments: aligned pairs must
// preserve ancestor/descendant relations in both directions and sibling
// (temporal) order. Exact DP; score = 2 * best(root, root) / (n + m).
double saiou(const SpanTree& t1, const SpanTree& t2);
double saiou(const ParseTree& t1, const ParseTree& t2);
double saiou(const ParseTree& t1, const LabeledRefTree& t2);
double saiou(const LabeledRefTree& t1, const ParseTree& t2);
double saiou(const LabeledRefTree& t1, const LabeledRefTree& t2);

} // namespace avnsl

#endif
