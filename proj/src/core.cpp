#include "avnsl/types.hpp"
#include "avnsl/tree.hpp"
#include "avnsl/utterance.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace avnsl {

double span_overlap(const TimeSpan& a, const TimeSpan& b) {
    double lo = std::max(a.start, b.start);
    double hi = std::min(a.end, b.end);
    return std::max(0.0, hi - lo);
}

double span_iou(const TimeSpan& a, const TimeSpan& b) {
    double inter = span_overlap(a, b);
    double uni = a.duration() + b.duration() - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

TimeSpan span_hull(const TimeSpan& a, const TimeSpan& b) {
    return TimeSpan(std::min(a.start, b.start), std::max(a.end, b.end));
}

void FrameMatrix::validate() const {
    if (frames.rows() < 1 || frames.cols() < 1)
        throw std::invalid_argument("FrameMatrix: T and D must be >= 1");
    if (!(frame_rate > 0.0)) throw std::invalid_argument("FrameMatrix: frame_rate must be > 0");
    if (!frames.allFinite()) throw std::invalid_argument("FrameMatrix: non-finite entry");
}

void AttentionProfile::validate(long expected_t) const {
    if (weights.size() != expected_t)
        throw std::invalid_argument("AttentionProfile: length != T");
    for (long i = 0; i < weights.size(); ++i) {
        if (!(weights[i] >= 0.0) || !std::isfinite(weights[i]))
            throw std::invalid_argument("AttentionProfile: weights must be finite and >= 0");
    }
    if (!(weights.sum() > 0.0)) throw std::invalid_argument("AttentionProfile: weight sum must be > 0");
}

void VadMask::validate(long expected_t) const {
    if (static_cast<long>(voiced.size()) != expected_t)
        throw std::invalid_argument("VadMask: length != T");
}

void Segmentation::validate() const {
    for (std::size_t i = 0; i < spans.size(); ++i) {
        if (!(spans[i].duration() > 0.0))
            throw std::invalid_argument("Segmentation: span with non-positive duration");
        if (i > 0) {
            if (spans[i].start < spans[i - 1].start)
                throw std::invalid_argument("Segmentation: spans not sorted by start");
            if (spans[i].start < spans[i - 1].end)
                throw std::invalid_argument("Segmentation: overlapping spans");
        }
    }
}

void ImageEmbedding::validate() const {
    if (vector.size() == 0) throw std::invalid_argument("ImageEmbedding: empty vector");
    if (!vector.allFinite()) throw std::invalid_argument("ImageEmbedding: non-finite entry");
    if (vector.norm() == 0.0) throw std::invalid_argument("ImageEmbedding: all-zero vector");
}

void JointSpaceParams::validate() const {
    if (speech_w.rows() != image_w.rows())
        throw std::invalid_argument("JointSpaceParams: projection output dimensions differ");
    if (speech_b.size() != speech_w.rows() || image_b.size() != image_w.rows())
        throw std::invalid_argument("JointSpaceParams: bias dimension mismatch");
    if (!(margin > 0.0)) throw std::invalid_argument("JointSpaceParams: margin must be > 0");
}

void HyperParams::validate() const {
    if (!(p > 0.0 && p <= 100.0)) throw std::invalid_argument("HyperParams: p must be in (0, 100]");
    if (!(gap_s > 0.0)) throw std::invalid_argument("HyperParams: gap_s must be > 0");
    if (!(insert_len > 0.0)) throw std::invalid_argument("HyperParams: insert_len must be > 0");
    if (!(margin > 0.0)) throw std::invalid_argument("HyperParams: margin must be > 0");
    if (batch_size < 2) throw std::invalid_argument("HyperParams: batch_size must be >= 2");
    if (combine_mode != "vgnsl" && combine_mode != "mlp")
        throw std::invalid_argument("HyperParams: unknown combine_mode");
    if (score_input != "concat" && score_input != "right")
        throw std::invalid_argument("HyperParams: unknown score_input");
    if (pooling != "attention" && pooling != "mlp" && pooling != "mean")
        throw std::invalid_argument("HyperParams: unknown pooling");
}

const AttentionProfile& Utterance::attention_layer(int layer_id) const {
    for (const auto& a : attention)
        if (a.layer_id == layer_id) return a;
    throw std::invalid_argument("Utterance " + id + ": no attention layer " +
                                std::to_string(layer_id));
}

void Utterance::validate() const {
    features.validate();
    const long t = features.t();
    if (attention.empty()) throw std::invalid_argument("Utterance " + id + ": no attention profile");
    for (const auto& a : attention) a.validate(t);
    vad.validate(t);
    if (oracle_segmentation) oracle_segmentation->validate();
    image.validate();
    if (ref_tree) ref_tree->validate();
}

// ---------------------------------------------------------------------------
// ParseTree

ParseTree ParseTree::leaf(TimeSpan span) {
    ParseTree t;
    t.n_leaves_ = 1;
    t.leaf_spans_ = {span};
    t.nodes_.push_back(Node{IndexSpan{0, 1}, -1, -1});
    t.root_ = 0;
    return t;
}

ParseTree ParseTree::from_merges(const std::vector<TimeSpan>& leaf_spans,
                                 const std::vector<std::pair<int, int>>& merges) {
    const int n = static_cast<int>(leaf_spans.size());
    if (n < 1) throw std::invalid_argument("ParseTree: need at least one leaf");
    if (static_cast<int>(merges.size()) != n - 1)
        throw std::invalid_argument("ParseTree: need exactly N-1 merges");

    ParseTree t;
    t.n_leaves_ = n;
    t.leaf_spans_ = leaf_spans;
    t.nodes_.reserve(2 * n - 1);
    for (int i = 0; i < n; ++i) t.nodes_.push_back(Node{IndexSpan{i, i + 1}, -1, -1});
    for (const auto& [l, r] : merges) {
        if (l < 0 || r < 0 || l >= static_cast<int>(t.nodes_.size()) ||
            r >= static_cast<int>(t.nodes_.size()))
            throw std::invalid_argument("ParseTree: merge references unknown node");
        const Node& a = t.nodes_[l];
        const Node& b = t.nodes_[r];
        if (a.span.end != b.span.begin)
            throw std::invalid_argument("ParseTree: merged nodes are not adjacent");
        t.nodes_.push_back(Node{IndexSpan{a.span.begin, b.span.end}, l, r});
    }
    t.root_ = static_cast<int>(t.nodes_.size()) - 1;
    t.validate();
    return t;
}

TimeSpan ParseTree::node_time_span(int i) const {
    const Node& nd = nodes_[i];
    return TimeSpan(leaf_spans_[nd.span.begin].start, leaf_spans_[nd.span.end - 1].end);
}

void ParseTree::validate() const {
    if (n_leaves_ < 1) throw std::invalid_argument("ParseTree: empty");
    if (static_cast<int>(leaf_spans_.size()) != n_leaves_)
        throw std::invalid_argument("ParseTree: leaf span count mismatch");
    if (static_cast<int>(nodes_.size()) != 2 * n_leaves_ - 1)
        throw std::invalid_argument("ParseTree: binary tree over N leaves needs 2N-1 nodes");
    if (root_ < 0 || nodes_[root_].span.begin != 0 || nodes_[root_].span.end != n_leaves_)
        throw std::invalid_argument("ParseTree: root does not cover [0, N)");
    for (const auto& nd : nodes_) {
        if (nd.is_leaf()) {
            if (nd.span.width() != 1) throw std::invalid_argument("ParseTree: non-unit leaf");
        } else {
            const Node& a = nodes_[nd.left];
            const Node& b = nodes_[nd.right];
            if (a.span.begin != nd.span.begin || b.span.end != nd.span.end ||
                a.span.end != b.span.begin)
                throw std::invalid_argument("ParseTree: children do not partition parent");
        }
    }
}

bool ParseTree::same_shape(const ParseTree& other) const {
    if (n_leaves_ != other.n_leaves_) return false;
    return tree_spans(*this, true) == tree_spans(other, true);
}

bool ParseTree::operator==(const ParseTree& o) const {
    return n_leaves_ == o.n_leaves_ && leaf_spans_ == o.leaf_spans_ && same_shape(o);
}

std::set<IndexSpan> tree_spans(const ParseTree& tree, bool include_trivial) {
    std::set<IndexSpan> out;
    const int n = tree.n_leaves();
    for (const auto& nd : tree.nodes()) {
        if (nd.is_leaf()) continue;
        if (!include_trivial && (nd.span.width() <= 1 || nd.span.width() == n)) continue;
        out.insert(nd.span);
    }
    return out;
}

namespace {

void sexpr_write(const ParseTree& t, int node, std::string& out) {
    const auto& nd = t.node(node);
    if (nd.is_leaf()) {
        out += std::to_string(nd.span.begin);
        return;
    }
    out += '(';
    sexpr_write(t, nd.left, out);
    out += ' ';
    sexpr_write(t, nd.right, out);
    out += ')';
}

struct SexprParser {
    const std::string& s;
    std::size_t pos = 0;

    explicit SexprParser(const std::string& text) : s(text) {}

    void skip_ws() {
        while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    }

    char peek() {
        skip_ws();
        if (pos >= s.size()) throw std::invalid_argument("sexpr: unexpected end of input");
        return s[pos];
    }

    void expect(char c) {
        if (peek() != c)
            throw std::invalid_argument(std::string("sexpr: expected '") + c + "' at position " +
                                        std::to_string(pos));
        ++pos;
    }

    std::string token() {
        skip_ws();
        std::size_t start = pos;
        while (pos < s.size() && !std::isspace(static_cast<unsigned char>(s[pos])) &&
               s[pos] != '(' && s[pos] != ')')
            ++pos;
        if (pos == start) throw std::invalid_argument("sexpr: empty token");
        return s.substr(start, pos - start);
    }

    bool done() {
        skip_ws();
        return pos >= s.size();
    }
};

// Recursive descent over "(a b)" index trees; fills merges bottom-up and
// returns (leaf_begin, node_id_in_merge_numbering).
struct IndexTreeBuilder {
    std::vector<std::pair<int, int>> merges;
    int n_leaves = 0;
    int next_internal;

    explicit IndexTreeBuilder(int n) : next_internal(n) {}

    // Returns (node id, begin leaf, end leaf).
    std::tuple<int, int, int> parse(SexprParser& p) {
        if (p.peek() == '(') {
            p.expect('(');
            auto [lid, lb, le] = parse(p);
            auto [rid, rb, re] = parse(p);
            p.expect(')');
            if (le != rb) throw std::invalid_argument("sexpr: children not adjacent");
            merges.emplace_back(lid, rid);
            return {next_internal++, lb, re};
        }
        std::string tok = p.token();
        int idx = 0;
        auto res = std::from_chars(tok.data(), tok.data() + tok.size(), idx);
        if (res.ec != std::errc() || res.ptr != tok.data() + tok.size())
            throw std::invalid_argument("sexpr: bad leaf index '" + tok + "'");
        return {idx, idx, idx + 1};
    }
};

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace

std::string tree_to_sexpr(const ParseTree& tree) {
    std::string out;
    sexpr_write(tree, tree.root(), out);
    return out;
}

ParseTree tree_from_sexpr(const std::string& text, const std::vector<TimeSpan>& leaf_spans) {
    const int n = static_cast<int>(leaf_spans.size());
    SexprParser p(text);
    IndexTreeBuilder b(n);
    auto [id, begin, end] = b.parse(p);
    if (!p.done()) throw std::invalid_argument("sexpr: trailing input");
    if (begin != 0 || end != n)
        throw std::invalid_argument("sexpr: tree covers [" + std::to_string(begin) + ", " +
                                    std::to_string(end) + "), expected [0, " + std::to_string(n) +
                                    ")");
    if (n == 1) {
        if (id != 0) throw std::invalid_argument("sexpr: single-leaf tree must be '0'");
        return ParseTree::leaf(leaf_spans[0]);
    }
    return ParseTree::from_merges(leaf_spans, b.merges);
}

// ---------------------------------------------------------------------------
// LabeledRefTree

LabeledRefTree::LabeledRefTree(std::vector<Node> nodes, int root)
    : nodes_(std::move(nodes)), root_(root) {
    validate();
}

std::vector<int> LabeledRefTree::leaves() const {
    std::vector<int> out;
    std::vector<int> stack = {root_};
    // Depth-first, children pushed in reverse so temporal order is preserved.
    while (!stack.empty()) {
        int cur = stack.back();
        stack.pop_back();
        const Node& nd = nodes_[cur];
        if (nd.is_leaf()) {
            out.push_back(cur);
        } else {
            for (auto it = nd.children.rbegin(); it != nd.children.rend(); ++it)
                stack.push_back(*it);
        }
    }
    return out;
}

void LabeledRefTree::validate() const {
    if (nodes_.empty() || root_ < 0 || root_ >= static_cast<int>(nodes_.size()))
        throw std::invalid_argument("LabeledRefTree: bad root");
    for (const auto& nd : nodes_) {
        for (std::size_t k = 0; k < nd.children.size(); ++k) {
            const Node& c = nodes_[nd.children[k]];
            if (c.span.start < nd.span.start - 1e-12 || c.span.end > nd.span.end + 1e-12)
                throw std::invalid_argument("LabeledRefTree: child span not nested in parent");
            if (k > 0) {
                const Node& prev = nodes_[nd.children[k - 1]];
                if (c.span.start < prev.span.end - 1e-12)
                    throw std::invalid_argument("LabeledRefTree: siblings overlap or out of order");
            }
        }
    }
}

bool LabeledRefTree::operator==(const LabeledRefTree& o) const {
    return ref_tree_to_sexpr(*this) == ref_tree_to_sexpr(o);
}

namespace {

void ref_write(const LabeledRefTree& t, int node, std::string& out) {
    const auto& nd = t.node(node);
    out += '(';
    out += nd.label.empty() ? "-" : nd.label;
    out += ':';
    out += format_double(nd.span.start);
    out += ':';
    out += format_double(nd.span.end);
    for (int c : nd.children) {
        out += ' ';
        ref_write(t, c, out);
    }
    out += ')';
}

int ref_parse(SexprParser& p, std::vector<LabeledRefTree::Node>& nodes) {
    p.expect('(');
    std::string tag = p.token();
    auto c1 = tag.find(':');
    auto c2 = tag.rfind(':');
    if (c1 == std::string::npos || c2 == c1)
        throw std::invalid_argument("ref sexpr: tag must be label:start:end, got '" + tag + "'");
    LabeledRefTree::Node nd;
    std::string label = tag.substr(0, c1);
    nd.label = label == "-" ? "" : label;
    nd.span = TimeSpan(std::stod(tag.substr(c1 + 1, c2 - c1 - 1)), std::stod(tag.substr(c2 + 1)));
    int id = static_cast<int>(nodes.size());
    nodes.push_back(nd);
    while (p.peek() == '(') {
        int child = ref_parse(p, nodes);
        nodes[id].children.push_back(child);
    }
    p.expect(')');
    return id;
}

} // namespace

std::string ref_tree_to_sexpr(const LabeledRefTree& tree) {
    std::string out;
    ref_write(tree, tree.root(), out);
    return out;
}

LabeledRefTree ref_tree_from_sexpr(const std::string& text) {
    SexprParser p(text);
    std::vector<LabeledRefTree::Node> nodes;
    int root = ref_parse(p, nodes);
    if (!p.done()) throw std::invalid_argument("ref sexpr: trailing input");
    return LabeledRefTree(std::move(nodes), root);
}

LabeledRefTree ref_tree_from_parse_tree(const ParseTree& tree) {
    std::vector<LabeledRefTree::Node> nodes(tree.n_nodes());
    for (int i = 0; i < tree.n_nodes(); ++i) {
        nodes[i].span = tree.node_time_span(i);
        const auto& nd = tree.node(i);
        if (!nd.is_leaf()) nodes[i].children = {nd.left, nd.right};
    }
    return LabeledRefTree(std::move(nodes), tree.root());
}

} // namespace avnsl
