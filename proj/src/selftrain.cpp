#include "avnsl/selftrain.hpp"

#include <cmath>
#include <set>
#include <stdexcept>

#include "avnsl/mbr.hpp"

namespace avnsl {

void SelfTrainConfig::validate() const {
    if (hidden < 1) throw std::invalid_argument("SelfTrainConfig: hidden must be positive");
    if (depth < 1) throw std::invalid_argument("SelfTrainConfig: depth must be positive");
    if (!(lr > 0.0)) throw std::invalid_argument("SelfTrainConfig: lr must be positive");
    if (momentum < 0.0 || momentum >= 1.0)
        throw std::invalid_argument("SelfTrainConfig: momentum must be in [0, 1)");
    if (steps < 0) throw std::invalid_argument("SelfTrainConfig: negative steps");
    if (batch_size < 1) throw std::invalid_argument("SelfTrainConfig: batch_size must be positive");
}

// ---------------------------------------------------------------------------
// Span scoring

namespace {

std::vector<long> mlp_sizes(int in, int hidden, int depth) {
    std::vector<long> sizes{in};
    for (int i = 0; i < depth; ++i) sizes.push_back(hidden);
    sizes.push_back(1);
    return sizes;
}

} // namespace

SpanChartModel::SpanChartModel(int embed_dim, int hidden, int depth, Rng& rng)
    : embed_dim_(embed_dim), mlp_(mlp_sizes(2 * embed_dim + 5, hidden, depth), rng) {
    if (embed_dim < 1) throw std::invalid_argument("SpanChartModel: embed_dim must be positive");
    // Zero output layer: an untrained model scores every span 0, so decoding
    // falls back to the documented tie rule instead of arbitrary init noise.
    auto& out = mlp_.layers().back();
    out.W.v.setZero();
    out.b.v.setZero();
}

Vec SpanChartModel::features(const SegmentEmbeddingSeq& emb, int i, int j) const {
    const int n = emb.n();
    if (emb.d() != embed_dim_)
        throw std::invalid_argument("SpanChartModel: embedding dim " + std::to_string(emb.d()) +
                                    " does not match model dim " + std::to_string(embed_dim_));
    if (i < 0 || j > n || j - i < 2)
        throw std::invalid_argument("SpanChartModel: invalid interval [" + std::to_string(i) +
                                    ", " + std::to_string(j) + ") over " + std::to_string(n) +
                                    " segments");
    Vec mean = Vec::Zero(embed_dim_);
    for (int k = i; k < j; ++k) mean += emb.row(k);
    mean /= static_cast<double>(j - i);

    Vec f(2 * embed_dim_ + 5);
    f.segment(0, embed_dim_) = emb.row(j - 1) - emb.row(i);
    f.segment(embed_dim_, embed_dim_) = mean;
    f[2 * embed_dim_ + 0] = static_cast<double>(i) / n;
    f[2 * embed_dim_ + 1] = static_cast<double>(j) / n;
    f[2 * embed_dim_ + 2] = static_cast<double>(j - i) / n;
    f[2 * embed_dim_ + 3] = i == 0 ? 1.0 : 0.0;
    f[2 * embed_dim_ + 4] = j == n ? 1.0 : 0.0;
    return f;
}

double SpanChartModel::span_score(const SegmentEmbeddingSeq& emb, int i, int j) const {
    return mlp_.forward(features(emb, i, j))[0];
}

Var SpanChartModel::span_score(Tape& tape, const SegmentEmbeddingSeq& emb, int i, int j) {
    return mlp_.forward(tape, tape.input(features(emb, i, j)));
}

std::vector<Tensor*> SpanChartModel::params() {
    std::vector<Tensor*> out;
    for (Mlp::Layer& l : mlp_.layers()) {
        out.push_back(&l.W);
        out.push_back(&l.b);
    }
    return out;
}

SpanChart span_chart(const SegmentEmbeddingSeq& emb, const Segmentation& seg,
                     const SpanChartModel& model) {
    const int n = emb.n();
    if (n < 2) throw std::invalid_argument("span_chart: need at least two segments");
    if (static_cast<int>(seg.size()) != n)
        throw std::invalid_argument("span_chart: segmentation has " + std::to_string(seg.size()) +
                                    " spans but embeddings have " + std::to_string(n) + " rows");
    SpanChart chart;
    chart.leaf_spans = seg.spans;
    chart.scores = Mat::Zero(n + 1, n + 1);
    for (int i = 0; i < n; ++i)
        for (int j = i + 2; j <= n; ++j) chart.scores(i, j) = model.span_score(emb, i, j);
    return chart;
}

// ---------------------------------------------------------------------------
// CKY

namespace {

// Fills best/split tables for intervals of length >= 2. best(i, j) is the
// maximum total score over binary trees spanning [i, j), counting scores(k, l)
// for every internal node [k, l); split(i, j) is the lowest maximizing split.
void cky_tables(const Mat& scores, int n, Mat& best, Eigen::MatrixXi& split) {
    best = Mat::Zero(n + 1, n + 1);
    split = Eigen::MatrixXi::Constant(n + 1, n + 1, -1);
    for (int len = 2; len <= n; ++len) {
        for (int i = 0; i + len <= n; ++i) {
            int j = i + len;
            double best_sub = 0.0;
            int best_k = -1;
            for (int k = i + 1; k < j; ++k) {
                double v = best(i, k) + best(k, j);
                if (best_k < 0 || v > best_sub) {
                    best_sub = v;
                    best_k = k;
                }
            }
            best(i, j) = scores(i, j) + best_sub;
            split(i, j) = best_k;
        }
    }
}

int cky_build(const Eigen::MatrixXi& split, int i, int j, int n,
              std::vector<std::pair<int, int>>& merges) {
    if (j - i == 1) return i;
    int k = split(i, j);
    int left = cky_build(split, i, k, n, merges);
    int right = cky_build(split, k, j, n, merges);
    merges.emplace_back(left, right);
    return n + static_cast<int>(merges.size()) - 1;
}

} // namespace

ParseTree cky_decode(const SpanChart& chart) {
    const int n = chart.n();
    if (n < 1) throw std::invalid_argument("cky_decode: empty chart");
    if (n == 1) return ParseTree::leaf(chart.leaf_spans[0]);
    if (chart.scores.rows() != n + 1 || chart.scores.cols() != n + 1)
        throw std::invalid_argument("cky_decode: score matrix shape mismatch");

    Mat best;
    Eigen::MatrixXi split;
    cky_tables(chart.scores, n, best, split);
    std::vector<std::pair<int, int>> merges;
    cky_build(split, 0, n, n, merges);
    return ParseTree::from_merges(chart.leaf_spans, merges);
}

// ---------------------------------------------------------------------------
// Training

namespace {

const SelfTrainConfig& validated(const SelfTrainConfig& cfg) {
    cfg.validate();
    return cfg;
}

} // namespace

SelfTrainer::SelfTrainer(const SelfTrainConfig& cfg, int embed_dim)
    : cfg_(validated(cfg)), rng_(cfg.seed), model_(embed_dim, cfg.hidden, cfg.depth, rng_),
      opt_{cfg.lr, cfg.momentum} {}

SelfTrainStats SelfTrainer::step(const std::vector<const SelfTrainExample*>& batch) {
    if (batch.empty()) throw std::invalid_argument("SelfTrainer: empty batch");

    Tape tape;
    std::vector<Var> terms;
    SelfTrainStats stats;
    for (const SelfTrainExample* ex : batch) {
        const int n = ex->teacher.n_leaves();
        if (ex->emb.n() != n)
            throw std::invalid_argument("SelfTrainer: teacher tree has " + std::to_string(n) +
                                        " leaves but embeddings have " +
                                        std::to_string(ex->emb.n()) + " rows");
        if (n < 2) continue; // nothing to score

        Segmentation seg{ex->teacher.leaf_spans()};
        SpanChart chart = span_chart(ex->emb, seg, model_);
        std::set<IndexSpan> teacher_spans = tree_spans(ex->teacher, true);

        // Loss-augmented decode: any bracket the teacher lacks earns +1, so
        // the decode surfaces the most-violating alternative.
        SpanChart augmented = chart;
        for (int i = 0; i < n; ++i)
            for (int j = i + 2; j <= n; ++j)
                if (!teacher_spans.count(IndexSpan{i, j})) augmented.scores(i, j) += 1.0;
        ParseTree offender = cky_decode(augmented);
        std::set<IndexSpan> offender_spans = tree_spans(offender, true);

        double margin = 0.0;
        for (const IndexSpan& s : offender_spans) {
            margin += chart.scores(s.begin, s.end);
            if (!teacher_spans.count(s)) margin += 1.0;
        }
        for (const IndexSpan& s : teacher_spans) margin -= chart.scores(s.begin, s.end);
        if (!std::isfinite(margin)) throw std::runtime_error("training diverged: non-finite loss");
        if (margin <= 0.0) continue;

        stats.mean_loss += margin;
        stats.violations += 1;
        for (const IndexSpan& s : offender_spans)
            if (!teacher_spans.count(s))
                terms.push_back(model_.span_score(tape, ex->emb, s.begin, s.end));
        for (const IndexSpan& s : teacher_spans)
            if (!offender_spans.count(s))
                terms.push_back(
                    tape.scale(model_.span_score(tape, ex->emb, s.begin, s.end), -1.0));
    }
    stats.mean_loss /= static_cast<double>(batch.size());

    std::vector<Tensor*> params = model_.params();
    if (!terms.empty()) {
        Var total = tape.scale(tape.sum(terms), 1.0 / static_cast<double>(batch.size()));
        for (Tensor* p : params) p->zero_grad();
        tape.backward(total);
        double sq = 0.0;
        for (Tensor* p : params) sq += p->g.squaredNorm();
        stats.grad_norm = std::sqrt(sq);
    }
    opt_.step(params);
    ++steps_taken_;
    return stats;
}

ParseTree SelfTrainer::parse(const SegmentEmbeddingSeq& emb, const Segmentation& seg) const {
    if (seg.empty()) throw std::invalid_argument("SelfTrainer: cannot parse an empty segmentation");
    if (seg.size() == 1) {
        if (emb.n() != 1)
            throw std::invalid_argument("SelfTrainer: segmentation/embedding count mismatch");
        return ParseTree::leaf(seg.spans[0]);
    }
    return cky_decode(span_chart(emb, seg, model_));
}

std::map<std::string, Mat> SelfTrainer::state() const {
    std::map<std::string, Mat> out;
    const Mlp& mlp = model_.mlp();
    for (std::size_t i = 0; i < mlp.layers().size(); ++i) {
        out["selftrain/chart/" + std::to_string(i) + "/W"] = mlp.layers()[i].W.v;
        out["selftrain/chart/" + std::to_string(i) + "/b"] = mlp.layers()[i].b.v;
    }
    out["selftrain/steps"] = Mat::Constant(1, 1, static_cast<double>(steps_taken_));
    return out;
}

void SelfTrainer::load_state(const std::map<std::string, Mat>& state) {
    Mlp& mlp = model_.mlp();
    for (std::size_t i = 0; i < mlp.layers().size(); ++i) {
        const std::string wk = "selftrain/chart/" + std::to_string(i) + "/W";
        const std::string bk = "selftrain/chart/" + std::to_string(i) + "/b";
        auto wi = state.find(wk), bi = state.find(bk);
        if (wi == state.end() || bi == state.end())
            throw std::runtime_error("checkpoint missing tensor " + wk);
        Mlp::Layer& l = mlp.layers()[i];
        if (wi->second.rows() != l.W.v.rows() || wi->second.cols() != l.W.v.cols())
            throw std::runtime_error("checkpoint tensor shape mismatch for " + wk);
        l.W.v = wi->second;
        l.b.v = bi->second;
    }
    auto si = state.find("selftrain/steps");
    if (si == state.end()) throw std::runtime_error("checkpoint missing tensor selftrain/steps");
    steps_taken_ = static_cast<int>(si->second(0, 0));
}

// ---------------------------------------------------------------------------
// Output selection

int select_tree_candidates(const std::vector<std::vector<ParseTree>>& candidates) {
    if (candidates.empty())
        throw std::invalid_argument("select_tree_candidates: no candidates");
    const std::size_t n_utts = candidates.front().size();
    for (const auto& c : candidates)
        if (c.size() != n_utts)
            throw std::invalid_argument(
                "select_tree_candidates: candidates cover different utterance counts");
    return static_cast<int>(
        mbr_select(candidates, [](const std::vector<ParseTree>& a, const std::vector<ParseTree>& b) {
            double total = 0.0;
            for (std::size_t u = 0; u < a.size(); ++u) total += tree_f1_loss(a[u], b[u]);
            return total;
        }));
}

FitResult fit_selftrain(const std::vector<SelfTrainExample>& corpus, const SelfTrainConfig& cfg,
                        int n_checkpoints) {
    if (corpus.empty()) throw std::invalid_argument("fit_selftrain: empty corpus");
    if (n_checkpoints < 1) throw std::invalid_argument("fit_selftrain: need n_checkpoints >= 1");
    const int embed_dim = static_cast<int>(corpus.front().emb.d());
    SelfTrainer trainer(cfg, embed_dim);

    std::set<int> snap_steps;
    for (int c = 1; c <= n_checkpoints; ++c)
        snap_steps.insert(static_cast<int>(
            std::lround(static_cast<double>(cfg.steps) * c / n_checkpoints)));

    FitResult out;
    if (cfg.steps == 0 || snap_steps.count(0)) {
        out.checkpoint_steps.push_back(0);
        out.checkpoints.push_back(trainer.state());
    }
    for (int t = 1; t <= cfg.steps; ++t) {
        std::vector<const SelfTrainExample*> batch;
        for (int b = 0; b < cfg.batch_size; ++b)
            batch.push_back(&corpus[trainer.rng().uniform_int(corpus.size())]);
        out.step_loss.push_back(trainer.step(batch).mean_loss);
        if (snap_steps.count(t)) {
            out.checkpoint_steps.push_back(t);
            out.checkpoints.push_back(trainer.state());
        }
    }

    std::vector<std::vector<ParseTree>> trees(out.checkpoints.size());
    for (std::size_t c = 0; c < out.checkpoints.size(); ++c) {
        SelfTrainer scratch(cfg, embed_dim);
        scratch.load_state(out.checkpoints[c]);
        for (const SelfTrainExample& ex : corpus)
            trees[c].push_back(scratch.parse(ex.emb, Segmentation{ex.teacher.leaf_spans()}));
    }
    out.best = static_cast<std::size_t>(select_tree_candidates(trees));
    return out;
}

} // namespace avnsl
