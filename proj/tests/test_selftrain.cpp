#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "avnsl/mbr.hpp"
#include "avnsl/rng.hpp"
#include "avnsl/selftrain.hpp"
#include "avnsl/tree.hpp"
#include "avnsl/types.hpp"

#include "oracles.hpp"

#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

using namespace avnsl;

namespace {

std::vector<TimeSpan> unit_leaves(int n) {
    std::vector<TimeSpan> spans;
    for (int i = 0; i < n; ++i) spans.emplace_back(i, i + 1);
    return spans;
}

ParseTree right_branching(int n) {
    std::vector<std::pair<int, int>> merges;
    int last = n - 1;
    for (int i = n - 2; i >= 0; --i) {
        merges.emplace_back(i, last);
        last = n + static_cast<int>(merges.size()) - 1;
    }
    return ParseTree::from_merges(unit_leaves(n), merges);
}

ParseTree left_branching(int n) {
    std::vector<std::pair<int, int>> merges;
    int last = 0;
    for (int i = 1; i < n; ++i) {
        merges.emplace_back(last, i);
        last = n + static_cast<int>(merges.size()) - 1;
    }
    return ParseTree::from_merges(unit_leaves(n), merges);
}

SegmentEmbeddingSeq random_embeddings(int n, int d, Rng& rng) {
    SegmentEmbeddingSeq emb;
    emb.vectors = Mat(n, d);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) emb.vectors(i, j) = rng.normal();
    return emb;
}

SpanChart manual_chart(int n) {
    SpanChart chart;
    chart.leaf_spans = unit_leaves(n);
    chart.scores = Mat::Zero(n + 1, n + 1);
    return chart;
}

double tree_total(const ParseTree& t, const Mat& scores) {
    double total = 0.0;
    for (const IndexSpan& s : tree_spans(t, true)) total += scores(s.begin, s.end);
    return total;
}

SelfTrainConfig small_cfg() {
    SelfTrainConfig cfg;
    cfg.hidden = 16;
    cfg.depth = 1;
    cfg.lr = 0.02;
    cfg.steps = 50;
    cfg.batch_size = 2;
    cfg.seed = 11;
    return cfg;
}

} // namespace

TEST_CASE("self-train config validation") {
    SelfTrainConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    SelfTrainConfig bad = cfg;
    bad.hidden = 0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = cfg;
    bad.depth = 0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = cfg;
    bad.lr = 0.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = cfg;
    bad.momentum = 1.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = cfg;
    bad.steps = -1;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = cfg;
    bad.batch_size = 0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("a fresh span model scores every interval zero") {
    Rng rng(601);
    SpanChartModel model(4, 8, 2, rng);
    SegmentEmbeddingSeq emb = random_embeddings(5, 4, rng);
    for (int i = 0; i < 5; ++i)
        for (int j = i + 2; j <= 5; ++j) CHECK(model.span_score(emb, i, j) == 0.0);

    Segmentation seg{unit_leaves(5)};
    SpanChart chart = span_chart(emb, seg, model);
    CHECK(chart.n() == 5);
    CHECK(chart.scores == Mat::Zero(6, 6));
}

TEST_CASE("span model rejects bad intervals and dimension mismatches") {
    Rng rng(602);
    SpanChartModel model(3, 8, 1, rng);
    SegmentEmbeddingSeq emb = random_embeddings(4, 3, rng);
    CHECK_THROWS_AS(model.span_score(emb, 0, 1), std::invalid_argument);
    CHECK_THROWS_AS(model.span_score(emb, -1, 2), std::invalid_argument);
    CHECK_THROWS_AS(model.span_score(emb, 2, 5), std::invalid_argument);
    SegmentEmbeddingSeq wrong = random_embeddings(4, 5, rng);
    CHECK_THROWS_AS(model.span_score(wrong, 0, 2), std::invalid_argument);
    CHECK_THROWS_AS(SpanChartModel(0, 8, 1, rng), std::invalid_argument);
}

TEST_CASE("span_chart shape and input checks") {
    Rng rng(603);
    SpanChartModel model(3, 8, 1, rng);
    SegmentEmbeddingSeq emb = random_embeddings(2, 3, rng);
    SpanChart chart = span_chart(emb, Segmentation{unit_leaves(2)}, model);
    CHECK(chart.scores.rows() == 3);
    CHECK(chart.scores.cols() == 3);
    // Only [0,2) is a scorable interval for two segments.
    CHECK(chart.scores(0, 1) == 0.0);
    CHECK(chart.scores(1, 2) == 0.0);

    SegmentEmbeddingSeq one = random_embeddings(1, 3, rng);
    CHECK_THROWS_AS(span_chart(one, Segmentation{unit_leaves(1)}, model), std::invalid_argument);
    CHECK_THROWS_AS(span_chart(emb, Segmentation{unit_leaves(3)}, model), std::invalid_argument);
}

TEST_CASE("span score gradients match finite differences") {
    Rng rng(604);
    SpanChartModel model(3, 6, 2, rng);
    // The output layer starts at zero, which would hide upstream errors;
    // give it real weights before checking.
    for (Tensor* p : model.params())
        for (long r = 0; r < p->v.rows(); ++r)
            for (long c = 0; c < p->v.cols(); ++c) p->v(r, c) += 0.3 * rng.normal();

    SegmentEmbeddingSeq emb = random_embeddings(4, 3, rng);
    std::vector<std::pair<int, int>> intervals{{0, 2}, {1, 4}, {0, 4}};
    for (const auto& [i, j] : intervals) {
        auto value = [&] { return model.span_score(emb, i, j); };
        Tape tape;
        Var s = model.span_score(tape, emb, i, j);
        for (Tensor* p : model.params()) p->zero_grad();
        tape.backward(s);
        for (Tensor* p : model.params()) {
            Mat numeric = oracle::numeric_grad(value, *p);
            CHECK(oracle::grad_rel_error(p->g, numeric) < 1e-4);
        }
    }
}

TEST_CASE("cky ties break to the lowest split, giving a right caterpillar") {
    for (int n = 2; n <= 5; ++n) {
        ParseTree t = cky_decode(manual_chart(n));
        CHECK(t.same_shape(right_branching(n)));
    }
}

TEST_CASE("cky follows the chart away from the tie rule") {
    // +1 on [1,3): only the right-branching tree over 3 leaves collects it.
    SpanChart rb = manual_chart(3);
    rb.scores(1, 3) = 1.0;
    CHECK(cky_decode(rb).same_shape(right_branching(3)));

    // +1 on [0,2) flips the preference to the left-branching tree.
    SpanChart lb = manual_chart(3);
    lb.scores(0, 2) = 1.0;
    CHECK(cky_decode(lb).same_shape(left_branching(3)));

    // A negative root score changes nothing: every tree pays it.
    SpanChart shifted = manual_chart(3);
    shifted.scores(0, 3) = -5.0;
    shifted.scores(1, 3) = 1.0;
    CHECK(cky_decode(shifted).same_shape(right_branching(3)));
}

TEST_CASE("cky decode handles the degenerate charts") {
    SpanChart one;
    one.leaf_spans = unit_leaves(1);
    ParseTree t = cky_decode(one);
    CHECK(t.n_leaves() == 1);
    CHECK(t.n_nodes() == 1);

    SpanChart empty;
    CHECK_THROWS_AS(cky_decode(empty), std::invalid_argument);

    SpanChart bad = manual_chart(3);
    bad.scores = Mat::Zero(2, 2);
    CHECK_THROWS_AS(cky_decode(bad), std::invalid_argument);
}

TEST_CASE("cky decode equals the exhaustive best tree") {
    Rng rng(605);
    for (int n = 2; n <= 6; ++n) {
        auto all_trees = oracle::enumerate_binary_trees(0, n);
        for (int trial = 0; trial < 8; ++trial) {
            SpanChart chart = manual_chart(n);
            for (int i = 0; i < n; ++i)
                for (int j = i + 2; j <= n; ++j) chart.scores(i, j) = rng.normal();
            ParseTree decoded = cky_decode(chart);

            double decoded_total = tree_total(decoded, chart.scores);
            double best_total = -std::numeric_limits<double>::infinity();
            for (const auto& brackets : all_trees) {
                double total = 0.0;
                for (const IndexSpan& s : brackets) total += chart.scores(s.begin, s.end);
                best_total = std::max(best_total, total);
            }
            CHECK(decoded_total == doctest::Approx(best_total).epsilon(1e-9));
        }
    }
}

TEST_CASE("cky decode beats random alternative trees") {
    Rng rng(606);
    SpanChart chart = manual_chart(7);
    for (int i = 0; i < 7; ++i)
        for (int j = i + 2; j <= 7; ++j) chart.scores(i, j) = rng.normal();
    double decoded_total = tree_total(cky_decode(chart), chart.scores);
    for (int trial = 0; trial < 100; ++trial) {
        ParseTree alt = oracle::random_merge_tree(unit_leaves(7), rng);
        CHECK(decoded_total >= tree_total(alt, chart.scores) - 1e-9);
    }
}

TEST_CASE("one margin step against a zero model has unit loss") {
    SelfTrainConfig cfg = small_cfg();
    cfg.batch_size = 1;
    SelfTrainer trainer(cfg, 3);
    Rng rng(607);
    SelfTrainExample ex{random_embeddings(3, 3, rng), right_branching(3)};

    // Zero chart plus the +1 bracket bonus makes the left-branching tree the
    // offender; its margin against the teacher is exactly the bonus.
    SelfTrainStats stats = trainer.step({&ex});
    CHECK(stats.mean_loss == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(stats.violations == 1);
    CHECK(stats.grad_norm > 0.0);
    CHECK(trainer.steps_taken() == 1);
}

TEST_CASE("training a single utterance reproduces its teacher tree") {
    SelfTrainConfig cfg = small_cfg();
    cfg.batch_size = 1;
    cfg.lr = 0.05;
    // Plain SGD: with momentum the parameters keep drifting after a
    // zero-gradient step, so a satisfied margin would not be a fixed point.
    cfg.momentum = 0.0;
    SelfTrainer trainer(cfg, 4);
    Rng rng(608);
    SelfTrainExample ex{random_embeddings(4, 4, rng),
                        ParseTree::from_merges(unit_leaves(4), {{0, 1}, {2, 3}, {4, 5}})};

    int settled_at = -1;
    for (int t = 0; t < 200; ++t) {
        if (trainer.step({&ex}).violations == 0) {
            settled_at = t;
            break;
        }
    }
    REQUIRE(settled_at >= 0);
    // Once the margin holds, further steps are free and the decode is exact.
    SelfTrainStats after = trainer.step({&ex});
    CHECK(after.mean_loss == 0.0);
    CHECK(after.grad_norm == 0.0);
    ParseTree parsed = trainer.parse(ex.emb, Segmentation{ex.teacher.leaf_spans()});
    CHECK(parsed.same_shape(ex.teacher));
}

TEST_CASE("right-branching teachers generalize to held-out utterances") {
    Rng rng(609);
    std::vector<SelfTrainExample> train;
    for (int u = 0; u < 60; ++u) {
        int n = 3 + rng.uniform_int(5);
        train.push_back({random_embeddings(n, 6, rng), right_branching(n)});
    }
    SelfTrainConfig cfg = small_cfg();
    cfg.lr = 0.01;
    cfg.steps = 600;
    cfg.batch_size = 8;
    FitResult fit = fit_selftrain(train, cfg);

    SelfTrainer student(cfg, 6);
    student.load_state(fit.checkpoints[fit.best]);
    int hits = 0;
    const int held_out = 40;
    for (int u = 0; u < held_out; ++u) {
        int n = 3 + rng.uniform_int(5);
        SegmentEmbeddingSeq emb = random_embeddings(n, 6, rng);
        if (student.parse(emb, Segmentation{unit_leaves(n)}).same_shape(right_branching(n)))
            ++hits;
    }
    CHECK(static_cast<double>(hits) / held_out >= 0.95);
}

TEST_CASE("single-leaf teachers are skipped, not scored") {
    SelfTrainConfig cfg = small_cfg();
    cfg.batch_size = 1;
    SelfTrainer trainer(cfg, 3);
    Rng rng(615);
    SelfTrainExample tiny{random_embeddings(1, 3, rng), ParseTree::leaf(TimeSpan{0.0, 1.0})};
    SelfTrainStats stats = trainer.step({&tiny});
    CHECK(stats.mean_loss == 0.0);
    CHECK(stats.violations == 0);
    CHECK(trainer.steps_taken() == 1);
}

TEST_CASE("embedding and teacher size mismatches are rejected") {
    SelfTrainConfig cfg = small_cfg();
    SelfTrainer trainer(cfg, 3);
    Rng rng(610);
    SelfTrainExample bad{random_embeddings(3, 3, rng), right_branching(4)};
    CHECK_THROWS_AS(trainer.step({&bad}), std::invalid_argument);
    CHECK_THROWS_AS(trainer.step({}), std::invalid_argument);
    CHECK_THROWS_AS(trainer.parse(random_embeddings(2, 3, rng), Segmentation{}),
                    std::invalid_argument);
}

TEST_CASE("a non-finite loss stops training loudly") {
    SelfTrainConfig cfg = small_cfg();
    SelfTrainer trainer(cfg, 3);
    Rng rng(611);
    SelfTrainExample ex{random_embeddings(3, 3, rng), right_branching(3)};
    trainer.model().mlp().layers()[0].W.v(0, 0) = std::numeric_limits<double>::quiet_NaN();
    try {
        trainer.step({&ex});
        FAIL("expected a divergence error");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("diverged") != std::string::npos);
    }
}

TEST_CASE("trainer state round trips exactly") {
    SelfTrainConfig cfg = small_cfg();
    SelfTrainer a(cfg, 4);
    Rng rng(612);
    std::vector<SelfTrainExample> corpus;
    for (int u = 0; u < 4; ++u) {
        auto spans = unit_leaves(4);
        corpus.push_back({random_embeddings(4, 4, rng), oracle::random_merge_tree(spans, rng)});
    }
    for (int t = 0; t < 5; ++t) a.step({&corpus[t % 4], &corpus[(t + 1) % 4]});

    SelfTrainer b(cfg, 4);
    b.load_state(a.state());
    CHECK(b.steps_taken() == a.steps_taken());
    for (const SelfTrainExample& ex : corpus) {
        Segmentation seg{ex.teacher.leaf_spans()};
        CHECK(b.parse(ex.emb, seg) == a.parse(ex.emb, seg));
    }
    auto sa = a.state();
    auto sb = b.state();
    REQUIRE(sa.size() == sb.size());
    for (const auto& [key, value] : sa) {
        REQUIRE(sb.count(key) == 1);
        CHECK(value == sb.at(key));
    }

    auto truncated = a.state();
    truncated.erase("selftrain/chart/0/W");
    SelfTrainer c(cfg, 4);
    CHECK_THROWS_AS(c.load_state(truncated), std::runtime_error);
}

TEST_CASE("candidate selection keeps the consensus tree set") {
    std::vector<ParseTree> rb{right_branching(4), right_branching(5)};
    std::vector<ParseTree> lb{left_branching(4), left_branching(5)};
    CHECK(select_tree_candidates({rb, lb, rb}) == 0);
    CHECK(select_tree_candidates({lb, rb, rb}) == 1);
    CHECK(select_tree_candidates({rb}) == 0);

    CHECK_THROWS_AS(select_tree_candidates({}), std::invalid_argument);
    CHECK_THROWS_AS(select_tree_candidates({rb, {right_branching(4)}}), std::invalid_argument);
}

TEST_CASE("fit_selftrain spaces checkpoints and records losses") {
    Rng rng(613);
    std::vector<SelfTrainExample> corpus;
    for (int u = 0; u < 3; ++u)
        corpus.push_back({random_embeddings(3, 3, rng), right_branching(3)});

    SelfTrainConfig cfg = small_cfg();
    cfg.steps = 8;
    FitResult fit = fit_selftrain(corpus, cfg, 4);
    CHECK(fit.checkpoint_steps == std::vector<int>{2, 4, 6, 8});
    CHECK(fit.checkpoints.size() == 4);
    CHECK(fit.step_loss.size() == 8);
    CHECK(fit.best < fit.checkpoints.size());

    CHECK_THROWS_AS(fit_selftrain({}, cfg), std::invalid_argument);
    CHECK_THROWS_AS(fit_selftrain(corpus, cfg, 0), std::invalid_argument);
}

TEST_CASE("zero training steps decode with the bare tie rule") {
    Rng rng(614);
    std::vector<SelfTrainExample> corpus;
    for (int u = 0; u < 2; ++u)
        corpus.push_back({random_embeddings(4, 3, rng), left_branching(4)});

    SelfTrainConfig cfg = small_cfg();
    cfg.steps = 0;
    FitResult fit = fit_selftrain(corpus, cfg, 4);
    CHECK(fit.checkpoint_steps == std::vector<int>{0});
    REQUIRE(fit.checkpoints.size() == 1);
    CHECK(fit.best == 0);

    SelfTrainer student(cfg, 3);
    student.load_state(fit.checkpoints[0]);
    // An untrained chart is all zeros, so decoding ignores the teacher and
    // emits the right caterpillar.
    ParseTree t = student.parse(corpus[0].emb, Segmentation{unit_leaves(4)});
    CHECK(t.same_shape(right_branching(4)));
}
