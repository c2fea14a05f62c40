#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "avnsl/grounding.hpp"
#include "avnsl/pooling.hpp"
#include "avnsl/rng.hpp"
#include "avnsl/synth.hpp"

#include "oracles.hpp"

using namespace avnsl;

namespace {

// Unit vector at the given cosine against [1, 0].
Vec at_cosine(double c) {
    Vec v(2);
    v << c, std::sqrt(1.0 - c * c);
    return v;
}

// Unit vector whose cosine against unit `ref` is c (2-D rotation).
Vec rotated_from(const Vec& ref, double c) {
    double s = std::sqrt(1.0 - c * c);
    Vec v(2);
    v << c * ref[0] - s * ref[1], s * ref[0] + c * ref[1];
    return v;
}

JointSpaceParams identity_params(long d, double margin = 0.2) {
    JointSpaceParams p;
    p.speech_w = Mat::Identity(d, d);
    p.speech_b = Vec::Zero(d);
    p.image_w = Mat::Identity(d, d);
    p.image_b = Vec::Zero(d);
    p.margin = margin;
    return p;
}

} // namespace

TEST_CASE("projection normalizes and forgets positive scale") {
    JointSpaceParams id = identity_params(3);
    Vec unit(3);
    unit << 0.0, 1.0, 0.0;
    CHECK((project_span(unit, id) - unit).norm() < 1e-12);

    Rng rng(3);
    JointSpaceParams p;
    p.speech_w = Mat(4, 3);
    p.image_w = Mat(4, 5);
    for (long i = 0; i < p.speech_w.size(); ++i) p.speech_w.data()[i] = rng.normal();
    for (long i = 0; i < p.image_w.size(); ++i) p.image_w.data()[i] = rng.normal();
    p.speech_b = Vec::Zero(4);
    p.image_b = Vec::Zero(4);

    Vec x(3);
    x << 0.4, -1.2, 0.7;
    CHECK(project_span(x, p).norm() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK((project_span(3.7 * x, p) - project_span(x, p)).norm() < 1e-12);

    Vec y(5);
    y << 1, 2, 3, 4, 5;
    CHECK(project_image(y, p).norm() == doctest::Approx(1.0).epsilon(1e-9));

    // A projection that collapses the input to zero is degenerate.
    JointSpaceParams zero = identity_params(3);
    zero.speech_w.setZero();
    CHECK_THROWS(project_span(x.head(3), zero));
}

TEST_CASE("hinge loss on engineered cosines") {
    Vec i = at_cosine(1.0);     // [1, 0]
    Vec c = at_cosine(0.9);     // cos(i, c) = 0.9
    Vec cp = at_cosine(0.5);    // cos(i, c') = 0.5
    Vec ip = rotated_from(c, 0.3); // cos(i', c) = 0.3
    CHECK(cosine(i, c) == doctest::Approx(0.9));
    CHECK(cosine(i, cp) == doctest::Approx(0.5));
    CHECK(cosine(ip, c) == doctest::Approx(0.3));

    // Both hinges stay below the margin: [0.5-0.9+0.2]+ + [0.3-0.9+0.2]+ = 0.
    CHECK(triplet_item_loss(c, i, {cp}, {ip}, 0.2) == 0.0);

    // Self-imposters sit exactly at the margin on both sides.
    CHECK(triplet_item_loss(c, i, {c}, {i}, 0.2) == doctest::Approx(0.4));

    // Loss is never negative and decomposes per imposter.
    Vec worst = rotated_from(c, 0.99);
    CHECK(triplet_item_loss(c, i, {cp}, {worst}, 0.2) >=
          triplet_item_loss(c, i, {cp}, {ip}, 0.2));
}

TEST_CASE("concreteness on engineered cosines") {
    Vec i = at_cosine(1.0);
    Vec c = at_cosine(0.9);
    Vec cp = at_cosine(0.1);       // cos(i, c') = 0.1
    Vec ip = rotated_from(c, 0.1); // cos(i', c) = 0.1

    // (0.9-0.1-0.2) + (0.9-0.1-0.2) = 1.2.
    CHECK(concreteness(c, i, {cp}, {ip}, 0.2) == doctest::Approx(1.2));

    // The span being its own imposter kills the first term.
    CHECK(concreteness(c, i, {c}, {ip}, 0.2) == doctest::Approx(0.6));

    // Positive rescaling of the arguments changes nothing.
    CHECK(concreteness(5.0 * c, 0.25 * i, {cp}, {ip}, 0.2) ==
          doctest::Approx(concreteness(c, i, {cp}, {ip}, 0.2)));

    CHECK(concreteness(cp, i, {c}, {ip}, 0.2) >= 0.0);
}

TEST_CASE("batch loss agrees between tape and value paths") {
    Rng rng(5);
    GroundingModel model(3, 4, 3, 0.2, rng);
    std::vector<Vec> spans, images;
    for (int k = 0; k < 4; ++k) {
        Vec s(3), im(4);
        for (long j = 0; j < 3; ++j) s[j] = rng.normal();
        for (long j = 0; j < 4; ++j) im[j] = rng.normal();
        spans.push_back(s);
        images.push_back(im);
    }
    std::vector<int> groups{0, 0, 1, 2};

    Tape tape;
    std::vector<Var> span_vars;
    for (const Vec& s : spans) span_vars.push_back(tape.input(s));
    double on_tape = tape.sval(triplet_loss(tape, model, span_vars, images, groups));
    double plain = triplet_loss_value(model.snapshot(), spans, images, groups);
    CHECK(on_tape == doctest::Approx(plain).epsilon(1e-12));
    CHECK(on_tape >= 0.0);
}

TEST_CASE("identical pairs in different groups pay exactly the margin") {
    Rng rng(7);
    GroundingModel model(3, 3, 3, 0.2, rng);
    Vec s(3), im(3);
    s << 0.4, -0.2, 0.9;
    im << 1.0, 0.5, -0.3;

    Tape tape;
    std::vector<Var> span_vars{tape.input(s), tape.input(s)};
    Var loss = triplet_loss(tape, model, span_vars, {im, im}, {0, 1});
    // Four hinge terms, each exactly delta.
    CHECK(tape.sval(loss) == doctest::Approx(0.8));
}

TEST_CASE("a batch needs at least two distinct groups") {
    Rng rng(9);
    GroundingModel model(2, 2, 2, 0.2, rng);
    Vec s(2), im(2);
    s << 1, 0;
    im << 0, 1;
    Tape tape;
    std::vector<Var> vars{tape.input(s), tape.input(s)};
    CHECK_THROWS(triplet_loss(tape, model, vars, {im, im}, {4, 4}));
    std::vector<Var> one{tape.input(s)};
    CHECK_THROWS(triplet_loss(tape, model, one, {im}));
}

TEST_CASE("batch loss gradients match finite differences") {
    Rng rng(11);
    GroundingModel model(3, 4, 3, 0.2, rng);
    // Span embeddings flow through an upstream tensor so the check covers the
    // gradient into the spans as well as into the projections.
    Tensor We = xavier_init(3, 2, rng);
    Tensor be = xavier_init(3, 1, rng);
    std::vector<Vec> xs;
    std::vector<Vec> images;
    for (int k = 0; k < 4; ++k) {
        Vec x(2), im(4);
        for (long j = 0; j < 2; ++j) x[j] = rng.normal();
        for (long j = 0; j < 4; ++j) im[j] = rng.normal();
        xs.push_back(x);
        images.push_back(im);
    }

    auto build = [&](Tape& t) {
        std::vector<Var> spans;
        for (const Vec& x : xs) spans.push_back(t.affine(We, be, t.input(x)));
        return triplet_loss(t, model, spans, images);
    };
    auto value = [&] {
        Tape t;
        return t.sval(build(t));
    };
    auto backward = [&] {
        Tape t;
        t.backward(build(t));
    };

    std::vector<Tensor*> tensors = model.params();
    tensors.push_back(&We);
    tensors.push_back(&be);
    for (Tensor* p : tensors) {
        p->zero_grad();
        backward();
        Mat analytic = p->g;
        Mat numeric = oracle::numeric_grad(value, *p);
        CHECK(oracle::grad_rel_error(analytic, numeric) < 1e-4);
    }
}

TEST_CASE("model round trip through snapshot and load") {
    Rng rng(13);
    GroundingModel a(3, 4, 5, 0.3, rng);
    GroundingModel b(3, 4, 5, 0.3, rng); // different draw
    JointSpaceParams snap = a.snapshot();
    b.load(snap);
    Vec x(3), y(4);
    x << 0.2, -0.5, 0.8;
    y << 1, 2, 3, 4;
    CHECK((a.project_span(x) - b.project_span(x)).norm() == 0.0);
    CHECK((a.project_image(y) - b.project_image(y)).norm() == 0.0);
    CHECK(project_span(x, snap) == a.project_span(x));
}

TEST_CASE("concrete spans score higher concreteness than function spans") {
    SyntheticGrammarConfig cfg;
    cfg.noise_scale = 0.0;
    Rng rng(17);
    SynthCorpus corpus = synth_corpus(cfg, 40, rng);

    // Project spans through the generator's hidden map so both modalities
    // share a space; cosine handles normalization.
    auto span_vec = [&](std::size_t u, std::size_t k) {
        SegmentEmbeddingSeq emb = mean_pool(corpus.utterances[u].features,
                                            Segmentation{{corpus.gold_segs[u].spans[k]}});
        return Vec(corpus.truth.image_proj * emb.row(0));
    };

    std::vector<Vec> all_images;
    for (const Utterance& u : corpus.utterances) all_images.push_back(u.image.vector);

    double sum_concrete = 0.0, sum_function = 0.0;
    int n_concrete = 0, n_function = 0;
    for (std::size_t u = 0; u < corpus.utterances.size(); ++u) {
        // Imposters: the other utterances' images and first spans.
        std::vector<Vec> imp_images, imp_spans;
        for (std::size_t v = 0; v < corpus.utterances.size(); ++v) {
            if (v == u) continue;
            imp_images.push_back(all_images[v]);
            imp_spans.push_back(span_vec(v, 0));
        }
        for (std::size_t k = 0; k < corpus.truth.tokens[u].size(); ++k) {
            double val = concreteness(span_vec(u, k), all_images[u], imp_spans, imp_images, 0.05);
            if (corpus.truth.token_concrete[corpus.truth.tokens[u][k]]) {
                sum_concrete += val;
                ++n_concrete;
            } else {
                sum_function += val;
                ++n_function;
            }
        }
    }
    REQUIRE(n_concrete > 0);
    REQUIRE(n_function > 0);
    CHECK(sum_concrete / n_concrete > sum_function / n_function);
}
