#include "avnsl/parser.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace avnsl {

ParserModel::ParserModel(const HyperParams& hp, long embed_dim, Rng& rng)
    : combine_mode_(hp.combine_mode), score_input_(hp.score_input), embed_dim_(embed_dim) {
    hp.validate();
    if (embed_dim < 1) throw std::invalid_argument("ParserModel: embed_dim < 1");
    long score_in = score_input_ == "concat" ? 2 * embed_dim : embed_dim;
    std::vector<long> score_sizes{score_in};
    for (int i = 0; i < hp.score_depth; ++i) score_sizes.push_back(hp.score_hidden);
    score_sizes.push_back(1);
    score_ = Mlp(score_sizes, rng);
    if (combine_mode_ == "mlp")
        combine_ = Mlp({2 * embed_dim, static_cast<long>(hp.combine_hidden), embed_dim}, rng);
}

double ParserModel::score_pair(const Vec& a, const Vec& b) const {
    if (a.size() != b.size()) throw std::invalid_argument("score_pair: dimension mismatch");
    if (score_input_ == "right") return score_.forward(b)[0];
    Vec x(a.size() + b.size());
    x << a, b;
    return score_.forward(x)[0];
}

Var ParserModel::score_pair(Tape& tape, Var a, Var b) {
    Var x = score_input_ == "right" ? b : tape.concat(a, b);
    return score_.forward(tape, x);
}

Vec ParserModel::combine(const Vec& a, const Vec& b) const {
    if (a.size() != b.size()) throw std::invalid_argument("combine: dimension mismatch");
    Vec y;
    if (combine_mode_ == "vgnsl") {
        y = a + b;
    } else {
        Vec x(a.size() + b.size());
        x << a, b;
        y = combine_.forward(x);
    }
    double n = y.norm();
    if (n < 1e-12) throw std::domain_error("combine: zero-norm result");
    return y / n;
}

Var ParserModel::combine(Tape& tape, Var a, Var b) {
    if (combine_mode_ == "vgnsl") return tape.l2_normalize(tape.add(a, b));
    return tape.l2_normalize(combine_.forward(tape, tape.concat(a, b)));
}

std::vector<Tensor*> ParserModel::params() {
    std::vector<Tensor*> out = score_.params();
    if (combine_mode_ == "mlp")
        for (Tensor* t : combine_.params()) out.push_back(t);
    return out;
}

namespace {

// Stable softmax over raw scores; returns probabilities.
std::vector<double> softmax(const std::vector<double>& s) {
    double mx = *std::max_element(s.begin(), s.end());
    std::vector<double> p(s.size());
    double z = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        p[i] = std::exp(s[i] - mx);
        z += p[i];
    }
    for (double& v : p) v /= z;
    return p;
}

std::size_t sample_index(const std::vector<double>& probs, Rng& rng) {
    double u = rng.uniform();
    double acc = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        acc += probs[i];
        if (u < acc) return i;
    }
    return probs.size() - 1;
}

} // namespace

BuiltTree build_tree(const SegmentEmbeddingSeq& embeddings, const Segmentation& seg,
                     const ParserModel& model, const std::string& mode, Rng* rng) {
    if (mode != "sample" && mode != "greedy")
        throw std::invalid_argument("build_tree: mode must be sample or greedy");
    if (mode == "sample" && !rng) throw std::invalid_argument("build_tree: sample mode needs rng");
    long n = embeddings.n();
    if (n < 1) throw std::invalid_argument("build_tree: no segments");
    if (static_cast<std::size_t>(n) != seg.size())
        throw std::invalid_argument("build_tree: embedding/segmentation count mismatch");

    BuiltTree out;
    if (n == 1) {
        out.tree = ParseTree::leaf(seg.spans[0]);
        return out;
    }

    std::vector<int> ids(n);
    std::vector<Vec> embs(n);
    for (long i = 0; i < n; ++i) {
        ids[i] = static_cast<int>(i);
        embs[i] = embeddings.row(i);
    }
    std::vector<std::pair<int, int>> merges;
    while (ids.size() > 1) {
        std::vector<double> scores(ids.size() - 1);
        for (std::size_t i = 0; i + 1 < ids.size(); ++i)
            scores[i] = model.score_pair(embs[i], embs[i + 1]);
        std::size_t pick;
        if (mode == "greedy") {
            pick = 0;
            for (std::size_t i = 1; i < scores.size(); ++i)
                if (scores[i] > scores[pick]) pick = i;
        } else {
            std::vector<double> probs = softmax(scores);
            pick = sample_index(probs, *rng);
            out.log_prob += std::log(probs[pick]);
        }
        Vec merged = model.combine(embs[pick], embs[pick + 1]);
        merges.emplace_back(ids[pick], ids[pick + 1]);
        ids[pick] = static_cast<int>(n) + static_cast<int>(merges.size()) - 1;
        embs[pick] = std::move(merged);
        ids.erase(ids.begin() + static_cast<long>(pick) + 1);
        embs.erase(embs.begin() + static_cast<long>(pick) + 1);
    }
    out.tree = ParseTree::from_merges(seg.spans, merges);
    return out;
}

BuiltTreeTape build_tree_tape(Tape& tape, const std::vector<Var>& leaf_embeddings,
                              const Segmentation& seg, ParserModel& model, Rng& rng) {
    std::size_t n = leaf_embeddings.size();
    if (n < 1) throw std::invalid_argument("build_tree_tape: no segments");
    if (n != seg.size())
        throw std::invalid_argument("build_tree_tape: embedding/segmentation count mismatch");

    BuiltTreeTape out;
    out.node_emb = leaf_embeddings;
    if (n == 1) {
        out.tree = ParseTree::leaf(seg.spans[0]);
        out.log_prob = tape.input(0.0);
        return out;
    }

    std::vector<int> ids(n);
    std::vector<Var> embs = leaf_embeddings;
    for (std::size_t i = 0; i < n; ++i) ids[i] = static_cast<int>(i);
    std::vector<std::pair<int, int>> merges;
    while (ids.size() > 1) {
        std::vector<Var> scores(ids.size() - 1);
        for (std::size_t i = 0; i + 1 < ids.size(); ++i)
            scores[i] = model.score_pair(tape, embs[i], embs[i + 1]);
        std::vector<double> probs = tape.softmax_values(scores);
        std::size_t pick = sample_index(probs, rng);
        out.step_logp.push_back(tape.log_softmax_pick(scores, static_cast<int>(pick)));
        Var merged = model.combine(tape, embs[pick], embs[pick + 1]);
        out.node_emb.push_back(merged);
        merges.emplace_back(ids[pick], ids[pick + 1]);
        ids[pick] = static_cast<int>(n) + static_cast<int>(merges.size()) - 1;
        embs[pick] = merged;
        ids.erase(ids.begin() + static_cast<long>(pick) + 1);
        embs.erase(embs.begin() + static_cast<long>(pick) + 1);
    }
    out.tree = ParseTree::from_merges(seg.spans, merges);
    out.log_prob = tape.sum(out.step_logp);
    return out;
}

namespace {

int build_fixed(int lo, int hi, int n, const std::string& kind, Rng* rng,
                std::vector<std::pair<int, int>>& merges) {
    if (hi - lo == 1) return lo;
    int split;
    if (kind == "right")
        split = lo + 1;
    else if (kind == "left")
        split = hi - 1;
    else
        split = lo + 1 + rng->uniform_int(hi - lo - 1);
    int l = build_fixed(lo, split, n, kind, rng, merges);
    int r = build_fixed(split, hi, n, kind, rng, merges);
    merges.emplace_back(l, r);
    return n + static_cast<int>(merges.size()) - 1;
}

} // namespace

ParseTree trivial_tree(const std::vector<TimeSpan>& leaf_spans, const std::string& kind,
                       Rng* rng) {
    if (kind != "left" && kind != "right" && kind != "random")
        throw std::invalid_argument("trivial_tree: kind must be left, right, or random");
    if (leaf_spans.empty()) throw std::invalid_argument("trivial_tree: no leaves");
    if (kind == "random" && !rng) throw std::invalid_argument("trivial_tree: random needs rng");
    int n = static_cast<int>(leaf_spans.size());
    if (n == 1) return ParseTree::leaf(leaf_spans[0]);
    std::vector<std::pair<int, int>> merges;
    build_fixed(0, n, n, kind, rng, merges);
    return ParseTree::from_merges(leaf_spans, merges);
}

Trainer::Trainer(const HyperParams& hp, long embed_dim, long image_dim)
    : hp_(hp), rng_(hp.seed) {
    hp_.validate();
    long joint = hp.joint_dim > 0 ? hp.joint_dim : embed_dim;
    Rng parser_rng = rng_.split();
    Rng ground_rng = rng_.split();
    Rng pool_rng = rng_.split();
    parser_ = ParserModel(hp, embed_dim, parser_rng);
    grounding_ = GroundingModel(embed_dim, image_dim, joint, hp.margin, ground_rng);
    pooling_ = PoolingParams::init(embed_dim, pool_rng);
    baseline_.decay = hp.ema_decay;
}

SegmentEmbeddingSeq Trainer::pool_plain(const Utterance& u, const Segmentation& seg) const {
    if (hp_.pooling == "attention")
        return attention_pool(u.features, u.attention_layer(hp_.layer), seg);
    if (hp_.pooling == "mlp") return mlp_attention_pool(u.features, seg, pooling_);
    return mean_pool(u.features, seg);
}

TrainDiagnostics Trainer::step(const std::vector<const Utterance*>& batch,
                               const std::vector<Segmentation>& segs) {
    if (batch.size() != segs.size())
        throw std::invalid_argument("Trainer::step: batch/segmentation count mismatch");
    if (batch.size() < 2)
        throw std::invalid_argument("Trainer::step: need >= 2 utterances for imposters");

    Tape tape;
    struct Item {
        BuiltTreeTape built;
        Vec image;
    };
    std::vector<Item> items;
    std::vector<Var> all_spans;
    std::vector<Vec> all_images;
    std::vector<int> all_groups;
    items.reserve(batch.size());

    for (std::size_t k = 0; k < batch.size(); ++k) {
        const Utterance& u = *batch[k];
        const Segmentation& seg = segs[k];
        std::vector<Var> leaves;
        if (hp_.pooling == "mlp") {
            leaves = mlp_attention_pool(tape, u.features, seg, pooling_);
        } else {
            SegmentEmbeddingSeq pooled = pool_plain(u, seg);
            leaves.reserve(pooled.n());
            for (long i = 0; i < pooled.n(); ++i) leaves.push_back(tape.input(pooled.row(i)));
        }
        Item it;
        it.built = build_tree_tape(tape, leaves, seg, parser_, rng_);
        it.image = u.image.vector;
        for (const Var& v : it.built.node_emb) {
            all_spans.push_back(v);
            all_images.push_back(it.image);
            all_groups.push_back(static_cast<int>(k));
        }
        items.push_back(std::move(it));
    }

    // Rewards (values only, no gradient): concreteness of each new constituent
    // against the joint-space nodes and images of the other utterances.
    std::vector<std::vector<Vec>> joint_nodes(items.size());
    std::vector<Vec> joint_images(items.size());
    for (std::size_t k = 0; k < items.size(); ++k) {
        for (const Var& v : items[k].built.node_emb)
            joint_nodes[k].push_back(grounding_.project_span(tape.val(v)));
        joint_images[k] = grounding_.project_image(items[k].image);
    }

    std::vector<Var> policy_terms;
    double reward_sum = 0.0;
    long reward_count = 0;
    for (std::size_t k = 0; k < items.size(); ++k) {
        const BuiltTreeTape& bt = items[k].built;
        int n = bt.tree.n_leaves();
        std::vector<Vec> imp_spans, imp_images;
        for (std::size_t j = 0; j < items.size(); ++j) {
            if (j == k) continue;
            for (const Vec& v : joint_nodes[j]) imp_spans.push_back(v);
            imp_images.push_back(joint_images[j]);
        }
        for (std::size_t t = 0; t < bt.step_logp.size(); ++t) {
            int made = n + static_cast<int>(t);
            double r;
            if (reward_fn_) {
                r = reward_fn_(static_cast<int>(k), static_cast<int>(t), bt.tree.node(made).span);
            } else {
                r = concreteness(joint_nodes[k][made], joint_images[k], imp_spans, imp_images,
                                 hp_.margin);
            }
            if (!std::isfinite(r)) throw std::runtime_error("training diverged: non-finite reward");
            double advantage = r - baseline_.value;
            baseline_.observe(r);
            reward_sum += r;
            ++reward_count;
            policy_terms.push_back(tape.scale(bt.step_logp[t], -advantage));
        }
    }

    Var policy_loss = tape.sum(policy_terms);
    Var ground_loss = triplet_loss(tape, grounding_, all_spans, all_images, all_groups);
    Var total = tape.add(policy_loss, ground_loss);

    TrainDiagnostics diag;
    diag.mean_reward = reward_count > 0 ? reward_sum / static_cast<double>(reward_count) : 0.0;
    diag.baseline = baseline_.value;
    diag.policy_loss = tape.sval(policy_loss);
    diag.triplet_loss = tape.sval(ground_loss);
    diag.total_loss = tape.sval(total);
    if (!std::isfinite(diag.total_loss))
        throw std::runtime_error("training diverged: non-finite loss");

    for (Tensor* t : parser_.params()) t->zero_grad();
    for (Tensor* t : grounding_.params()) t->zero_grad();
    for (Tensor* t : pooling_.params()) t->zero_grad();
    tape.backward(total);

    double pn = 0.0, gn = 0.0;
    for (Tensor* t : parser_.params()) pn += t->g.squaredNorm();
    for (Tensor* t : grounding_.params()) gn += t->g.squaredNorm();
    diag.parser_grad_norm = std::sqrt(pn);
    diag.grounding_grad_norm = std::sqrt(gn);

    SgdMomentum parser_opt{hp_.lr_parser, hp_.momentum};
    parser_opt.step(parser_.params());
    SgdMomentum ground_opt{hp_.lr_grounding, hp_.momentum};
    ground_opt.step(grounding_.params());
    if (hp_.pooling == "mlp") ground_opt.step(pooling_.params());

    ++steps_taken_;
    return diag;
}

ParseTree Trainer::parse(const Utterance& u, const Segmentation& seg) const {
    SegmentEmbeddingSeq pooled = pool_plain(u, seg);
    return build_tree(pooled, seg, parser_, "greedy", nullptr).tree;
}

namespace {

void put_layers(std::map<std::string, Mat>& out, const std::string& prefix, const Mlp& mlp) {
    for (std::size_t i = 0; i < mlp.layers().size(); ++i) {
        out[prefix + "/" + std::to_string(i) + "/W"] = mlp.layers()[i].W.v;
        out[prefix + "/" + std::to_string(i) + "/b"] = mlp.layers()[i].b.v;
    }
}

void get_layers(const std::map<std::string, Mat>& in, const std::string& prefix, Mlp& mlp) {
    for (std::size_t i = 0; i < mlp.layers().size(); ++i) {
        const std::string wk = prefix + "/" + std::to_string(i) + "/W";
        const std::string bk = prefix + "/" + std::to_string(i) + "/b";
        auto wi = in.find(wk), bi = in.find(bk);
        if (wi == in.end() || bi == in.end())
            throw std::runtime_error("checkpoint missing tensor " + wk);
        Mlp::Layer& l = mlp.layers()[i];
        if (wi->second.rows() != l.W.v.rows() || wi->second.cols() != l.W.v.cols())
            throw std::runtime_error("checkpoint tensor shape mismatch for " + wk);
        l.W.v = wi->second;
        l.b.v = bi->second;
    }
}

} // namespace

std::map<std::string, Mat> Trainer::state() const {
    std::map<std::string, Mat> out;
    put_layers(out, "parser/score", parser_.score_mlp());
    if (parser_.combine_mode() == "mlp") put_layers(out, "parser/combine", parser_.combine_mlp());
    JointSpaceParams jp = grounding_.snapshot();
    out["grounding/speech_w"] = jp.speech_w;
    out["grounding/speech_b"] = jp.speech_b;
    out["grounding/image_w"] = jp.image_w;
    out["grounding/image_b"] = jp.image_b;
    out["grounding/margin"] = Mat::Constant(1, 1, jp.margin);
    out["pooling/W"] = pooling_.W.v;
    out["pooling/b"] = pooling_.b.v;
    out["trainer/baseline"] = Mat::Constant(1, 1, baseline_.value);
    out["trainer/steps"] = Mat::Constant(1, 1, static_cast<double>(steps_taken_));
    return out;
}

void Trainer::load_state(const std::map<std::string, Mat>& state) {
    get_layers(state, "parser/score", parser_.score_mlp());
    if (parser_.combine_mode() == "mlp") get_layers(state, "parser/combine", parser_.combine_mlp());
    auto need = [&](const std::string& k) -> const Mat& {
        auto it = state.find(k);
        if (it == state.end()) throw std::runtime_error("checkpoint missing tensor " + k);
        return it->second;
    };
    JointSpaceParams jp;
    jp.speech_w = need("grounding/speech_w");
    jp.speech_b = need("grounding/speech_b").col(0);
    jp.image_w = need("grounding/image_w");
    jp.image_b = need("grounding/image_b").col(0);
    jp.margin = need("grounding/margin")(0, 0);
    grounding_.load(jp);
    pooling_.W.v = need("pooling/W");
    pooling_.b.v = need("pooling/b");
    baseline_.value = need("trainer/baseline")(0, 0);
    steps_taken_ = static_cast<int>(need("trainer/steps")(0, 0));
}

} // namespace avnsl
