#ifndef AVNSL_PARSER_HPP
#define AVNSL_PARSER_HPP

#include "avnsl/grad.hpp"
#include "avnsl/grounding.hpp"
#include "avnsl/pooling.hpp"
#include "avnsl/tree.hpp"
#include "avnsl/types.hpp"
#include "avnsl/utterance.hpp"

#include <functional>
#include <map>
#include <string>
#include <vector>

namespace avnsl {

// Score and combine networks. Score maps a pair of embeddings (concatenated,
// or the right element only) to a scalar; combine either L2-normalizes the
// pair's sum ("vgnsl") or runs a GELU MLP over the concatenation and
// normalizes ("mlp").
class ParserModel {
public:
    ParserModel() = default;
    ParserModel(const HyperParams& hp, long embed_dim, Rng& rng);

    double score_pair(const Vec& a, const Vec& b) const;
    Var score_pair(Tape& tape, Var a, Var b);

    Vec combine(const Vec& a, const Vec& b) const;
    Var combine(Tape& tape, Var a, Var b);

    std::vector<Tensor*> params();
    const std::string& combine_mode() const { return combine_mode_; }
    const std::string& score_input() const { return score_input_; }
    long embed_dim() const { return embed_dim_; }

    Mlp& score_mlp() { return score_; }
    Mlp& combine_mlp() { return combine_; }
    const Mlp& score_mlp() const { return score_; }
    const Mlp& combine_mlp() const { return combine_; }

private:
    Mlp score_;
    Mlp combine_; // unused in vgnsl mode
    std::string combine_mode_ = "vgnsl";
    std::string score_input_ = "concat";
    long embed_dim_ = 0;
};

using ParserParams = ParserModel;

// One parse: N-1 merge steps over adjacent pairs; sample mode draws each pair
// with probability proportional to exp(score), greedy takes the leftmost
// argmax. log_prob is the sum over sampled steps (0 for N=1 and greedy mode).
struct BuiltTree {
    ParseTree tree;
    double log_prob = 0.0;
};

BuiltTree build_tree(const SegmentEmbeddingSeq& embeddings, const Segmentation& seg,
                     const ParserModel& model, const std::string& mode, Rng* rng);

// Differentiable sampling pass. node_emb[i] is the embedding var of tree node
// i (leaves then internals in merge order); step_logp has one entry per merge.
struct BuiltTreeTape {
    ParseTree tree;
    Var log_prob;
    std::vector<Var> step_logp;
    std::vector<Var> node_emb;
};

BuiltTreeTape build_tree_tape(Tape& tape, const std::vector<Var>& leaf_embeddings,
                              const Segmentation& seg, ParserModel& model, Rng& rng);

// Deterministic left/right-branching trees and a seeded random shape (uniform
// split-point recursion, not Catalan-uniform for n >= 4).
ParseTree trivial_tree(const std::vector<TimeSpan>& leaf_spans, const std::string& kind,
                       Rng* rng = nullptr);

// Reward EMA. Starts at 0; observe() folds one reward in.
struct EmaBaseline {
    double decay = 0.99;
    double value = 0.0;

    void observe(double r) { value = decay * value + (1.0 - decay) * r; }
};

struct TrainDiagnostics {
    double mean_reward = 0.0;
    double baseline = 0.0;
    double policy_loss = 0.0;
    double triplet_loss = 0.0;
    double total_loss = 0.0;
    double parser_grad_norm = 0.0;
    double grounding_grad_norm = 0.0;
};

// Joint REINFORCE + grounding trainer over pooled segment embeddings.
class Trainer {
public:
    // Overrides the per-merge reward (defaults to concreteness of the new
    // constituent against other-utterance imposters). Arguments: batch item
    // index, merge step, and the created node's segment interval.
    using RewardFn = std::function<double(int item, int step, const IndexSpan& made)>;

    Trainer(const HyperParams& hp, long embed_dim, long image_dim);

    // One optimizer step over the batch. Segmentations must pair with the
    // utterances one-to-one. Throws if the loss turns non-finite.
    TrainDiagnostics step(const std::vector<const Utterance*>& batch,
                          const std::vector<Segmentation>& segs);

    // Greedy parse with the current parameters.
    ParseTree parse(const Utterance& u, const Segmentation& seg) const;

    ParserModel& parser() { return parser_; }
    GroundingModel& grounding() { return grounding_; }
    PoolingParams& pooling() { return pooling_; }
    EmaBaseline& baseline() { return baseline_; }
    Rng& rng() { return rng_; }
    const HyperParams& hyper() const { return hp_; }

    void set_reward_fn(RewardFn fn) { reward_fn_ = std::move(fn); }

    // Named-tensor state for checkpointing; includes the baseline and step
    // counter. Momentum buffers are not stored, so a restored trainer resumes
    // deterministically but not bit-identically to an uninterrupted run.
    std::map<std::string, Mat> state() const;
    void load_state(const std::map<std::string, Mat>& state);

    int steps_taken() const { return steps_taken_; }

private:
    SegmentEmbeddingSeq pool_plain(const Utterance& u, const Segmentation& seg) const;

    HyperParams hp_;
    ParserModel parser_;
    GroundingModel grounding_;
    PoolingParams pooling_;
    EmaBaseline baseline_;
    Rng rng_;
    RewardFn reward_fn_;
    int steps_taken_ = 0;
};

} // namespace avnsl

#endif
