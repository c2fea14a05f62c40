#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "avnsl/grad.hpp"
#include "avnsl/rng.hpp"
#include "avnsl/tree.hpp"
#include "avnsl/types.hpp"

namespace avnsl {

// Chart parser distilled from first-stage output trees: an MLP scores every
// candidate interval of the segment sequence, CKY picks the best-scoring
// binary tree, and training pushes the teacher tree's score above every
// alternative by a structured margin.

struct SelfTrainConfig {
    int hidden = 128;       // width of each hidden layer in the span scorer
    int depth = 2;          // number of hidden layers
    double lr = 1e-3;
    double momentum = 0.9;
    int steps = 2000;
    int batch_size = 8;
    std::uint64_t seed = 1;

    void validate() const;
};

// Scores an interval [i, j) of segment embeddings. The input to the MLP is
// the endpoint difference w_{j-1} - w_i, the mean of w_i..w_{j-1}, and five
// positional features: i/N, j/N, (j-i)/N, and indicator flags for i == 0 and
// j == N.
class SpanChartModel {
  public:
    SpanChartModel(int embed_dim, int hidden, int depth, Rng& rng);

    double span_score(const SegmentEmbeddingSeq& emb, int i, int j) const;
    Var span_score(Tape& tape, const SegmentEmbeddingSeq& emb, int i, int j);

    std::vector<Tensor*> params();
    const Mlp& mlp() const { return mlp_; }
    Mlp& mlp() { return mlp_; }
    int embed_dim() const { return embed_dim_; }

  private:
    Vec features(const SegmentEmbeddingSeq& emb, int i, int j) const;

    int embed_dim_ = 0;
    Mlp mlp_;
};

// Chart over one utterance: scores(i, j) holds the score of interval [i, j)
// for j - i >= 2; every other entry is zero. leaf_spans carries the segment
// times so decoding can emit a ParseTree.
struct SpanChart {
    Mat scores;
    std::vector<TimeSpan> leaf_spans;

    int n() const { return static_cast<int>(leaf_spans.size()); }
};

// Fills a chart for all intervals [i, j) with j - i >= 2. Requires N >= 2
// segments, matching the segmentation one-to-one with the embedding rows.
SpanChart span_chart(const SegmentEmbeddingSeq& emb, const Segmentation& seg,
                     const SpanChartModel& model);

// Returns the binary tree maximizing the sum of its internal-node interval
// scores. Ties break toward the lowest split point. A one-segment chart
// decodes to the single-leaf tree.
ParseTree cky_decode(const SpanChart& chart);

struct SelfTrainExample {
    SegmentEmbeddingSeq emb;
    ParseTree teacher;
};

struct SelfTrainStats {
    double mean_loss = 0.0;    // structured margin loss, averaged over the batch
    double grad_norm = 0.0;    // parameter gradient L2 norm before the update
    int violations = 0;        // batch items whose margin was violated
};

class SelfTrainer {
  public:
    SelfTrainer(const SelfTrainConfig& cfg, int embed_dim);

    // One SGD step on a batch of (embeddings, teacher tree) pairs. The loss
    // per item is max(0, score(worst offender) + hamming - score(teacher)),
    // where the offender is found by CKY over scores augmented with +1 for
    // every bracket absent from the teacher.
    SelfTrainStats step(const std::vector<const SelfTrainExample*>& batch);

    ParseTree parse(const SegmentEmbeddingSeq& emb, const Segmentation& seg) const;

    const SpanChartModel& model() const { return model_; }
    SpanChartModel& model() { return model_; }
    Rng& rng() { return rng_; }
    int steps_taken() const { return steps_taken_; }

    std::map<std::string, Mat> state() const;
    void load_state(const std::map<std::string, Mat>& state);

  private:
    SelfTrainConfig cfg_;
    Rng rng_;
    SpanChartModel model_;
    SgdMomentum opt_;
    int steps_taken_ = 0;
};

// Picks the candidate whose trees are closest on average to every other
// candidate's trees under tree_f1_loss summed over utterances. Candidates
// must cover the same utterances with the same segment counts; typical use
// is choosing among training checkpoints or input-layer variants.
int select_tree_candidates(const std::vector<std::vector<ParseTree>>& candidates);

struct FitResult {
    std::vector<int> checkpoint_steps;                   // ascending, last = cfg.steps
    std::vector<std::map<std::string, Mat>> checkpoints; // trainer state at each step
    std::size_t best = 0;                                // selected checkpoint index
    std::vector<double> step_loss;                       // mean margin loss per step
};

// Full training run: SGD over uniformly sampled batches, n_checkpoints evenly
// spaced snapshots, and a final choice among them by decoding every corpus
// utterance with each snapshot and keeping the consensus candidate (MBR under
// tree_f1_loss). Gold trees are never consulted.
FitResult fit_selftrain(const std::vector<SelfTrainExample>& corpus, const SelfTrainConfig& cfg,
                        int n_checkpoints = 4);

} // namespace avnsl
