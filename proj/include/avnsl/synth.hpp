#ifndef AVNSL_SYNTH_HPP
#define AVNSL_SYNTH_HPP

#include "avnsl/rng.hpp"
#include "avnsl/tree.hpp"
#include "avnsl/types.hpp"
#include "avnsl/utterance.hpp"

#include <string>
#include <vector>

namespace avnsl {

// Generator for a desk-scale corpus with known structure. Tokens come from a
// fixed vocabulary split into concrete and function types. Concrete tokens
// carry high plateau attention and contribute their latent vector to the image
// embedding (through a hidden linear map); function tokens get floor attention
// and are invisible to the image. The probability that a token is concrete
// ramps linearly across the utterance, so concrete mass concentrates where
// `concrete_prob_end` points.
struct SyntheticGrammarConfig {
    int vocab_size = 40;
    double concrete_fraction = 0.5; // fraction of vocabulary types that are concrete
    int embed_dim = 16;             // frame feature dimension
    int image_dim = 12;
    double noise_scale = 0.02;
    double branching_bias = 0.85;   // P(right-branching expansion at each node)
    int min_tokens = 4;
    int max_tokens = 8;
    double frame_rate = 50.0;
    double dur_min = 0.16;          // concrete token duration range (seconds)
    double dur_max = 0.30;
    double function_dur_min = 0.06; // function tokens are short
    double function_dur_max = 0.11;
    double concrete_prob_start = 0.10; // P(concrete) at the first token
    double concrete_prob_end = 0.90;   // P(concrete) at the last token
    double silence_prob = 0.0;      // P(silence after a token)
    double silence_min = 0.12;
    double silence_max = 0.20;
    double attn_peak_min = 0.70;    // plateau height range on concrete tokens
    double attn_peak_max = 1.00;
    double attn_floor = 0.02;       // attention elsewhere
    double collapse_prob = 0.0;     // P(dissolving a non-root ref-tree node)

    void validate() const;
};

// Per-corpus ground truth, for oracle checks in tests.
struct SyntheticTruth {
    Mat token_latents;                     // vocab_size x embed_dim, unit rows
    std::vector<bool> token_concrete;      // per vocabulary type
    Mat image_proj;                        // image_dim x embed_dim (the hidden map)
    std::vector<std::vector<int>> tokens;  // per utterance, token type ids
};

struct SynthCorpus {
    std::vector<Utterance> utterances;
    std::vector<ParseTree> gold_trees;      // leaves = gold segmentation spans
    std::vector<Segmentation> gold_segs;
    SyntheticTruth truth;
};

SynthCorpus synth_corpus(const SyntheticGrammarConfig& config, int n_utterances, Rng& rng);

// Writes feature/attention/VAD/image files, gold segmentations, labeled
// reference trees, and manifest.jsonl under out_dir. Returns the manifest path.
std::string write_corpus(const SynthCorpus& corpus, const std::string& out_dir);

} // namespace avnsl

#endif
