#include "avnsl/synth.hpp"

#include "avnsl/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <stdexcept>

namespace avnsl {

namespace fs = std::filesystem;

void SyntheticGrammarConfig::validate() const {
    auto prob = [](double p, const char* name) {
        if (p < 0.0 || p > 1.0)
            throw std::invalid_argument(std::string("SyntheticGrammarConfig: ") + name +
                                        " must be in [0, 1]");
    };
    prob(concrete_fraction, "concrete_fraction");
    prob(branching_bias, "branching_bias");
    prob(concrete_prob_start, "concrete_prob_start");
    prob(concrete_prob_end, "concrete_prob_end");
    prob(silence_prob, "silence_prob");
    prob(collapse_prob, "collapse_prob");
    if (vocab_size < 2) throw std::invalid_argument("SyntheticGrammarConfig: vocab_size < 2");
    if (embed_dim < 2 || image_dim < 2)
        throw std::invalid_argument("SyntheticGrammarConfig: dimensions must be >= 2");
    if (noise_scale < 0.0)
        throw std::invalid_argument("SyntheticGrammarConfig: negative noise_scale");
    if (min_tokens < 1 || max_tokens < min_tokens)
        throw std::invalid_argument("SyntheticGrammarConfig: bad utterance-length range");
    if (frame_rate <= 0.0) throw std::invalid_argument("SyntheticGrammarConfig: frame_rate <= 0");
    auto range = [](double lo, double hi, const char* name) {
        if (lo <= 0.0 || hi < lo)
            throw std::invalid_argument(std::string("SyntheticGrammarConfig: bad ") + name);
    };
    range(dur_min, dur_max, "token duration range");
    range(function_dur_min, function_dur_max, "function token duration range");
    range(silence_min, silence_max, "silence duration range");
    range(attn_peak_min, attn_peak_max, "attention peak range");
    if (attn_floor < 0.0) throw std::invalid_argument("SyntheticGrammarConfig: negative attn_floor");
    if (attn_floor >= attn_peak_min)
        throw std::invalid_argument("SyntheticGrammarConfig: attn_floor must sit below attn_peak_min");
}

namespace {

// Recursive tree sampler: with probability `bias` split after the first leaf
// (right-branching expansion), otherwise split uniformly.
int sample_tree(int lo, int hi, double bias, Rng& rng,
                std::vector<std::pair<int, int>>& merges, int n) {
    if (hi - lo == 1) return lo;
    int split;
    if (hi - lo == 2 || rng.uniform() < bias)
        split = lo + 1;
    else
        split = lo + 1 + static_cast<int>(rng.uniform() * static_cast<double>(hi - lo - 1));
    split = std::min(split, hi - 1);
    int l = sample_tree(lo, split, bias, rng, merges, n);
    int r = sample_tree(split, hi, bias, rng, merges, n);
    merges.emplace_back(l, r);
    return n + static_cast<int>(merges.size()) - 1;
}

std::string sample_label(Rng& rng) {
    double u = rng.uniform();
    if (u < 0.30) return "NP";
    if (u < 0.55) return "VP";
    if (u < 0.75) return "PP";
    if (u < 0.90) return "ADJP";
    return "";
}

// Build a labeled reference tree mirroring `gold`, dissolving non-root
// internal nodes with probability `collapse_prob` (children splice upward).
LabeledRefTree make_ref_tree(const ParseTree& gold, double collapse_prob, Rng& rng) {
    std::vector<LabeledRefTree::Node> nodes;
    // Returns the ref ids this gold node contributes to its parent's child list.
    auto build = [&](auto&& self, int gold_id, bool is_root) -> std::vector<int> {
        const ParseTree::Node& gn = gold.node(gold_id);
        if (gn.is_leaf()) {
            nodes.push_back({gold.node_time_span(gold_id), "", {}});
            return {static_cast<int>(nodes.size()) - 1};
        }
        std::vector<int> kids;
        for (int c : {gn.left, gn.right})
            for (int id : self(self, c, false)) kids.push_back(id);
        if (!is_root && collapse_prob > 0.0 && rng.uniform() < collapse_prob) return kids;
        nodes.push_back({gold.node_time_span(gold_id), sample_label(rng), std::move(kids)});
        return {static_cast<int>(nodes.size()) - 1};
    };
    std::vector<int> roots = build(build, gold.root(), true);
    return LabeledRefTree(std::move(nodes), roots.front());
}

} // namespace

SynthCorpus synth_corpus(const SyntheticGrammarConfig& config, int n_utterances, Rng& rng) {
    config.validate();
    if (n_utterances < 0) throw std::invalid_argument("synth_corpus: negative n_utterances");

    SynthCorpus out;
    int n_concrete =
        std::clamp(static_cast<int>(std::lround(config.concrete_fraction * config.vocab_size)), 1,
                   config.vocab_size);

    // Vocabulary: unit latent per type; types [0, n_concrete) are concrete.
    Rng vocab_rng = rng.split();
    out.truth.token_latents.resize(config.vocab_size, config.embed_dim);
    for (int v = 0; v < config.vocab_size; ++v) {
        Vec l(config.embed_dim);
        for (int d = 0; d < config.embed_dim; ++d) l[d] = vocab_rng.normal();
        out.truth.token_latents.row(v) = (l / l.norm()).transpose();
    }
    out.truth.token_concrete.assign(config.vocab_size, false);
    for (int v = 0; v < n_concrete; ++v) out.truth.token_concrete[v] = true;

    out.truth.image_proj.resize(config.image_dim, config.embed_dim);
    double pscale = 1.0 / std::sqrt(static_cast<double>(config.embed_dim));
    for (long i = 0; i < out.truth.image_proj.rows(); ++i)
        for (long j = 0; j < out.truth.image_proj.cols(); ++j)
            out.truth.image_proj(i, j) = pscale * vocab_rng.normal();

    for (int ui = 0; ui < n_utterances; ++ui) {
        Rng ur = rng.split();
        int n = config.min_tokens +
                static_cast<int>(ur.uniform() *
                                 static_cast<double>(config.max_tokens - config.min_tokens + 1));
        n = std::min(n, config.max_tokens);

        // Token types: concreteness probability ramps across positions.
        std::vector<int> types(n);
        bool any_concrete = false;
        for (int k = 0; k < n; ++k) {
            double x = n == 1 ? 1.0 : static_cast<double>(k) / static_cast<double>(n - 1);
            double pc = config.concrete_prob_start +
                        x * (config.concrete_prob_end - config.concrete_prob_start);
            bool concrete = n_concrete == config.vocab_size || ur.uniform() < pc;
            if (concrete) {
                types[k] = static_cast<int>(ur.uniform() * n_concrete);
                types[k] = std::min(types[k], n_concrete - 1);
                any_concrete = true;
            } else {
                int nf = config.vocab_size - n_concrete;
                types[k] = n_concrete + std::min(static_cast<int>(ur.uniform() * nf), nf - 1);
            }
        }
        if (!any_concrete) {
            types[n - 1] = std::min(static_cast<int>(ur.uniform() * n_concrete), n_concrete - 1);
        }

        // Frame layout: per-token frame counts, optional trailing silences.
        std::vector<int> tok_frames(n), sil_frames(n, 0);
        for (int k = 0; k < n; ++k) {
            bool concrete = out.truth.token_concrete[types[k]];
            double lo = concrete ? config.dur_min : config.function_dur_min;
            double hi = concrete ? config.dur_max : config.function_dur_max;
            double dur = lo + ur.uniform() * (hi - lo);
            tok_frames[k] = std::max(1, static_cast<int>(std::lround(dur * config.frame_rate)));
            if (k + 1 < n && config.silence_prob > 0.0 && ur.uniform() < config.silence_prob) {
                double sd = config.silence_min + ur.uniform() * (config.silence_max - config.silence_min);
                sil_frames[k] = std::max(1, static_cast<int>(std::lround(sd * config.frame_rate)));
            }
        }
        int total = 0;
        for (int k = 0; k < n; ++k) total += tok_frames[k] + sil_frames[k];

        Utterance u;
        u.id = "synth-" + std::to_string(ui);
        u.features.frame_rate = config.frame_rate;
        u.features.frames.resize(total, config.embed_dim);
        u.vad.voiced.assign(total, true);
        Vec attn = Vec::Constant(total, config.attn_floor);

        Segmentation seg;
        int t0 = 0;
        for (int k = 0; k < n; ++k) {
            bool concrete = out.truth.token_concrete[types[k]];
            double peak = config.attn_peak_min +
                          ur.uniform() * (config.attn_peak_max - config.attn_peak_min);
            for (int t = t0; t < t0 + tok_frames[k]; ++t) {
                for (int d = 0; d < config.embed_dim; ++d)
                    u.features.frames(t, d) =
                        out.truth.token_latents(types[k], d) + config.noise_scale * ur.normal();
                if (concrete) attn[t] = peak;
            }
            seg.spans.emplace_back(static_cast<double>(t0) / config.frame_rate,
                                   static_cast<double>(t0 + tok_frames[k]) / config.frame_rate);
            t0 += tok_frames[k];
            for (int t = t0; t < t0 + sil_frames[k]; ++t) {
                for (int d = 0; d < config.embed_dim; ++d)
                    u.features.frames(t, d) = config.noise_scale * ur.normal();
                u.vad.voiced[t] = false;
            }
            t0 += sil_frames[k];
        }

        AttentionProfile a0;
        a0.layer_id = 0;
        a0.weights = attn;
        // Layer 1: blurred and lifted, a deliberately worse segmentation signal.
        AttentionProfile a1;
        a1.layer_id = 1;
        a1.weights.resize(total);
        for (int t = 0; t < total; ++t) {
            int lo = std::max(0, t - 3), hi = std::min(total - 1, t + 3);
            double s = 0.0;
            for (int w = lo; w <= hi; ++w) s += attn[w];
            a1.weights[t] = s / static_cast<double>(hi - lo + 1) + 0.08;
        }
        u.attention = {std::move(a0), std::move(a1)};

        // Image: hidden projection of summed concrete latents, normalized.
        Vec acc = Vec::Zero(config.embed_dim);
        for (int k = 0; k < n; ++k)
            if (out.truth.token_concrete[types[k]])
                acc += out.truth.token_latents.row(types[k]).transpose();
        Vec img = out.truth.image_proj * acc;
        double norm = img.norm();
        if (norm < 1e-9) {
            img = out.truth.image_proj * out.truth.token_latents.row(types[n - 1]).transpose();
            norm = img.norm();
        }
        img /= norm;
        for (int d = 0; d < config.image_dim; ++d) img[d] += config.noise_scale * ur.normal();
        u.image.vector = img;

        // Gold structure.
        std::vector<std::pair<int, int>> merges;
        sample_tree(0, n, config.branching_bias, ur, merges, n);
        ParseTree gold = n == 1 ? ParseTree::leaf(seg.spans[0])
                                : ParseTree::from_merges(seg.spans, merges);
        u.oracle_segmentation = seg;
        u.ref_tree = make_ref_tree(gold, config.collapse_prob, ur);
        u.validate();

        out.truth.tokens.push_back(std::move(types));
        out.gold_trees.push_back(std::move(gold));
        out.gold_segs.push_back(std::move(seg));
        out.utterances.push_back(std::move(u));
    }
    return out;
}

std::string write_corpus(const SynthCorpus& corpus, const std::string& out_dir) {
    fs::create_directories(out_dir);
    for (const char* sub : {"feats", "attn", "vad", "img", "seg", "tree"})
        fs::create_directories(fs::path(out_dir) / sub);

    CorpusManifest manifest;
    for (std::size_t i = 0; i < corpus.utterances.size(); ++i) {
        const Utterance& u = corpus.utterances[i];
        ManifestRecord r;
        r.id = u.id;
        r.features = "feats/" + u.id + ".bin";
        write_frame_file((fs::path(out_dir) / r.features).string(), u.features.frames,
                         u.features.frame_rate);
        for (const AttentionProfile& a : u.attention) {
            std::string rel = "attn/" + u.id + "_l" + std::to_string(a.layer_id) + ".bin";
            write_frame_file((fs::path(out_dir) / rel).string(), a.weights,
                             u.features.frame_rate);
            r.attention.emplace_back(a.layer_id, rel);
        }
        r.vad = "vad/" + u.id + ".bin";
        Mat vad(u.vad.voiced.size(), 1);
        for (std::size_t t = 0; t < u.vad.voiced.size(); ++t)
            vad(static_cast<long>(t), 0) = u.vad.voiced[t] ? 1.0 : 0.0;
        write_frame_file((fs::path(out_dir) / r.vad).string(), vad, u.features.frame_rate);
        r.image = "img/" + u.id + ".bin";
        write_image_file((fs::path(out_dir) / r.image).string(), u.image);
        if (u.oracle_segmentation) {
            r.oracle_segmentation = "seg/" + u.id + ".json";
            write_segmentation_file((fs::path(out_dir) / *r.oracle_segmentation).string(),
                                    *u.oracle_segmentation);
        }
        if (u.ref_tree) {
            r.ref_tree = "tree/" + u.id + ".tree";
            write_ref_tree_file((fs::path(out_dir) / *r.ref_tree).string(), *u.ref_tree);
        }
        manifest.records.push_back(std::move(r));
    }
    std::string mpath = (fs::path(out_dir) / "manifest.jsonl").string();
    manifest.save(mpath);
    return mpath;
}

} // namespace avnsl
