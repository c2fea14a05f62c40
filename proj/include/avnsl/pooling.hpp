#ifndef AVNSL_POOLING_HPP
#define AVNSL_POOLING_HPP

#include "avnsl/grad.hpp"
#include "avnsl/types.hpp"

#include <utility>
#include <vector>

namespace avnsl {

// Frame t belongs to span [a, b) iff its center (t + 0.5) / frame_rate lies in
// [a, b). Returns the contiguous frame range [first, last) for the span.
std::pair<long, long> frames_in_span(const TimeSpan& span, double frame_rate, long t_total);

// Row i = attention weights restricted to segment i, renormalized to sum 1,
// times the segment's frames. A segment with zero total attention falls back
// to its mean (recorded in *mean_fallback when given).
SegmentEmbeddingSeq attention_pool(const FrameMatrix& frames, const AttentionProfile& attention,
                                   const Segmentation& seg,
                                   std::vector<bool>* mean_fallback = nullptr);

// Learned pooling: a single affine layer maps each frame vector to a scalar
// logit; softmax within the segment gives the pooling weights.
struct PoolingParams {
    Tensor W; // 1 x D
    Tensor b; // 1 x 1

    static PoolingParams init(long d, Rng& rng);
    std::vector<Tensor*> params();
};

SegmentEmbeddingSeq mlp_attention_pool(const FrameMatrix& frames, const Segmentation& seg,
                                       const PoolingParams& params);

// Differentiable variant: one pooled vector per segment on the tape.
std::vector<Var> mlp_attention_pool(Tape& tape, const FrameMatrix& frames,
                                    const Segmentation& seg, PoolingParams& params);

SegmentEmbeddingSeq mean_pool(const FrameMatrix& frames, const Segmentation& seg);

} // namespace avnsl

#endif
