#ifndef AVNSL_SEGMENTER_HPP
#define AVNSL_SEGMENTER_HPP

#include "avnsl/types.hpp"

namespace avnsl {

// Retains the minimal set of highest-attention frames whose weight sum reaches
// p% of the total (ties at the cut keep the lowest frame indices), then turns
// maximal runs of retained frames into spans. All-zero attention yields an
// empty segmentation with a warning.
Segmentation threshold_segment(const AttentionProfile& attention, double p, double frame_rate);

// For each gap between consecutive spans (and before the first / after the
// last, with the utterance end taken from the VAD length) whose voiced portion
// exceeds `s` seconds, inserts one span of length min(insert_len, voiced
// portion), centered on the gap's longest voiced run and clamped into the gap.
Segmentation insert_segments(const Segmentation& seg, const VadMask& vad, double frame_rate,
                             double s, double insert_len);

// n equal contiguous spans partitioning [0, duration].
Segmentation uniform_segmentation(int n_words, double duration);

struct BoundaryPrf {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

// Span endpoints become boundary points (deduplicated within `tol`); each
// reference boundary greedily matches its nearest unused hypothesis boundary
// within `tol`. 0/0 ratios are 0.
BoundaryPrf boundary_prf(const Segmentation& hyp, const Segmentation& ref, double tol = 0.02);

} // namespace avnsl

#endif
