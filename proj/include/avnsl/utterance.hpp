#ifndef AVNSL_UTTERANCE_HPP
#define AVNSL_UTTERANCE_HPP

#include "avnsl/tree.hpp"
#include "avnsl/types.hpp"

#include <optional>
#include <string>
#include <vector>

namespace avnsl {

// One corpus item. Every per-frame structure shares T with `features`.
struct Utterance {
    std::string id;
    FrameMatrix features;
    std::vector<AttentionProfile> attention; // one or more layers
    VadMask vad;
    std::optional<Segmentation> oracle_segmentation;
    ImageEmbedding image;
    std::optional<LabeledRefTree> ref_tree;

    double duration() const { return static_cast<double>(features.t()) / features.frame_rate; }
    const AttentionProfile& attention_layer(int layer_id) const;
    void validate() const;
};

} // namespace avnsl

#endif
