#ifndef AVNSL_GROUNDING_HPP
#define AVNSL_GROUNDING_HPP

#include "avnsl/grad.hpp"
#include "avnsl/types.hpp"

#include <vector>

namespace avnsl {

// Affine map into the joint space followed by L2 normalization.
Vec project_span(const Vec& span_embedding, const JointSpaceParams& params);
Vec project_image(const Vec& image_embedding, const JointSpaceParams& params);

// cos(a, b) with defensive normalization; throws on a zero-norm argument.
double cosine(const Vec& a, const Vec& b);

// One item's hinge loss against its imposters, all vectors already in the
// joint space: sum_c' [cos(i,c') - cos(i,c) + d]+ + sum_i' [cos(i',c) - cos(i,c) + d]+.
double triplet_item_loss(const Vec& c, const Vec& i, const std::vector<Vec>& imposter_spans,
                         const std::vector<Vec>& imposter_images, double delta);

// Additive inverse of the hinge arguments above, as a reward:
// sum_c' [cos(i,c) - cos(i,c') - d]+ + sum_i' [cos(i,c) - cos(i',c) - d]+.
// Plain value, no gradients.
double concreteness(const Vec& c, const Vec& i, const std::vector<Vec>& imposter_spans,
                    const std::vector<Vec>& imposter_images, double delta);

// Trainable joint space (speech and image projections plus the margin).
class GroundingModel {
public:
    GroundingModel() = default;
    GroundingModel(long d_emb, long d_img, long d_joint, double margin, Rng& rng);

    Var project_span(Tape& tape, Var span);
    Var project_image(Tape& tape, Var image);
    Vec project_span(const Vec& span) const;
    Vec project_image(const Vec& image) const;

    JointSpaceParams snapshot() const;
    void load(const JointSpaceParams& p);
    std::vector<Tensor*> params();
    double margin() const { return margin_; }

private:
    Tensor speech_w_, speech_b_, image_w_, image_b_;
    double margin_ = 0.2;
};

// Batch triplet loss with in-batch imposters; spans enter pre-projection as
// tape vars (gradients reach both the projections and the span embeddings),
// images as constants. Items sharing a group id are never each other's
// imposters (constituents of one utterance all pair with the same image); an
// empty `groups` means every item is its own group.
Var triplet_loss(Tape& tape, GroundingModel& model, const std::vector<Var>& span_embeddings,
                 const std::vector<Vec>& images, const std::vector<int>& groups = {});

// Value-only counterpart over fixed parameters.
double triplet_loss_value(const JointSpaceParams& params, const std::vector<Vec>& span_embeddings,
                          const std::vector<Vec>& images, const std::vector<int>& groups = {});

} // namespace avnsl

#endif
