#include "avnsl/grounding.hpp"

#include <cmath>
#include <stdexcept>

namespace avnsl {

namespace {

Vec affine_normalize(const Vec& x, const Mat& w, const Vec& b) {
    if (x.size() != w.cols())
        throw std::invalid_argument("projection: input dimension " + std::to_string(x.size()) +
                                    " does not match " + std::to_string(w.cols()));
    Vec y = w * x + b;
    double n = y.norm();
    if (n < 1e-12) throw std::domain_error("projection: zero-norm vector before normalization");
    return y / n;
}

} // namespace

Vec project_span(const Vec& span_embedding, const JointSpaceParams& params) {
    return affine_normalize(span_embedding, params.speech_w, params.speech_b);
}

Vec project_image(const Vec& image_embedding, const JointSpaceParams& params) {
    return affine_normalize(image_embedding, params.image_w, params.image_b);
}

double cosine(const Vec& a, const Vec& b) {
    double na = a.norm(), nb = b.norm();
    if (na < 1e-12 || nb < 1e-12) throw std::domain_error("cosine: zero-norm argument");
    return a.dot(b) / (na * nb);
}

double triplet_item_loss(const Vec& c, const Vec& i, const std::vector<Vec>& imposter_spans,
                         const std::vector<Vec>& imposter_images, double delta) {
    double pos = cosine(i, c);
    double loss = 0.0;
    for (const Vec& cp : imposter_spans) loss += std::max(0.0, cosine(i, cp) - pos + delta);
    for (const Vec& ip : imposter_images) loss += std::max(0.0, cosine(ip, c) - pos + delta);
    return loss;
}

double concreteness(const Vec& c, const Vec& i, const std::vector<Vec>& imposter_spans,
                    const std::vector<Vec>& imposter_images, double delta) {
    if (imposter_spans.empty() || imposter_images.empty())
        throw std::invalid_argument("concreteness: need at least one imposter of each kind");
    double pos = cosine(i, c);
    double r = 0.0;
    for (const Vec& cp : imposter_spans) r += std::max(0.0, pos - cosine(i, cp) - delta);
    for (const Vec& ip : imposter_images) r += std::max(0.0, pos - cosine(ip, c) - delta);
    return r;
}

GroundingModel::GroundingModel(long d_emb, long d_img, long d_joint, double margin, Rng& rng)
    : speech_w_(xavier_init(d_joint, d_emb, rng)),
      speech_b_(d_joint, 1),
      image_w_(xavier_init(d_joint, d_img, rng)),
      image_b_(d_joint, 1),
      margin_(margin) {
    if (margin <= 0.0) throw std::invalid_argument("GroundingModel: margin must be > 0");
}

Var GroundingModel::project_span(Tape& tape, Var span) {
    return tape.l2_normalize(tape.affine(speech_w_, speech_b_, span));
}

Var GroundingModel::project_image(Tape& tape, Var image) {
    return tape.l2_normalize(tape.affine(image_w_, image_b_, image));
}

Vec GroundingModel::project_span(const Vec& span) const {
    return affine_normalize(span, speech_w_.v, speech_b_.v.col(0));
}

Vec GroundingModel::project_image(const Vec& image) const {
    return affine_normalize(image, image_w_.v, image_b_.v.col(0));
}

JointSpaceParams GroundingModel::snapshot() const {
    JointSpaceParams p;
    p.speech_w = speech_w_.v;
    p.speech_b = speech_b_.v.col(0);
    p.image_w = image_w_.v;
    p.image_b = image_b_.v.col(0);
    p.margin = margin_;
    return p;
}

void GroundingModel::load(const JointSpaceParams& p) {
    p.validate();
    speech_w_ = Tensor(p.speech_w.rows(), p.speech_w.cols());
    speech_w_.v = p.speech_w;
    speech_b_ = Tensor(p.speech_b.size(), 1);
    speech_b_.v.col(0) = p.speech_b;
    image_w_ = Tensor(p.image_w.rows(), p.image_w.cols());
    image_w_.v = p.image_w;
    image_b_ = Tensor(p.image_b.size(), 1);
    image_b_.v.col(0) = p.image_b;
    margin_ = p.margin;
}

std::vector<Tensor*> GroundingModel::params() {
    return {&speech_w_, &speech_b_, &image_w_, &image_b_};
}

namespace {

std::vector<int> effective_groups(std::size_t n, const std::vector<int>& groups) {
    if (groups.empty()) {
        std::vector<int> g(n);
        for (std::size_t k = 0; k < n; ++k) g[k] = static_cast<int>(k);
        return g;
    }
    if (groups.size() != n)
        throw std::invalid_argument("triplet_loss: group count does not match batch size");
    return groups;
}

void require_two_groups(const std::vector<int>& g) {
    for (std::size_t k = 1; k < g.size(); ++k)
        if (g[k] != g[0]) return;
    throw std::invalid_argument("triplet_loss: batch must span >= 2 groups (imposters exist)");
}

} // namespace

Var triplet_loss(Tape& tape, GroundingModel& model, const std::vector<Var>& span_embeddings,
                 const std::vector<Vec>& images, const std::vector<int>& groups) {
    if (span_embeddings.size() != images.size())
        throw std::invalid_argument("triplet_loss: span/image count mismatch");
    std::size_t n = span_embeddings.size();
    if (n < 2) throw std::invalid_argument("triplet_loss: batch must have >= 2 items");
    std::vector<int> g = effective_groups(n, groups);
    require_two_groups(g);
    double delta = model.margin();

    std::vector<Var> c(n), im(n);
    for (std::size_t k = 0; k < n; ++k) {
        c[k] = model.project_span(tape, span_embeddings[k]);
        im[k] = model.project_image(tape, tape.input(images[k]));
    }
    std::vector<Var> terms;
    for (std::size_t k = 0; k < n; ++k) {
        Var pos = tape.dot(im[k], c[k]);
        for (std::size_t j = 0; j < n; ++j) {
            if (g[j] == g[k]) continue;
            terms.push_back(tape.hinge(tape.add_const(tape.sub(tape.dot(im[k], c[j]), pos), delta)));
            terms.push_back(tape.hinge(tape.add_const(tape.sub(tape.dot(im[j], c[k]), pos), delta)));
        }
    }
    return tape.sum(terms);
}

double triplet_loss_value(const JointSpaceParams& params, const std::vector<Vec>& span_embeddings,
                          const std::vector<Vec>& images, const std::vector<int>& groups) {
    if (span_embeddings.size() != images.size())
        throw std::invalid_argument("triplet_loss_value: span/image count mismatch");
    std::size_t n = span_embeddings.size();
    if (n < 2) throw std::invalid_argument("triplet_loss_value: batch must have >= 2 items");
    std::vector<int> g = effective_groups(n, groups);
    require_two_groups(g);
    std::vector<Vec> c(n), im(n);
    for (std::size_t k = 0; k < n; ++k) {
        c[k] = project_span(span_embeddings[k], params);
        im[k] = project_image(images[k], params);
    }
    double loss = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        std::vector<Vec> imp_c, imp_i;
        for (std::size_t j = 0; j < n; ++j) {
            if (g[j] == g[k]) continue;
            imp_c.push_back(c[j]);
            imp_i.push_back(im[j]);
        }
        loss += triplet_item_loss(c[k], im[k], imp_c, imp_i, params.margin);
    }
    return loss;
}

} // namespace avnsl
