#include "avnsl/pooling.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace avnsl {

std::pair<long, long> frames_in_span(const TimeSpan& span, double frame_rate, long t_total) {
    // Smallest t with (t + 0.5) / rate >= start, first t with center >= end.
    long first = static_cast<long>(std::ceil(span.start * frame_rate - 0.5));
    long last = static_cast<long>(std::ceil(span.end * frame_rate - 0.5));
    first = std::max<long>(first, 0);
    last = std::min(last, t_total);
    if (last < first) last = first;
    return {first, last};
}

namespace {

std::pair<long, long> span_frames_checked(const TimeSpan& span, double frame_rate, long t_total,
                                          std::size_t seg_index) {
    auto [a, b] = frames_in_span(span, frame_rate, t_total);
    if (b <= a)
        throw std::invalid_argument("segment " + std::to_string(seg_index) +
                                    " maps to no frames");
    return {a, b};
}

} // namespace

SegmentEmbeddingSeq attention_pool(const FrameMatrix& frames, const AttentionProfile& attention,
                                   const Segmentation& seg, std::vector<bool>* mean_fallback) {
    frames.validate();
    attention.validate(frames.t());
    seg.validate();
    SegmentEmbeddingSeq out;
    out.vectors.resize(static_cast<long>(seg.size()), frames.d());
    if (mean_fallback) mean_fallback->assign(seg.size(), false);
    for (std::size_t i = 0; i < seg.size(); ++i) {
        auto [a, b] = span_frames_checked(seg.spans[i], frames.frame_rate, frames.t(), i);
        double total = 0.0;
        for (long t = a; t < b; ++t) total += attention.weights[t];
        Vec pooled = Vec::Zero(frames.d());
        if (total > 0.0) {
            for (long t = a; t < b; ++t)
                pooled += (attention.weights[t] / total) * frames.frames.row(t).transpose();
        } else {
            for (long t = a; t < b; ++t) pooled += frames.frames.row(t).transpose();
            pooled /= static_cast<double>(b - a);
            if (mean_fallback) (*mean_fallback)[i] = true;
        }
        out.vectors.row(static_cast<long>(i)) = pooled.transpose();
    }
    return out;
}

PoolingParams PoolingParams::init(long d, Rng& rng) {
    PoolingParams p;
    p.W = xavier_init(1, d, rng);
    p.b = Tensor(1, 1);
    return p;
}

std::vector<Tensor*> PoolingParams::params() { return {&W, &b}; }

SegmentEmbeddingSeq mlp_attention_pool(const FrameMatrix& frames, const Segmentation& seg,
                                       const PoolingParams& params) {
    frames.validate();
    seg.validate();
    SegmentEmbeddingSeq out;
    out.vectors.resize(static_cast<long>(seg.size()), frames.d());
    for (std::size_t i = 0; i < seg.size(); ++i) {
        auto [a, b] = span_frames_checked(seg.spans[i], frames.frame_rate, frames.t(), i);
        Vec logits(b - a);
        for (long t = a; t < b; ++t)
            logits[t - a] = params.W.v.row(0).dot(frames.frames.row(t)) + params.b.v(0, 0);
        Vec p = (logits.array() - logits.maxCoeff()).exp();
        p /= p.sum();
        Vec pooled = Vec::Zero(frames.d());
        for (long t = a; t < b; ++t) pooled += p[t - a] * frames.frames.row(t).transpose();
        out.vectors.row(static_cast<long>(i)) = pooled.transpose();
    }
    return out;
}

std::vector<Var> mlp_attention_pool(Tape& tape, const FrameMatrix& frames,
                                    const Segmentation& seg, PoolingParams& params) {
    frames.validate();
    seg.validate();
    std::vector<Var> out;
    out.reserve(seg.size());
    for (std::size_t i = 0; i < seg.size(); ++i) {
        auto [a, b] = span_frames_checked(seg.spans[i], frames.frame_rate, frames.t(), i);
        std::vector<Var> logit_parts;
        logit_parts.reserve(b - a);
        for (long t = a; t < b; ++t) {
            Var x = tape.input(Vec(frames.frames.row(t).transpose()));
            logit_parts.push_back(tape.affine(params.W, params.b, x));
        }
        Var logits = logit_parts[0];
        for (std::size_t k = 1; k < logit_parts.size(); ++k)
            logits = tape.concat(logits, logit_parts[k]);
        Mat sub = frames.frames.middleRows(a, b - a);
        out.push_back(tape.softmax_pool(sub, logits));
    }
    return out;
}

SegmentEmbeddingSeq mean_pool(const FrameMatrix& frames, const Segmentation& seg) {
    frames.validate();
    seg.validate();
    SegmentEmbeddingSeq out;
    out.vectors.resize(static_cast<long>(seg.size()), frames.d());
    for (std::size_t i = 0; i < seg.size(); ++i) {
        auto [a, b] = span_frames_checked(seg.spans[i], frames.frame_rate, frames.t(), i);
        Vec pooled = Vec::Zero(frames.d());
        for (long t = a; t < b; ++t) pooled += frames.frames.row(t).transpose();
        out.vectors.row(static_cast<long>(i)) = pooled.transpose() / static_cast<double>(b - a);
    }
    return out;
}

} // namespace avnsl
