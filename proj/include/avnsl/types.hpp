#ifndef AVNSL_TYPES_HPP
#define AVNSL_TYPES_HPP

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace avnsl {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Half-open time interval in seconds. start < end always.
struct TimeSpan {
    double start = 0.0;
    double end = 0.0;

    TimeSpan() = default;
    TimeSpan(double s, double e) : start(s), end(e) {
        if (!(s < e)) throw std::invalid_argument("TimeSpan: start must be < end");
        if (s < 0.0) throw std::invalid_argument("TimeSpan: negative start");
    }
    double duration() const { return end - start; }

    bool operator==(const TimeSpan& o) const { return start == o.start && end == o.end; }
};

double span_overlap(const TimeSpan& a, const TimeSpan& b);
double span_iou(const TimeSpan& a, const TimeSpan& b);
// Smallest span containing both.
TimeSpan span_hull(const TimeSpan& a, const TimeSpan& b);

// T x D frame-level features plus the rate that maps rows to time.
struct FrameMatrix {
    Mat frames;              // T x D
    double frame_rate = 0.0; // frames per second

    long t() const { return frames.rows(); }
    long d() const { return frames.cols(); }
    void validate() const;
};

// Per-frame saliency from one encoder layer.
struct AttentionProfile {
    int layer_id = 0;
    Vec weights; // length T, non-negative

    void validate(long expected_t) const;
};

struct VadMask {
    std::vector<bool> voiced; // length T

    void validate(long expected_t) const;
};

// Ordered, non-overlapping spans over an utterance timeline.
struct Segmentation {
    std::vector<TimeSpan> spans;

    std::size_t size() const { return spans.size(); }
    bool empty() const { return spans.empty(); }
    void validate() const;

    bool operator==(const Segmentation& o) const { return spans == o.spans; }
};

// One embedding row per segment.
struct SegmentEmbeddingSeq {
    Mat vectors; // N x D

    long n() const { return vectors.rows(); }
    long d() const { return vectors.cols(); }
    Vec row(long i) const { return vectors.row(i).transpose(); }
};

struct ImageEmbedding {
    Vec vector;

    void validate() const;
};

// Phi: affine projections into the joint space, one per modality, plus the margin.
struct JointSpaceParams {
    Mat speech_w; // D_joint x D_emb
    Vec speech_b; // D_joint
    Mat image_w;  // D_joint x D_img
    Vec image_b;  // D_joint
    double margin = 0.2;

    long joint_dim() const { return speech_w.rows(); }
    void validate() const;
};

// Training-time hyperparameters. All stochastic behaviour keys off `seed`.
struct HyperParams {
    int layer = 0;              // segmentation attention layer l
    double p = 90.0;            // attention threshold, percent of total magnitude
    double gap_s = 0.10;        // minimum voiced gap that triggers insertion (seconds)
    double insert_len = 0.06;   // inserted segment length (seconds)
    double margin = 0.2;        // triplet margin delta
    double lr_parser = 1e-3;
    double lr_grounding = 1e-3;
    int score_hidden = 128;     // width of score MLP hidden layers
    int score_depth = 2;        // number of hidden layers in score MLP
    int combine_hidden = 256;   // width of combine MLP hidden layer
    int joint_dim = 0;          // 0 = same as embedding dim
    std::uint64_t seed = 1;
    int steps = 2000;
    int batch_size = 8;
    double ema_decay = 0.99;
    double momentum = 0.9;
    std::string combine_mode = "vgnsl"; // "vgnsl" | "mlp"
    std::string score_input = "concat"; // "concat" | "right"
    std::string pooling = "attention";  // "attention" | "mlp" | "mean"
    int checkpoint_every = 0;           // 0 = final only

    void validate() const;
};

} // namespace avnsl

#endif
