#ifndef AVNSL_GRAD_HPP
#define AVNSL_GRAD_HPP

#include "avnsl/rng.hpp"
#include "avnsl/types.hpp"

#include <functional>
#include <string>
#include <vector>

namespace avnsl {

// Trainable tensor: value, gradient accumulator, momentum buffer. Biases are
// stored as n x 1 matrices.
struct Tensor {
    Mat v;
    Mat g;
    Mat m;

    Tensor() = default;
    Tensor(long rows, long cols)
        : v(Mat::Zero(rows, cols)), g(Mat::Zero(rows, cols)), m(Mat::Zero(rows, cols)) {}

    void zero_grad() { g.setZero(); }
    long size() const { return v.size(); }
};

Tensor xavier_init(long rows, long cols, Rng& rng);

// Reverse-mode tape over vector values. Scalars are 1-dimensional vectors.
// Nodes form a DAG by construction (inputs always have smaller ids), so one
// reverse sweep from a root propagates gradients into Tensor::g.
class Tape {
public:
    struct Var {
        int id = -1;
    };

    Var input(const Vec& v);
    Var input(double s);

    const Vec& val(Var x) const { return nodes_[x.id].val; }
    double sval(Var x) const { return nodes_[x.id].val[0]; }

    // W.v * x + b.v.col(0)
    Var affine(Tensor& W, Tensor& b, Var x);
    Var gelu(Var x);
    Var concat(Var a, Var b);
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var scale(Var a, double k);
    Var add_const(Var a, double c);
    // x / ||x||; throws on (near-)zero norm.
    Var l2_normalize(Var x);
    Var dot(Var a, Var b);
    // Elementwise max(0, x); subgradient 0 at the kink.
    Var hinge(Var x);
    Var sum(const std::vector<Var>& xs);
    // sum_t softmax(logits)_t * frames.row(t); frames are constants.
    Var softmax_pool(const Mat& frames, Var logits);
    // scores[pick] - logsumexp(scores); each score is scalar.
    Var log_softmax_pick(const std::vector<Var>& scores, int pick);

    // Softmax over the scalar scores (values only, no node created).
    std::vector<double> softmax_values(const std::vector<Var>& scores) const;

    // Accumulates into every reachable Tensor::g. May be called for several
    // roots; call clear_grads() between backward passes that must not mix.
    void backward(Var root);
    void clear_grads();

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Vec val;
        Vec grad; // lazily allocated
        std::function<void(Tape&, const Vec&)> back;
    };

    std::vector<Node> nodes_;

    Var make(Vec val, std::function<void(Tape&, const Vec&)> back = nullptr);
    void accum(int id, const Vec& g);

    friend struct TapeTestAccess;
};

using Var = Tape::Var;

double gelu_value(double x);
double gelu_derivative(double x);

// A GELU-activated MLP; the last layer is affine with no activation.
class Mlp {
public:
    Mlp() = default;
    // sizes = {in, hidden..., out}
    Mlp(const std::vector<long>& sizes, Rng& rng);

    Var forward(Tape& t, Var x);
    Vec forward(const Vec& x) const;

    std::vector<Tensor*> params();
    std::vector<const Tensor*> params() const;

    long in_dim() const { return layers_.empty() ? 0 : layers_.front().W.v.cols(); }
    long out_dim() const { return layers_.empty() ? 0 : layers_.back().W.v.rows(); }

    struct Layer {
        Tensor W;
        Tensor b;
    };
    std::vector<Layer>& layers() { return layers_; }
    const std::vector<Layer>& layers() const { return layers_; }

private:
    std::vector<Layer> layers_;
};

// Plain SGD with momentum; zeroes gradients after applying them.
struct SgdMomentum {
    double lr = 1e-3;
    double mu = 0.9;

    void step(const std::vector<Tensor*>& params) const;
};

} // namespace avnsl

#endif
