#include "avnsl/grad.hpp"

#include <cmath>
#include <stdexcept>

namespace avnsl {

Tensor xavier_init(long rows, long cols, Rng& rng) {
    Tensor t(rows, cols);
    double scale = std::sqrt(2.0 / static_cast<double>(rows + cols));
    for (long j = 0; j < cols; ++j)
        for (long i = 0; i < rows; ++i) t.v(i, j) = scale * rng.normal();
    return t;
}

double gelu_value(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }

double gelu_derivative(double x) {
    double cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
    double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
    return cdf + x * pdf;
}

Var Tape::make(Vec val, std::function<void(Tape&, const Vec&)> back) {
    nodes_.push_back(Node{std::move(val), Vec(), std::move(back)});
    return Var{static_cast<int>(nodes_.size()) - 1};
}

void Tape::accum(int id, const Vec& g) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0)
        n.grad = g;
    else
        n.grad += g;
}

Var Tape::input(const Vec& v) { return make(v); }

Var Tape::input(double s) {
    Vec v(1);
    v[0] = s;
    return make(std::move(v));
}

Var Tape::affine(Tensor& W, Tensor& b, Var x) {
    Vec out = W.v * nodes_[x.id].val + b.v.col(0);
    int xid = x.id;
    Tensor* pw = &W;
    Tensor* pb = &b;
    return make(std::move(out), [xid, pw, pb](Tape& t, const Vec& go) {
        pw->g += go * t.nodes_[xid].val.transpose();
        pb->g.col(0) += go;
        t.accum(xid, pw->v.transpose() * go);
    });
}

Var Tape::gelu(Var x) {
    const Vec& v = nodes_[x.id].val;
    Vec out(v.size());
    for (long i = 0; i < v.size(); ++i) out[i] = gelu_value(v[i]);
    int xid = x.id;
    return make(std::move(out), [xid](Tape& t, const Vec& go) {
        const Vec& v = t.nodes_[xid].val;
        Vec gx(v.size());
        for (long i = 0; i < v.size(); ++i) gx[i] = go[i] * gelu_derivative(v[i]);
        t.accum(xid, gx);
    });
}

Var Tape::concat(Var a, Var b) {
    const Vec& va = nodes_[a.id].val;
    const Vec& vb = nodes_[b.id].val;
    Vec out(va.size() + vb.size());
    out << va, vb;
    int aid = a.id, bid = b.id;
    long na = va.size();
    return make(std::move(out), [aid, bid, na](Tape& t, const Vec& go) {
        t.accum(aid, go.head(na));
        t.accum(bid, go.tail(go.size() - na));
    });
}

Var Tape::add(Var a, Var b) {
    Vec out = nodes_[a.id].val + nodes_[b.id].val;
    int aid = a.id, bid = b.id;
    return make(std::move(out), [aid, bid](Tape& t, const Vec& go) {
        t.accum(aid, go);
        t.accum(bid, go);
    });
}

Var Tape::sub(Var a, Var b) {
    Vec out = nodes_[a.id].val - nodes_[b.id].val;
    int aid = a.id, bid = b.id;
    return make(std::move(out), [aid, bid](Tape& t, const Vec& go) {
        t.accum(aid, go);
        t.accum(bid, -go);
    });
}

Var Tape::scale(Var a, double k) {
    Vec out = nodes_[a.id].val * k;
    int aid = a.id;
    return make(std::move(out),
                [aid, k](Tape& t, const Vec& go) { t.accum(aid, Vec(go * k)); });
}

Var Tape::add_const(Var a, double c) {
    Vec out = nodes_[a.id].val.array() + c;
    int aid = a.id;
    return make(std::move(out), [aid](Tape& t, const Vec& go) { t.accum(aid, go); });
}

Var Tape::l2_normalize(Var x) {
    const Vec& v = nodes_[x.id].val;
    double n = v.norm();
    if (n < 1e-12) throw std::domain_error("l2_normalize: zero-norm vector");
    Vec out = v / n;
    int xid = x.id;
    return make(std::move(out), [xid, n](Tape& t, const Vec& go) {
        const Vec& v = t.nodes_[xid].val;
        Vec y = v / n;
        t.accum(xid, Vec((go - y * y.dot(go)) / n));
    });
}

Var Tape::dot(Var a, Var b) {
    Vec out(1);
    out[0] = nodes_[a.id].val.dot(nodes_[b.id].val);
    int aid = a.id, bid = b.id;
    return make(std::move(out), [aid, bid](Tape& t, const Vec& go) {
        t.accum(aid, Vec(t.nodes_[bid].val * go[0]));
        t.accum(bid, Vec(t.nodes_[aid].val * go[0]));
    });
}

Var Tape::hinge(Var x) {
    const Vec& v = nodes_[x.id].val;
    Vec out = v.cwiseMax(0.0);
    int xid = x.id;
    return make(std::move(out), [xid](Tape& t, const Vec& go) {
        const Vec& v = t.nodes_[xid].val;
        Vec gx(v.size());
        for (long i = 0; i < v.size(); ++i) gx[i] = v[i] > 0.0 ? go[i] : 0.0;
        t.accum(xid, gx);
    });
}

Var Tape::sum(const std::vector<Var>& xs) {
    if (xs.empty()) return input(0.0);
    Vec out = nodes_[xs[0].id].val;
    for (std::size_t i = 1; i < xs.size(); ++i) out += nodes_[xs[i].id].val;
    std::vector<int> ids;
    ids.reserve(xs.size());
    for (Var x : xs) ids.push_back(x.id);
    return make(std::move(out), [ids](Tape& t, const Vec& go) {
        for (int id : ids) t.accum(id, go);
    });
}

Var Tape::softmax_pool(const Mat& frames, Var logits) {
    const Vec& l = nodes_[logits.id].val;
    if (frames.rows() != l.size())
        throw std::invalid_argument("softmax_pool: frame/logit count mismatch");
    Vec p = (l.array() - l.maxCoeff()).exp();
    p /= p.sum();
    Vec out = frames.transpose() * p;
    int lid = logits.id;
    Mat fr = frames;
    Vec pooled = out;
    return make(std::move(out), [lid, fr, p, pooled](Tape& t, const Vec& go) {
        Vec gl(p.size());
        for (long i = 0; i < p.size(); ++i)
            gl[i] = p[i] * (fr.row(i).transpose() - pooled).dot(go);
        t.accum(lid, gl);
    });
}

Var Tape::log_softmax_pick(const std::vector<Var>& scores, int pick) {
    if (pick < 0 || static_cast<std::size_t>(pick) >= scores.size())
        throw std::out_of_range("log_softmax_pick: pick out of range");
    std::vector<double> s(scores.size());
    double mx = -1e300;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        s[i] = sval(scores[i]);
        mx = std::max(mx, s[i]);
    }
    double lse = 0.0;
    for (double v : s) lse += std::exp(v - mx);
    lse = mx + std::log(lse);
    Vec out(1);
    out[0] = s[pick] - lse;
    std::vector<int> ids;
    ids.reserve(scores.size());
    for (Var v : scores) ids.push_back(v.id);
    std::vector<double> soft(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) soft[i] = std::exp(s[i] - lse);
    return make(std::move(out), [ids, soft, pick](Tape& t, const Vec& go) {
        for (std::size_t i = 0; i < ids.size(); ++i) {
            Vec g(1);
            g[0] = go[0] * ((static_cast<int>(i) == pick ? 1.0 : 0.0) - soft[i]);
            t.accum(ids[i], g);
        }
    });
}

std::vector<double> Tape::softmax_values(const std::vector<Var>& scores) const {
    std::vector<double> s(scores.size());
    double mx = -1e300;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        s[i] = sval(scores[i]);
        mx = std::max(mx, s[i]);
    }
    double z = 0.0;
    for (double& v : s) {
        v = std::exp(v - mx);
        z += v;
    }
    for (double& v : s) v /= z;
    return s;
}

void Tape::backward(Var root) {
    Node& r = nodes_[root.id];
    if (r.val.size() != 1) throw std::invalid_argument("backward: root must be scalar");
    if (r.grad.size() == 0) r.grad = Vec::Zero(1);
    r.grad[0] += 1.0;
    for (int i = root.id; i >= 0; --i) {
        Node& n = nodes_[i];
        if (n.grad.size() == 0 || !n.back) continue;
        Vec g = std::move(n.grad);
        n.grad.resize(0); // consume, so a later backward() does not re-propagate
        n.back(*this, g);
    }
}

void Tape::clear_grads() {
    for (Node& n : nodes_) n.grad.resize(0);
}

Mlp::Mlp(const std::vector<long>& sizes, Rng& rng) {
    if (sizes.size() < 2) throw std::invalid_argument("Mlp: need at least in and out sizes");
    for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
        Layer l;
        l.W = xavier_init(sizes[i + 1], sizes[i], rng);
        l.b = Tensor(sizes[i + 1], 1);
        layers_.push_back(std::move(l));
    }
}

Var Mlp::forward(Tape& t, Var x) {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        x = t.affine(layers_[i].W, layers_[i].b, x);
        if (i + 1 < layers_.size()) x = t.gelu(x);
    }
    return x;
}

Vec Mlp::forward(const Vec& x) const {
    Vec h = x;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        h = layers_[i].W.v * h + layers_[i].b.v.col(0);
        if (i + 1 < layers_.size())
            for (long j = 0; j < h.size(); ++j) h[j] = gelu_value(h[j]);
    }
    return h;
}

std::vector<Tensor*> Mlp::params() {
    std::vector<Tensor*> out;
    for (auto& l : layers_) {
        out.push_back(&l.W);
        out.push_back(&l.b);
    }
    return out;
}

std::vector<const Tensor*> Mlp::params() const {
    std::vector<const Tensor*> out;
    for (const auto& l : layers_) {
        out.push_back(&l.W);
        out.push_back(&l.b);
    }
    return out;
}

void SgdMomentum::step(const std::vector<Tensor*>& params) const {
    for (Tensor* p : params) {
        p->m = mu * p->m + p->g;
        p->v -= lr * p->m;
        p->g.setZero();
    }
}

} // namespace avnsl
