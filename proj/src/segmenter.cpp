#include "avnsl/segmenter.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace avnsl {

Segmentation threshold_segment(const AttentionProfile& attention, double p, double frame_rate) {
    if (p <= 0.0 || p > 100.0)
        throw std::invalid_argument("threshold_segment: p must be in (0, 100]");
    if (frame_rate <= 0.0) throw std::invalid_argument("threshold_segment: frame_rate <= 0");
    const Vec& w = attention.weights;
    long t = w.size();
    for (long i = 0; i < t; ++i)
        if (w[i] < 0.0) throw std::invalid_argument("threshold_segment: negative attention weight");
    double total = w.sum();
    if (total <= 0.0) {
        std::cerr << "warning: all-zero attention profile, returning empty segmentation\n";
        return {};
    }

    std::vector<long> order(t);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](long a, long b) { return w[a] > w[b]; });

    double target = total * (p / 100.0);
    std::vector<bool> keep(t, false);
    double acc = 0.0;
    for (long i = 0; i < t && acc < target; ++i) {
        keep[order[i]] = true;
        acc += w[order[i]];
    }

    Segmentation seg;
    long run_start = -1;
    for (long i = 0; i <= t; ++i) {
        bool k = i < t && keep[i];
        if (k && run_start < 0) run_start = i;
        if (!k && run_start >= 0) {
            seg.spans.emplace_back(static_cast<double>(run_start) / frame_rate,
                                   static_cast<double>(i) / frame_rate);
            run_start = -1;
        }
    }
    seg.validate();
    return seg;
}

namespace {

struct Gap {
    double start;
    double end;
};

// Voiced sub-intervals of [gap.start, gap.end) on the frame grid, clipped.
std::vector<Gap> voiced_runs(const Gap& gap, const VadMask& vad, double frame_rate) {
    std::vector<Gap> runs;
    long t0 = static_cast<long>(std::floor(gap.start * frame_rate));
    long t1 = static_cast<long>(std::ceil(gap.end * frame_rate));
    t0 = std::max<long>(t0, 0);
    t1 = std::min<long>(t1, static_cast<long>(vad.voiced.size()));
    for (long t = t0; t < t1; ++t) {
        double a = std::max(gap.start, static_cast<double>(t) / frame_rate);
        double b = std::min(gap.end, static_cast<double>(t + 1) / frame_rate);
        if (b <= a || !vad.voiced[t]) continue;
        if (!runs.empty() && runs.back().end >= a - 1e-12)
            runs.back().end = b;
        else
            runs.push_back({a, b});
    }
    return runs;
}

} // namespace

Segmentation insert_segments(const Segmentation& seg, const VadMask& vad, double frame_rate,
                             double s, double insert_len) {
    seg.validate();
    if (frame_rate <= 0.0) throw std::invalid_argument("insert_segments: frame_rate <= 0");
    if (s <= 0.0) throw std::invalid_argument("insert_segments: s <= 0");
    if (insert_len <= 0.0) throw std::invalid_argument("insert_segments: insert_len <= 0");

    double end_time = static_cast<double>(vad.voiced.size()) / frame_rate;
    std::vector<Gap> gaps;
    double cursor = 0.0;
    for (const TimeSpan& sp : seg.spans) {
        if (sp.start > cursor) gaps.push_back({cursor, sp.start});
        cursor = sp.end;
    }
    if (end_time > cursor) gaps.push_back({cursor, end_time});

    Segmentation out = seg;
    for (const Gap& g : gaps) {
        std::vector<Gap> runs = voiced_runs(g, vad, frame_rate);
        double voiced_len = 0.0;
        const Gap* longest = nullptr;
        for (const Gap& r : runs) {
            double len = r.end - r.start;
            voiced_len += len;
            if (!longest || len > longest->end - longest->start) longest = &r;
        }
        if (voiced_len <= s || !longest) continue;
        double len = std::min(insert_len, voiced_len);
        double center = 0.5 * (longest->start + longest->end);
        double a = center - 0.5 * len;
        if (a < g.start) a = g.start;
        if (a + len > g.end) a = g.end - len;
        out.spans.emplace_back(a, a + len);
    }
    std::sort(out.spans.begin(), out.spans.end(),
              [](const TimeSpan& a, const TimeSpan& b) { return a.start < b.start; });
    out.validate();
    return out;
}

Segmentation uniform_segmentation(int n_words, double duration) {
    if (n_words < 1) throw std::invalid_argument("uniform_segmentation: n_words < 1");
    if (duration <= 0.0) throw std::invalid_argument("uniform_segmentation: duration <= 0");
    Segmentation seg;
    for (int k = 0; k < n_words; ++k) {
        double a = duration * static_cast<double>(k) / n_words;
        double b = k + 1 == n_words ? duration : duration * static_cast<double>(k + 1) / n_words;
        seg.spans.emplace_back(a, b);
    }
    seg.validate();
    return seg;
}

namespace {

// Endpoint values, sorted, with values within `tol` of a cluster's first
// element collapsed onto that element.
std::vector<double> boundary_points(const Segmentation& seg, double tol) {
    std::vector<double> pts;
    for (const TimeSpan& sp : seg.spans) {
        pts.push_back(sp.start);
        pts.push_back(sp.end);
    }
    std::sort(pts.begin(), pts.end());
    std::vector<double> out;
    for (double p : pts)
        if (out.empty() || p > out.back() + tol) out.push_back(p);
    return out;
}

} // namespace

BoundaryPrf boundary_prf(const Segmentation& hyp, const Segmentation& ref, double tol) {
    if (tol < 0.0) throw std::invalid_argument("boundary_prf: negative tol");
    std::vector<double> h = boundary_points(hyp, tol);
    std::vector<double> r = boundary_points(ref, tol);

    std::vector<bool> used(h.size(), false);
    int matches = 0;
    for (double rb : r) {
        long best = -1;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < h.size(); ++i) {
            if (used[i]) continue;
            double d = std::abs(h[i] - rb);
            if (d <= tol && d < best_d) {
                best = static_cast<long>(i);
                best_d = d;
            }
        }
        if (best >= 0) {
            used[best] = true;
            ++matches;
        }
    }
    BoundaryPrf out;
    out.precision = h.empty() ? 0.0 : static_cast<double>(matches) / static_cast<double>(h.size());
    out.recall = r.empty() ? 0.0 : static_cast<double>(matches) / static_cast<double>(r.size());
    out.f1 = out.precision + out.recall == 0.0
                 ? 0.0
                 : 2.0 * out.precision * out.recall / (out.precision + out.recall);
    return out;
}

} // namespace avnsl
