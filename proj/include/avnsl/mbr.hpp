#ifndef AVNSL_MBR_HPP
#define AVNSL_MBR_HPP

#include "avnsl/tree.hpp"
#include "avnsl/types.hpp"

#include <cstddef>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

namespace avnsl {

// Index of the candidate minimizing the total loss to all candidates (self
// term included); ties go to the lowest index.
template <typename T, typename LossFn>
std::size_t mbr_select(const std::vector<T>& candidates, LossFn&& loss) {
    if (candidates.empty()) throw std::invalid_argument("mbr_select: no candidates");
    std::size_t best = 0;
    double best_total = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        double total = 0.0;
        for (std::size_t j = 0; j < candidates.size(); ++j)
            total += loss(candidates[i], candidates[j]);
        if (total < best_total) {
            best_total = total;
            best = i;
        }
    }
    return best;
}

// One-to-one pairs (index into a, index into b) maximizing total temporal
// overlap; zero-overlap pairs are never returned. Hungarian method on a padded
// square matrix.
std::vector<std::pair<int, int>> max_weight_span_matching(const Segmentation& a,
                                                          const Segmentation& b);

enum class MiouNorm {
    Matched, // mean over matched pairs (the literal reading)
    MaxCount // divide by max(|a|, |b|); penalizes unmatched spans
};

// -mIoU over the maximum-weight matching. Empty input warns and returns 0.
double miou_loss(const Segmentation& a, const Segmentation& b,
                 MiouNorm norm = MiouNorm::Matched);

// 1 - F1 over non-trivial bracket sets; both-empty bracket sets give loss 0.
double tree_f1_loss(const ParseTree& t1, const ParseTree& t2);

using SegLossFn = std::function<double(const Segmentation&, const Segmentation&)>;

struct TwoStageResult {
    std::vector<int> stage1_tally;         // per grid entry: validation wins
    std::vector<std::size_t> top_sets;     // surviving grid indices (tally desc, index asc)
    std::vector<std::size_t> train_choice; // per train utterance: chosen grid index
};

// Stage 1: per validation utterance, MBR-select among all grid candidates and
// tally the winning hyperparameter set. Stage 2: keep the k most-tallied sets
// and MBR-select per training utterance among them. candidates[g][u] is grid
// entry g's output for utterance u.
TwoStageResult two_stage_select(const std::vector<std::vector<Segmentation>>& validation_candidates,
                                const std::vector<std::vector<Segmentation>>& train_candidates,
                                int k, const SegLossFn& loss = nullptr);

} // namespace avnsl

#endif
