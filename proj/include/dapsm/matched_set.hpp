#pragma once

#include <limits>
#include <utility>
#include <vector>

namespace dapsm {

// 1-1 matching without replacement. Indices are ordinals into the treated
// and control lists of the matrix the match was computed from; pairs are
// kept sorted by treated index. mean_pair_distance is in the raw distance
// units and is NaN until a pipeline with access to raw distances fills it.
struct MatchedSet {
    std::vector<std::pair<int, int>> pairs;  // (treated ordinal, control ordinal)
    std::vector<int> dropped_treated;
    double total_cost = 0.0;
    double mean_pair_distance = std::numeric_limits<double>::quiet_NaN();

    int n_pairs() const { return static_cast<int>(pairs.size()); }
    bool empty() const { return pairs.empty(); }
};

}  // namespace dapsm
