#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "las/assignments.hpp"

namespace las {

// Synthetic assignment -> pseudo-accuracy functions for exercising the search
// without neural training. All deterministic given (kind, n, max_depth, seed).
//
//   planted_monotone  sum of per-group concave increasing utilities; greedy
//                     one-layer increments are optimal for such objectives, so
//                     the per-depth argmax chain is inherited by construction
//   random            hash of the assignment, no structure
//   adversarial       planted_monotone plus a bonus that lifts a far-off
//                     assignment to the top of one depth, breaking inheritance
class SurrogateLandscape {
public:
    enum class Kind { planted_monotone, random, adversarial };

    SurrogateLandscape(Kind kind, int n, int max_depth, std::uint64_t seed);

    double score(const LayerAssignment& a) const;

    Kind kind() const { return kind_; }
    int group_count() const { return n_; }
    int max_depth() const { return max_depth_; }
    std::uint64_t seed() const { return seed_; }
    std::uint64_t digest() const;

    static Kind kind_from_name(const std::string& name);
    static std::string kind_name(Kind kind);

private:
    double base_score(const LayerAssignment& a) const;

    Kind kind_;
    int n_;
    int max_depth_;
    std::uint64_t seed_;
    std::vector<std::vector<double>> utility_;  // [group][layers-1], prefix sums
    double max_total_ = 1.0;
    std::map<std::string, double> bonus_;
};

}  // namespace las
