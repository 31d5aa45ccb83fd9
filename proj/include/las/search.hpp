#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "las/assignments.hpp"
#include "las/dataset.hpp"
#include "las/spec.hpp"
#include "las/surrogate.hpp"

namespace las {

struct SearchConfig {
    SearchSpaceSpec spec;
    int step_epochs = 10;   // K, training epochs per depth step
    int warmup_epochs = 5;  // full-capacity warm-up before the first step
    double base_lr = 0.05;
    double search_lr = 0.0;  // <= 0 resolves to base_lr / 2
    int calib_size = 1000;
    std::uint64_t seed = 1;
    TrainConfig train;  // momentum, weight decay, batch size, bn momentum

    double effective_search_lr() const { return search_lr > 0.0 ? search_lr : base_lr / 2.0; }
    void validate() const;
    std::uint64_t digest() const;
};

struct StepRecord {
    int depth;  // depth of the candidates evaluated in this step
    double lr_used;
    int epochs;
    long long wall_ms;
    std::vector<std::pair<LayerAssignment, double>> candidates;  // group order
    std::vector<char> diverged;                                  // aligned with candidates
    LayerAssignment winner;
};

struct SearchTrace {
    int n = 0;
    int target_depth = 0;
    std::uint64_t config_digest = 0;
    std::vector<StepRecord> steps;
    std::vector<LayerAssignment> chain;  // one entry per depth in [n, m_t]
    long long budget = 0;                // candidate trainings
    std::string error;                   // empty on success

    std::string to_json() const;  // schema "trace_version": 1
    static SearchTrace from_json_text(const std::string& text);
};

// highest accuracy wins; exact ties go to the lexicographically smallest
// assignment
LayerAssignment select_top1(const std::vector<std::pair<LayerAssignment, double>>& candidates);

// the full pipeline: supernet init, warm-up, then one inherited-sampling step
// per depth from n+1 to m_t (trains the candidates, recalibrates bn,
// evaluates on the validation set, keeps the top-1)
SearchTrace run_search(const SearchConfig& cfg, const DatasetSplit& data);

// the same loop with training replaced by landscape lookups; budget
// accounting is identical, wall clock is recorded as 0
SearchTrace run_search_surrogate(const SurrogateLandscape& landscape, int target_depth);

// shared skeleton: hooks supply per-step training and per-candidate
// evaluation
struct SearchHooks {
    std::function<std::vector<char>(int step_index, const std::vector<LayerAssignment>&)> train;
    std::function<double(const LayerAssignment&)> evaluate;
    std::function<double(int step_index)> lr_used;
    int step_epochs = 0;
    bool record_wall_clock = true;
};

SearchTrace search_loop(int n, int target_depth, const SearchHooks& hooks);

}  // namespace las
