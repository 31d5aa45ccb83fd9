#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "las/train.hpp"

namespace las {

class Supernet;

// A sampled sub-network: shared supernet weights restricted to the slot
// prefix an assignment selects. Holds a reference; training through the view
// mutates the supernet.
struct SubnetView {
    Supernet* owner;
    LayerAssignment assignment;

    Tensor<float> logits(const Tensor<float>& x) const;
    double evaluate(const Dataset& valset, int batch_size) const;
};

struct InterleavedSummary {
    long long optimizer_steps = 0;
    std::vector<char> diverged;  // per candidate
    std::vector<double> epoch_loss;  // deepest sub-network loss per epoch
};

// The one-shot model: full-capacity parameter blocks whose slot prefixes are
// shared by every sampled sub-network. Single-writer: all training entry
// points mutate the shared blocks sequentially.
class Supernet {
public:
    Supernet(const SearchSpaceSpec& spec, std::uint64_t seed);

    const SearchSpaceSpec& spec() const { return spec_; }
    const std::vector<int>& capacities() const { return capacities_; }
    LayerAssignment full_assignment() const { return LayerAssignment(capacities_); }
    NetParams<float>& params() { return params_; }
    const NetParams<float>& params() const { return params_; }

    // throws std::domain_error when a exceeds a group capacity
    SubnetView sample(const LayerAssignment& a);

    // deep copy of the selected slots into a stand-alone network
    Network<float> extract(const LayerAssignment& a) const;

    // trains the full-capacity sub-network for cfg.epochs
    TrainSummary warmup(const DatasetSplit& data, const TrainConfig& cfg);

    // Per batch: one optimizer step on the full-capacity sub-network, then one
    // on each candidate, all on the same batch. LR decays linearly from
    // step_lr to 0 over `epochs`. A diverging candidate is dropped with its
    // flag set; a diverging full-capacity step throws.
    InterleavedSummary train_candidates_interleaved(const std::vector<LayerAssignment>& candidates,
                                                    BatchStream& stream, const TrainConfig& knobs,
                                                    int epochs, double step_lr);

    // one forward/backward/optimizer step on the selected prefix; touches
    // nothing outside it. Returns the batch loss (non-finite on divergence).
    double train_view_batch(const LayerAssignment& a, const Tensor<float>& x,
                            const std::vector<std::uint16_t>& labels, float lr,
                            const TrainConfig& knobs);

    // replaces the running statistics of the view's bn layers with exact
    // aggregates over the calibration set
    void recalc_bn(const LayerAssignment& a, const Dataset& calib, int batch_size);

    double evaluate_view(const LayerAssignment& a, const Dataset& valset, int batch_size) const;

    std::uint64_t digest_selected(const LayerAssignment& a) const;
    // digest of every slot outside the assignment's prefix selection
    std::uint64_t digest_complement(const LayerAssignment& a) const;
    std::uint64_t digest_all() const;

private:
    void check_fits(const LayerAssignment& a) const;

    SearchSpaceSpec spec_;
    std::vector<int> capacities_;
    NetParams<float> params_;
    NetParams<float> grads_;
    NetParams<float> velocity_;
};

// mean absolute difference between stand-alone and one-shot accuracies;
// inputs must sit in [0, 1]
double accuracy_gap(std::span<const std::pair<double, double>> pairs);

}  // namespace las
