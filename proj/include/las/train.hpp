#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "las/dataset.hpp"
#include "las/engine.hpp"
#include "las/net.hpp"
#include "las/rng.hpp"

namespace las {

struct TrainingDiverged : std::runtime_error {
    int epoch;
    long long batch;
    TrainingDiverged(int epoch_, long long batch_, const std::string& what)
        : std::runtime_error(what), epoch(epoch_), batch(batch_) {}
};

struct TrainSummary {
    std::vector<double> epoch_loss;
    double final_val_acc = -1.0;
    long long optimizer_steps = 0;
};

// Shuffled mini-batches over a dataset. The shuffle rng persists across
// epochs (and across search steps, when shared), so total data exposure is a
// pure function of the seed and the call sequence.
class BatchStream {
public:
    BatchStream(const Dataset& data, int batch_size, std::uint64_t seed, bool flip,
                bool pad_crop);

    long long batches_per_epoch() const;
    void start_epoch();
    // fills x [B, C, H, W] with pixels scaled to [0, 1]; false at epoch end
    bool next(Tensor<float>& x, std::vector<std::uint16_t>& labels);

private:
    const Dataset* data_;
    int batch_size_;
    Rng rng_;
    bool flip_, pad_crop_;
    std::vector<std::size_t> order_;
    std::size_t pos_ = 0;
};

// gathered rows in natural order, no augmentation
Tensor<float> dataset_batch(const Dataset& ds, std::size_t begin, std::size_t end);

// one Nesterov SGD step over the learnable tensors selected by `counts`
void sgd_step(NetParams<float>& params, NetParams<float>& grads, NetParams<float>& velocity,
              const std::vector<int>& counts, float lr, float momentum, float weight_decay);

// top-1 accuracy in inference mode; throws std::domain_error on an empty set
double evaluate(const SearchSpaceSpec& spec, const NetParams<float>& params,
                const LayerAssignment& a, const Dataset& valset, int batch_size);

TrainSummary train_network(Network<float>& net, const DatasetSplit& data, const TrainConfig& cfg);

}  // namespace las
