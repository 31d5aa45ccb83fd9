#include "las/supernet.hpp"

#include <cmath>

#include "las/kernels.hpp"

namespace las {

Tensor<float> SubnetView::logits(const Tensor<float>& x) const {
    return forward_eval(owner->spec(), owner->params(), assignment, x);
}

double SubnetView::evaluate(const Dataset& valset, int batch_size) const {
    return owner->evaluate_view(assignment, valset, batch_size);
}

Supernet::Supernet(const SearchSpaceSpec& spec, std::uint64_t seed)
    : spec_(spec), capacities_(spec.capacities()) {
    spec_.validate();
    params_ = build_params<float>(spec_, capacities_, seed);
    grads_ = zeros_like(params_);
    velocity_ = zeros_like(params_);
}

void Supernet::check_fits(const LayerAssignment& a) const {
    if (a.size() != spec_.n)
        throw std::domain_error("supernet: assignment group count does not match the spec");
    for (int g = 0; g < spec_.n; ++g)
        if (a[g] > capacities_[static_cast<std::size_t>(g)])
            throw std::domain_error("supernet: assignment " + a.str() +
                                    " exceeds the capacity of group " + std::to_string(g + 1));
}

SubnetView Supernet::sample(const LayerAssignment& a) {
    check_fits(a);
    return SubnetView{this, a};
}

Network<float> Supernet::extract(const LayerAssignment& a) const {
    check_fits(a);
    Network<float> net{spec_, a, {}};
    net.params.has_stem = params_.has_stem;
    net.params.stem_conv = params_.stem_conv;
    net.params.stem_bn = params_.stem_bn;
    net.params.groups.resize(static_cast<std::size_t>(spec_.n));
    for (int g = 0; g < spec_.n; ++g) {
        const auto& slots = params_.groups[static_cast<std::size_t>(g)];
        auto& cells = net.params.groups[static_cast<std::size_t>(g)];
        cells.assign(slots.begin(), slots.begin() + a[g]);
    }
    net.params.classifier = params_.classifier;
    return net;
}

double Supernet::train_view_batch(const LayerAssignment& a, const Tensor<float>& x,
                                  const std::vector<std::uint16_t>& labels, float lr,
                                  const TrainConfig& knobs) {
    check_fits(a);
    ForwardCache<float> cache;
    const Tensor<float> logits = forward_train(spec_, params_, a, x, knobs.bn_momentum, cache);
    Tensor<float> probs(logits.shape);
    const double loss = kern::softmax_xent_forward(logits.data(), labels.data(), logits.shape[0],
                                                   logits.shape[1], probs.data());
    if (!std::isfinite(loss)) return loss;  // caller decides
    Tensor<float> dlogits(logits.shape);
    kern::softmax_xent_backward(probs.data(), labels.data(), logits.shape[0], logits.shape[1],
                                dlogits.data());
    net_backward(spec_, params_, a, cache, dlogits, grads_);
    sgd_step(params_, grads_, velocity_, a.groups(), lr, static_cast<float>(knobs.momentum),
             static_cast<float>(knobs.weight_decay));
    return loss;
}

TrainSummary Supernet::warmup(const DatasetSplit& data, const TrainConfig& cfg) {
    cfg.validate();
    TrainSummary summary;
    if (cfg.epochs == 0) return summary;
    if (data.train.empty()) throw std::invalid_argument("warmup: empty training set");
    const LayerAssignment full = full_assignment();
    BatchStream stream(data.train, cfg.batch_size, derive_seed(cfg.rng_seed, "warmup"),
                       cfg.augment_flip, cfg.augment_pad_crop);
    Tensor<float> x;
    std::vector<std::uint16_t> labels;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const float lr = static_cast<float>(cfg.lr_schedule.at(cfg.base_lr, epoch, cfg.epochs));
        stream.start_epoch();
        double loss_sum = 0.0;
        long long batches = 0;
        while (stream.next(x, labels)) {
            const double loss = train_view_batch(full, x, labels, lr, cfg);
            if (!std::isfinite(loss))
                throw TrainingDiverged(epoch, batches, "warmup diverged at epoch " +
                                                           std::to_string(epoch) + ", batch " +
                                                           std::to_string(batches));
            loss_sum += loss;
            ++batches;
            ++summary.optimizer_steps;
        }
        summary.epoch_loss.push_back(batches > 0 ? loss_sum / static_cast<double>(batches) : 0.0);
    }
    if (!data.val.empty())
        summary.final_val_acc = evaluate_view(full, data.val, cfg.batch_size);
    return summary;
}

InterleavedSummary Supernet::train_candidates_interleaved(
    const std::vector<LayerAssignment>& candidates, BatchStream& stream, const TrainConfig& knobs,
    int epochs, double step_lr) {
    if (static_cast<int>(candidates.size()) > spec_.n)
        throw std::invalid_argument("interleaved: more candidates than groups");
    for (const auto& c : candidates) check_fits(c);
    if (step_lr <= 0.0) throw std::invalid_argument("interleaved: step lr must be positive");

    InterleavedSummary summary;
    summary.diverged.assign(candidates.size(), 0);
    const LayerAssignment full = full_assignment();
    Tensor<float> x;
    std::vector<std::uint16_t> labels;
    for (int epoch = 0; epoch < epochs; ++epoch) {
        // linear decay to zero, reset every step
        const float lr =
            static_cast<float>(step_lr * static_cast<double>(epochs - epoch) / epochs);
        stream.start_epoch();
        double loss_sum = 0.0;
        long long batches = 0;
        while (stream.next(x, labels)) {
            const double full_loss = train_view_batch(full, x, labels, lr, knobs);
            if (!std::isfinite(full_loss))
                throw TrainingDiverged(epoch, batches,
                                       "interleaved training diverged on the full-capacity "
                                       "sub-network at epoch " +
                                           std::to_string(epoch) + ", batch " +
                                           std::to_string(batches));
            ++summary.optimizer_steps;
            for (std::size_t i = 0; i < candidates.size(); ++i) {
                if (summary.diverged[i]) continue;
                const double loss = train_view_batch(candidates[i], x, labels, lr, knobs);
                ++summary.optimizer_steps;
                if (!std::isfinite(loss)) summary.diverged[i] = 1;
            }
            loss_sum += full_loss;
            ++batches;
        }
        summary.epoch_loss.push_back(batches > 0 ? loss_sum / static_cast<double>(batches) : 0.0);
    }
    return summary;
}

void Supernet::recalc_bn(const LayerAssignment& a, const Dataset& calib, int batch_size) {
    check_fits(a);
    if (calib.empty()) throw std::domain_error("bn recalculation: empty calibration set");
    if (batch_size < 1) throw std::invalid_argument("bn recalculation: bad batch size");
    std::vector<BnAccum> accum;
    for (std::size_t begin = 0; begin < calib.count();
         begin += static_cast<std::size_t>(batch_size)) {
        const std::size_t end =
            std::min(calib.count(), begin + static_cast<std::size_t>(batch_size));
        const Tensor<float> x = dataset_batch(calib, begin, end);
        forward_calibrate(spec_, params_, a, x, accum);
    }
    apply_bn_aggregates(params_, a, accum);
}

double Supernet::evaluate_view(const LayerAssignment& a, const Dataset& valset,
                               int batch_size) const {
    check_fits(a);
    return evaluate(spec_, params_, a, valset, batch_size);
}

std::uint64_t Supernet::digest_selected(const LayerAssignment& a) const {
    check_fits(a);
    return params_digest(params_, a.groups(), true);
}

std::uint64_t Supernet::digest_all() const { return params_digest(params_, capacities_, true); }

std::uint64_t Supernet::digest_complement(const LayerAssignment& a) const {
    check_fits(a);
    std::uint64_t h = fnv1a64("complement");
    for (int g = 0; g < spec_.n; ++g) {
        const auto& slots = params_.groups[static_cast<std::size_t>(g)];
        for (std::size_t j = static_cast<std::size_t>(a[g]); j < slots.size(); ++j) {
            const auto& cell = slots[j];
            h = cell.conv1.w.digest(h);
            h = cell.bn1.gamma.digest(h);
            h = cell.bn1.beta.digest(h);
            h = cell.bn1.rmean.digest(h);
            h = cell.bn1.rvar.digest(h);
            if (cell.has_second) {
                h = cell.conv2.w.digest(h);
                h = cell.bn2.gamma.digest(h);
                h = cell.bn2.beta.digest(h);
                h = cell.bn2.rmean.digest(h);
                h = cell.bn2.rvar.digest(h);
            }
            if (cell.has_proj) {
                h = cell.proj.w.digest(h);
                h = cell.proj_bn.gamma.digest(h);
                h = cell.proj_bn.beta.digest(h);
                h = cell.proj_bn.rmean.digest(h);
                h = cell.proj_bn.rvar.digest(h);
            }
        }
    }
    return h;
}

double accuracy_gap(std::span<const std::pair<double, double>> pairs) {
    if (pairs.empty()) throw std::domain_error("accuracy gap: empty pair list");
    double sum = 0.0;
    for (const auto& [stand_alone, one_shot] : pairs) {
        if (stand_alone < 0.0 || stand_alone > 1.0 || one_shot < 0.0 || one_shot > 1.0)
            throw std::domain_error("accuracy gap: accuracies must sit in [0, 1]");
        sum += std::abs(stand_alone - one_shot);
    }
    return sum / static_cast<double>(pairs.size());
}

}  // namespace las
