#include "las/train.hpp"

#include <cmath>

#include "las/kernels.hpp"

namespace las {

BatchStream::BatchStream(const Dataset& data, int batch_size, std::uint64_t seed, bool flip,
                         bool pad_crop)
    : data_(&data),
      batch_size_(batch_size),
      rng_(seed),
      flip_(flip),
      pad_crop_(pad_crop),
      order_(data.count()) {
    if (batch_size_ < 1) throw std::invalid_argument("batch stream: batch size must be positive");
    if (data.empty()) throw std::invalid_argument("batch stream: empty dataset");
    for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
    pos_ = order_.size();  // next() yields nothing until start_epoch()
}

long long BatchStream::batches_per_epoch() const {
    return static_cast<long long>((order_.size() + static_cast<std::size_t>(batch_size_) - 1) /
                                  static_cast<std::size_t>(batch_size_));
}

void BatchStream::start_epoch() {
    rng_.shuffle(order_.begin(), order_.end());
    pos_ = 0;
}

bool BatchStream::next(Tensor<float>& x, std::vector<std::uint16_t>& labels) {
    if (pos_ >= order_.size()) return false;
    const std::size_t take = std::min(order_.size() - pos_, static_cast<std::size_t>(batch_size_));
    const int c = data_->shape[0], h = data_->shape[1], w = data_->shape[2];
    x = Tensor<float>({static_cast<int>(take), c, h, w});
    labels.resize(take);
    constexpr float kScale = 1.0f / 255.0f;
    for (std::size_t b = 0; b < take; ++b) {
        const std::size_t row = order_[pos_ + b];
        labels[b] = data_->labels[row];
        const std::uint8_t* src = data_->sample(row);
        float* dst = x.data() + b * data_->sample_size();
        const bool do_flip = flip_ && rng_.u64() % 2 == 1;
        int ox = 0, oy = 0;
        if (pad_crop_) {
            // zero pad 4 on each side, crop back to h x w
            ox = rng_.range_inclusive(-4, 4);
            oy = rng_.range_inclusive(-4, 4);
        }
        if (!do_flip && ox == 0 && oy == 0) {
            for (std::size_t p = 0; p < data_->sample_size(); ++p) dst[p] = src[p] * kScale;
        } else {
            for (int ch = 0; ch < c; ++ch) {
                for (int y = 0; y < h; ++y) {
                    const int sy = y + oy;
                    for (int xx = 0; xx < w; ++xx) {
                        int sx = (do_flip ? w - 1 - xx : xx) + ox;
                        float v = 0.0f;
                        if (sy >= 0 && sy < h && sx >= 0 && sx < w)
                            v = src[(static_cast<std::size_t>(ch) * h + sy) * w + sx] * kScale;
                        dst[(static_cast<std::size_t>(ch) * h + y) * w + xx] = v;
                    }
                }
            }
        }
    }
    pos_ += take;
    return true;
}

Tensor<float> dataset_batch(const Dataset& ds, std::size_t begin, std::size_t end) {
    const int c = ds.shape[0], h = ds.shape[1], w = ds.shape[2];
    Tensor<float> x({static_cast<int>(end - begin), c, h, w});
    constexpr float kScale = 1.0f / 255.0f;
    for (std::size_t i = begin; i < end; ++i) {
        const std::uint8_t* src = ds.sample(i);
        float* dst = x.data() + (i - begin) * ds.sample_size();
        for (std::size_t p = 0; p < ds.sample_size(); ++p) dst[p] = src[p] * kScale;
    }
    return x;
}

void sgd_step(NetParams<float>& params, NetParams<float>& grads, NetParams<float>& velocity,
              const std::vector<int>& counts, float lr, float momentum, float weight_decay) {
    auto p = collect_learnable(params, counts);
    auto g = collect_learnable(grads, counts);
    auto v = collect_learnable(velocity, counts);
    if (p.size() != g.size() || p.size() != v.size())
        throw std::logic_error("sgd: parameter/gradient/velocity structures disagree");
    for (std::size_t i = 0; i < p.size(); ++i)
        kern::sgd_nesterov_step(p[i]->data(), g[i]->data(), v[i]->data(), p[i]->size(), lr,
                                momentum, weight_decay);
}

double evaluate(const SearchSpaceSpec& spec, const NetParams<float>& params,
                const LayerAssignment& a, const Dataset& valset, int batch_size) {
    if (valset.empty()) throw std::domain_error("evaluate: empty validation set");
    if (batch_size < 1) throw std::invalid_argument("evaluate: batch size must be positive");
    long long correct = 0;
    for (std::size_t begin = 0; begin < valset.count();
         begin += static_cast<std::size_t>(batch_size)) {
        const std::size_t end =
            std::min(valset.count(), begin + static_cast<std::size_t>(batch_size));
        const Tensor<float> x = dataset_batch(valset, begin, end);
        const Tensor<float> logits = forward_eval(spec, params, a, x);
        const int classes = logits.shape[1];
        for (std::size_t b = 0; b < end - begin; ++b) {
            const float* row = logits.data() + b * static_cast<std::size_t>(classes);
            int best = 0;
            for (int cc = 1; cc < classes; ++cc)
                if (row[cc] > row[best]) best = cc;
            if (best == valset.labels[begin + b]) ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(valset.count());
}

TrainSummary train_network(Network<float>& net, const DatasetSplit& data, const TrainConfig& cfg) {
    cfg.validate();
    if (data.train.empty()) throw std::invalid_argument("train: empty training set");

    const std::vector<int>& counts = net.assignment.groups();
    NetParams<float> grads = zeros_like(net.params);
    NetParams<float> velocity = zeros_like(net.params);
    BatchStream stream(data.train, cfg.batch_size, derive_seed(cfg.rng_seed, "shuffle"),
                       cfg.augment_flip, cfg.augment_pad_crop);

    TrainSummary summary;
    Tensor<float> x;
    std::vector<std::uint16_t> labels;
    ForwardCache<float> cache;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const float lr =
            static_cast<float>(cfg.lr_schedule.at(cfg.base_lr, epoch, cfg.epochs));
        stream.start_epoch();
        double loss_sum = 0.0;
        long long batches = 0;
        while (stream.next(x, labels)) {
            const Tensor<float> logits =
                forward_train(net.spec, net.params, net.assignment, x, cfg.bn_momentum, cache);
            Tensor<float> probs(logits.shape);
            const double loss = kern::softmax_xent_forward(
                logits.data(), labels.data(), logits.shape[0], logits.shape[1], probs.data());
            if (!std::isfinite(loss))
                throw TrainingDiverged(epoch, batches,
                                       "training diverged (non-finite loss) at epoch " +
                                           std::to_string(epoch) + ", batch " +
                                           std::to_string(batches));
            Tensor<float> dlogits(logits.shape);
            kern::softmax_xent_backward(probs.data(), labels.data(), logits.shape[0],
                                        logits.shape[1], dlogits.data());
            net_backward(net.spec, net.params, net.assignment, cache, dlogits, grads);
            sgd_step(net.params, grads, velocity, counts, lr,
                     static_cast<float>(cfg.momentum), static_cast<float>(cfg.weight_decay));
            loss_sum += loss;
            ++batches;
            ++summary.optimizer_steps;
        }
        summary.epoch_loss.push_back(batches > 0 ? loss_sum / static_cast<double>(batches) : 0.0);
    }
    if (!data.val.empty())
        summary.final_val_acc =
            evaluate(net.spec, net.params, net.assignment, data.val, cfg.batch_size);
    return summary;
}

}  // namespace las
