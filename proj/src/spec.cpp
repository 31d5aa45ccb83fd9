#include "las/spec.hpp"

#include <cmath>
#include <stdexcept>

#include "las/digest.hpp"

namespace las {

std::string family_name(Family f) {
    return f == Family::plain ? "plain" : "residual";
}

Family family_from_name(const std::string& s) {
    if (s == "plain") return Family::plain;
    if (s == "residual") return Family::residual;
    throw std::invalid_argument("unknown network family \"" + s + "\" (expected plain or residual)");
}

SearchSpaceSpec SearchSpaceSpec::desk_default(Family f) {
    SearchSpaceSpec s;
    s.n = 3;
    s.channel_plan = f == Family::residual ? std::vector<int>{8, 16, 32}
                                           : std::vector<int>{8, 16, 32};
    s.input_shape = {3, 32, 32};
    s.num_classes = 8;
    s.cell_kind = f;
    s.classifier_plan = {64, s.num_classes};
    s.target_depth = 8;
    return s;
}

void SearchSpaceSpec::validate() const {
    if (n < 1) throw std::invalid_argument("spec: group count must be positive");
    if (static_cast<int>(channel_plan.size()) != n)
        throw std::invalid_argument("spec: channel plan length must equal group count");
    for (int c : channel_plan)
        if (c < 1) throw std::invalid_argument("spec: channels must be positive");
    if (input_shape[0] < 1 || input_shape[1] < 1 || input_shape[2] < 1)
        throw std::invalid_argument("spec: bad input shape");
    if (num_classes < 2) throw std::invalid_argument("spec: need at least two classes");
    if (classifier_plan.empty() || classifier_plan.back() != num_classes)
        throw std::invalid_argument("spec: classifier plan must end in num_classes");
    for (int c : classifier_plan)
        if (c < 1) throw std::invalid_argument("spec: classifier widths must be positive");
    if (target_depth < n)
        throw std::invalid_argument("spec: target depth below group count");
    if (!group_capacity.empty()) {
        if (static_cast<int>(group_capacity.size()) != n)
            throw std::invalid_argument("spec: capacity list length must equal group count");
        for (int c : group_capacity)
            if (c < 1) throw std::invalid_argument("spec: capacities must be positive");
    }
    // every group must be downsampled at least once; spatial extents have to
    // survive n halvings
    int hh = input_shape[1], ww = input_shape[2];
    for (int g = 0; g < n; ++g) {
        if (hh < 2 || ww < 2)
            throw std::invalid_argument("spec: input too small for the group count");
        hh /= 2;
        ww /= 2;
    }
}

int SearchSpaceSpec::capacity(int group) const {
    if (group_capacity.empty()) return target_depth - n + 1;
    return group_capacity[static_cast<std::size_t>(group)];
}

std::vector<int> SearchSpaceSpec::capacities() const {
    std::vector<int> c(static_cast<std::size_t>(n));
    for (int g = 0; g < n; ++g) c[static_cast<std::size_t>(g)] = capacity(g);
    return c;
}

int SearchSpaceSpec::supernet_depth() const {
    int s = 0;
    for (int g = 0; g < n; ++g) s += capacity(g);
    return s;
}

std::uint64_t SearchSpaceSpec::digest() const {
    std::uint64_t h = fnv1a64("SearchSpaceSpec");
    h = mix_u64(h, static_cast<std::uint64_t>(n));
    h = fnv1a64(channel_plan.data(), channel_plan.size() * sizeof(int), h);
    h = fnv1a64(input_shape.data(), input_shape.size() * sizeof(int), h);
    h = mix_u64(h, static_cast<std::uint64_t>(num_classes));
    h = mix_u64(h, cell_kind == Family::plain ? 0u : 1u);
    h = fnv1a64(classifier_plan.data(), classifier_plan.size() * sizeof(int), h);
    h = mix_u64(h, static_cast<std::uint64_t>(target_depth));
    const auto caps = capacities();
    h = fnv1a64(caps.data(), caps.size() * sizeof(int), h);
    return h;
}

double LrSchedule::at(double base_lr, int epoch, int total_epochs) const {
    switch (kind) {
        case Kind::constant:
            return base_lr;
        case Kind::multistep: {
            double lr = base_lr;
            for (int m : milestones)
                if (epoch >= m) lr *= factor;
            return lr;
        }
        case Kind::linear_decay:
            if (total_epochs <= 0) return base_lr;
            return base_lr * static_cast<double>(total_epochs - epoch) / total_epochs;
    }
    return base_lr;
}

void TrainConfig::validate() const {
    if (base_lr <= 0.0) throw std::invalid_argument("train config: base_lr must be positive");
    if (momentum < 0.0 || momentum >= 1.0)
        throw std::invalid_argument("train config: momentum must be in [0, 1)");
    if (weight_decay < 0.0) throw std::invalid_argument("train config: weight_decay must be >= 0");
    if (bn_momentum < 0.0 || bn_momentum > 1.0)
        throw std::invalid_argument("train config: bn_momentum must be in [0, 1]");
    if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be positive");
    if (epochs < 0) throw std::invalid_argument("train config: epochs must be >= 0");
}

std::uint64_t TrainConfig::digest(std::uint64_t spec_digest) const {
    std::uint64_t h = fnv1a64("TrainConfig");
    h = mix_u64(h, spec_digest);
    auto mixd = [&h](double x) { h = fnv1a64(&x, sizeof(x), h); };
    mixd(base_lr);
    h = mix_u64(h, static_cast<std::uint64_t>(lr_schedule.kind));
    h = fnv1a64(lr_schedule.milestones.data(),
                lr_schedule.milestones.size() * sizeof(int), h);
    mixd(lr_schedule.factor);
    mixd(momentum);
    mixd(weight_decay);
    mixd(bn_momentum);
    h = mix_u64(h, static_cast<std::uint64_t>(batch_size));
    h = mix_u64(h, static_cast<std::uint64_t>(epochs));
    h = mix_u64(h, rng_seed);
    h = mix_u64(h, (augment_flip ? 1u : 0u) | (augment_pad_crop ? 2u : 0u));
    return h;
}

}  // namespace las
