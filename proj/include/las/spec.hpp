#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace las {

enum class Family { plain, residual };

std::string family_name(Family f);
Family family_from_name(const std::string& s);

// The supernet universe: group count, channel plan, cell template, capacities
// and target depth. Capacities default to m_t - n + 1 per group so that every
// assignment reachable by an inherited chain ending at the target depth fits.
struct SearchSpaceSpec {
    int n = 3;
    std::vector<int> channel_plan;            // output channels per group
    std::array<int, 3> input_shape{3, 32, 32};  // C, H, W
    int num_classes = 8;
    Family cell_kind = Family::plain;
    std::vector<int> classifier_plan;         // fully-connected widths, last == num_classes
    int target_depth = 8;                     // m_t
    std::vector<int> group_capacity;          // empty => derived

    // doubling channel plan starting at base; keeps FLOPs equal across
    // assignments of the same depth
    static SearchSpaceSpec desk_default(Family f = Family::plain);

    void validate() const;
    int capacity(int group) const;
    std::vector<int> capacities() const;
    int supernet_depth() const;  // m_s, sum of capacities
    bool has_stem() const { return cell_kind == Family::residual; }
    std::uint64_t digest() const;
};

struct LrSchedule {
    enum class Kind { constant, multistep, linear_decay };
    Kind kind = Kind::constant;
    std::vector<int> milestones;  // multistep only
    double factor = 0.1;          // multistep only

    double at(double base_lr, int epoch, int total_epochs) const;
};

struct TrainConfig {
    double base_lr = 0.1;
    LrSchedule lr_schedule;
    double momentum = 0.9;  // Nesterov
    double weight_decay = 5e-4;
    double bn_momentum = 0.1;
    int batch_size = 128;
    int epochs = 10;
    std::uint64_t rng_seed = 1;
    bool augment_flip = false;
    bool augment_pad_crop = false;

    void validate() const;
    std::uint64_t digest(std::uint64_t spec_digest) const;
};

}  // namespace las
