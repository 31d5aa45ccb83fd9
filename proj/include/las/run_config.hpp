#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "las/dataset.hpp"
#include "las/search.hpp"
#include "las/spec.hpp"

namespace las {

struct DatasetSource {
    enum class Kind { synthetic, lasd, csv };
    Kind kind = Kind::synthetic;
    // synthetic
    int num_classes = 8;
    int samples_per_class = 250;
    std::array<int, 3> shape{3, 32, 32};
    double noise = 0.25;
    std::uint64_t seed = 11;
    // file-backed
    std::string path;

    DatasetSplit realize(int expected_classes = -1) const;
};

// Complete, canonically serializable description of a run. Parsing is strict:
// unknown keys are errors.
struct RunConfig {
    std::uint64_t seed = 1;
    SearchSpaceSpec spec = SearchSpaceSpec::desk_default();
    TrainConfig train;
    int step_epochs = 10;
    int warmup_epochs = 5;
    double base_lr = 0.05;
    double search_lr = 0.0;  // <= 0 resolves to base_lr / 2
    int calib_size = 1000;
    DatasetSource dataset;
    std::string out_dir;

    static RunConfig from_json_text(const std::string& text);
    static RunConfig load(const std::string& path);
    // canonical resolved rendering; reloading it reproduces the config
    std::string to_json() const;
    std::uint64_t digest() const;
    SearchConfig search_config() const;
};

}  // namespace las
