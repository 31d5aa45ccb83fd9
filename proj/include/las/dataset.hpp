#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "las/digest.hpp"

namespace las {

// thrown for malformed files, bad magic, truncation, unknown config keys
struct IoError : std::runtime_error {
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

struct Dataset {
    std::array<int, 3> shape{3, 32, 32};  // C, H, W
    std::vector<std::uint8_t> pixels;     // count * C * H * W, sample-major
    std::vector<std::uint16_t> labels;

    std::size_t count() const { return labels.size(); }
    std::size_t sample_size() const {
        return static_cast<std::size_t>(shape[0]) * shape[1] * shape[2];
    }
    const std::uint8_t* sample(std::size_t i) const { return pixels.data() + i * sample_size(); }
    bool empty() const { return labels.empty(); }
    void validate() const;
    std::uint64_t digest() const;
};

// D_t / D_v / D_s. Train and validation are disjoint; the calibration set is
// a deterministic subset of the train pool.
struct DatasetSplit {
    Dataset train, val, calib;
    std::uint64_t digest() const;
};

// Deterministic class-template task: each class is a smooth random pattern,
// each sample is its class template plus seeded Gaussian pixel noise. At
// noise 0 a nearest-template classifier is exact.
DatasetSplit generate_synthetic_task(std::uint64_t seed, int num_classes, int samples_per_class,
                                     std::array<int, 3> shape, double noise = 0.25);

std::vector<std::uint8_t> synthetic_class_template(std::uint64_t seed, int cls,
                                                   std::array<int, 3> shape);

// Positional 80/20 split of a stored pool plus the calibration subset,
// min(1000, |train|/5) samples drawn with an rng seeded from the pool
// content. Loading a written pool therefore reproduces the split exactly.
DatasetSplit split_pool(const Dataset& pool);

// pool = train followed by val, in order
Dataset concat_pool(const DatasetSplit& split);

// LASD container, byte layout:
//   "LASD" | version u8=1 | dtype u8=0 (u8 pixels) | ndim u8 | dims u32 LE each
//   | raw pixels | "LABL" | count u32 LE | labels u16 LE
void save_lasd(const Dataset& ds, const std::string& path);
Dataset load_lasd(const std::string& path);

// text encoding of the same content: first line "dims,C,H,W", then one
// "label,p0,p1,..." row per sample
void save_csv_dataset(const Dataset& ds, const std::string& path);
Dataset load_csv_dataset(const std::string& path);

enum class DataFormat { lasd, csv };

void save_split(const DatasetSplit& split, const std::string& path, DataFormat fmt);
// expected_classes >= 0 also validates every label against it
DatasetSplit load_split(const std::string& path, DataFormat fmt, int expected_classes = -1);

}  // namespace las
