#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <utility>

namespace las {

// Deterministic RNG. mt19937_64 output is pinned by the standard; the
// distribution transforms are our own because the std:: distributions are
// not bit-identical across library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t u64() { return eng_(); }

    // [0, 1)
    double uniform() {
        return static_cast<double>(u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // [0, n), Lemire multiply-shift (slight bias is irrelevant here, the
    // fixed mapping is what matters)
    std::uint64_t below(std::uint64_t n) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(u64()) * n) >> 64);
    }

    // [lo, hi]
    int range_inclusive(int lo, int hi) {
        return lo + static_cast<int>(below(static_cast<std::uint64_t>(hi - lo + 1)));
    }

    // Box-Muller, one value per call (no cached second draw, so the stream
    // position is a pure function of the call count)
    double normal(double mean = 0.0, double stddev = 1.0) {
        double u1 = 1.0 - uniform();  // (0, 1]
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        return mean + stddev * r * std::cos(6.283185307179586476925286766559 * u2);
    }

    // Fisher-Yates
    template <class It>
    void shuffle(It first, It last) {
        auto n = static_cast<std::uint64_t>(last - first);
        for (std::uint64_t i = n; i > 1; --i) {
            std::uint64_t j = below(i);
            std::swap(first[static_cast<std::ptrdiff_t>(i - 1)],
                      first[static_cast<std::ptrdiff_t>(j)]);
        }
    }

private:
    std::mt19937_64 eng_;
};

}  // namespace las
