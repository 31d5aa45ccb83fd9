#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <vector>

#include "las/rng.hpp"
#include "las/tensor.hpp"

namespace las::testutil {

template <class T>
Tensor<T> random_tensor(std::vector<int> shape, Rng& rng, double scale = 1.0) {
    Tensor<T> t(std::move(shape));
    for (auto& v : t.v) v = static_cast<T>(scale * rng.normal());
    return t;
}

template <class T>
bool bitwise_equal(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape != b.shape) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        // compare representations so that -0.0 vs 0.0 and NaN patterns count
        if (std::memcmp(&a.v[i], &b.v[i], sizeof(T)) != 0) return false;
    }
    return true;
}

inline double rel_err(double analytic, double numeric) {
    const double denom = std::max({1.0, std::abs(analytic), std::abs(numeric)});
    return std::abs(analytic - numeric) / denom;
}

// central finite differences of a scalar loss with respect to every element
// of `x`, compared against the analytic gradient; returns the worst relative
// error
inline double gradcheck_max_rel(const std::function<double()>& loss, std::vector<double>& x,
                                const std::vector<double>& analytic, double h = 1e-3) {
    double worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + h;
        const double up = loss();
        x[i] = keep - h;
        const double down = loss();
        x[i] = keep;
        const double numeric = (up - down) / (2.0 * h);
        worst = std::max(worst, rel_err(analytic[i], numeric));
    }
    return worst;
}

}  // namespace las::testutil
