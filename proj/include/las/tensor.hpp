#pragma once

#include <algorithm>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "las/digest.hpp"

namespace las {

// Flat row-major tensor. The hot kernels take raw pointers + dims; this is
// just the owning container plus a few conveniences.
template <class T>
struct Tensor {
    std::vector<int> shape;
    std::vector<T> v;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)), v(count(shape)) {}

    static std::size_t count(const std::vector<int>& s) {
        std::size_t c = 1;
        for (int d : s) {
            if (d < 0) throw std::invalid_argument("tensor: negative dimension");
            c *= static_cast<std::size_t>(d);
        }
        return c;
    }

    std::size_t size() const { return v.size(); }
    bool empty() const { return v.empty(); }
    T* data() { return v.data(); }
    const T* data() const { return v.data(); }
    void fill(T x) { std::fill(v.begin(), v.end(), x); }
    void zero() { fill(T(0)); }
    int dim(std::size_t i) const { return shape[i]; }
    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    std::uint64_t digest(std::uint64_t h = 0xcbf29ce484222325ull) const {
        h = fnv1a64(shape.data(), shape.size() * sizeof(int), h);
        return fnv1a64(v.data(), v.size() * sizeof(T), h);
    }
};

}  // namespace las
