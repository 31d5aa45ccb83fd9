#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "las/net.hpp"

namespace las {

// thrown when an activation or loss goes non-finite
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

template <class T>
struct CellCache {
    Tensor<T> x;               // cell input
    Tensor<T> z1, m1, v1, r1;  // conv1 output, bn1 batch stats, post-relu
    Tensor<T> z2, m2, v2;      // second conv (residual)
    Tensor<T> zp, mp, vp;      // projection branch
    Tensor<T> out;             // cell output
};

template <class T>
struct GroupCache {
    std::vector<CellCache<T>> cells;
    Tensor<int> pool_idx;  // plain family: argmax offsets of the closing max-pool
};

template <class T>
struct FcCache {
    Tensor<T> x;  // layer input
    Tensor<T> z;  // pre-activation output
};

template <class T>
struct ForwardCache {
    CellCache<T> stem;
    std::vector<GroupCache<T>> groups;
    std::vector<FcCache<T>> fcs;
    Tensor<T> logits;
};

// streaming aggregate of one batch-norm layer's input activations
struct BnAccum {
    double count = 0.0;
    std::vector<double> sum, sumsq;
};

// Training-mode forward: batch statistics normalize, running statistics get
// the EMA update r = (1 - momentum) * r + momentum * batch.
template <class T>
Tensor<T> forward_train(const SearchSpaceSpec& spec, NetParams<T>& p, const LayerAssignment& a,
                        const Tensor<T>& x, double bn_momentum, ForwardCache<T>& cache);

// Inference: running statistics, parameters untouched.
template <class T>
Tensor<T> forward_eval(const SearchSpaceSpec& spec, const NetParams<T>& p,
                       const LayerAssignment& a, const Tensor<T>& x);

// Calibration pass: normalizes with batch statistics like training, leaves
// parameters untouched, and streams exact per-channel aggregates of every
// batch-norm input into `accum` (one entry per bn layer, in declaration
// order; grown on first use).
template <class T>
Tensor<T> forward_calibrate(const SearchSpaceSpec& spec, const NetParams<T>& p,
                            const LayerAssignment& a, const Tensor<T>& x,
                            std::vector<BnAccum>& accum);

// Backpropagates dlogits through the cached forward pass; overwrites the
// gradient tensors of the selected cells (and only those).
template <class T>
void net_backward(const SearchSpaceSpec& spec, const NetParams<T>& p, const LayerAssignment& a,
                  const ForwardCache<T>& cache, const Tensor<T>& dlogits, NetParams<T>& grads);

// writes the finalized aggregates into the running statistics of the selected
// bn layers, in the same declaration order the calibrate pass used
template <class T>
void apply_bn_aggregates(NetParams<T>& p, const LayerAssignment& a,
                         const std::vector<BnAccum>& accum);

}  // namespace las
