#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "las/assignments.hpp"
#include "las/spec.hpp"
#include "las/tensor.hpp"

namespace las {

template <class T>
struct Conv {
    Tensor<T> w;  // [co][ci][kh][kw]
    int stride = 1;
    int pad = 1;
};

template <class T>
struct Bn {
    Tensor<T> gamma, beta;   // learnable
    Tensor<T> rmean, rvar;   // running statistics
};

// One layer of the assignment. Plain: conv + bn (+ relu). Residual: two
// convs with a shortcut; the transition cell of groups 2..n downsamples with
// stride 2 and carries a 1x1 projection on the shortcut because the channel
// count doubles there.
template <class T>
struct Cell {
    Conv<T> conv1;
    Bn<T> bn1;
    bool has_second = false;
    Conv<T> conv2;
    Bn<T> bn2;
    bool has_proj = false;
    Conv<T> proj;
    Bn<T> proj_bn;
};

template <class T>
struct Fc {
    Tensor<T> w;  // [o][d]
    Tensor<T> b;  // [o]
};

template <class T>
struct NetParams {
    bool has_stem = false;
    Conv<T> stem_conv;
    Bn<T> stem_bn;
    std::vector<std::vector<Cell<T>>> groups;  // per group, per slot
    std::vector<Fc<T>> classifier;
};

template <class T>
struct Network {
    SearchSpaceSpec spec;
    LayerAssignment assignment;
    NetParams<T> params;
};

// Parameter blocks shaped for `counts[g]` cells in group g, deterministically
// initialized from the seed: fan-in-scaled Gaussians for conv/fc weights,
// scale 1 / shift 0 / running stats (0, 1) for batch norm, zero fc biases.
template <class T>
NetParams<T> build_params(const SearchSpaceSpec& spec, const std::vector<int>& counts,
                          std::uint64_t seed);

template <class T>
Network<T> build_network(const SearchSpaceSpec& spec, const LayerAssignment& a,
                         std::uint64_t seed);

// Visits tensors of the cells selected by `counts` (prefix per group), in
// declaration order; the checkpoint format and optimizer both rely on this
// order being stable.
template <class T>
void visit_learnable(NetParams<T>& p, const std::vector<int>& counts,
                     const std::function<void(Tensor<T>&)>& f);
template <class T>
void visit_learnable(const NetParams<T>& p, const std::vector<int>& counts,
                     const std::function<void(const Tensor<T>&)>& f);
template <class T>
void visit_bn_state(NetParams<T>& p, const std::vector<int>& counts,
                    const std::function<void(Tensor<T>&)>& f);
template <class T>
void visit_bn_state(const NetParams<T>& p, const std::vector<int>& counts,
                    const std::function<void(const Tensor<T>&)>& f);

template <class T>
std::vector<Tensor<T>*> collect_learnable(NetParams<T>& p, const std::vector<int>& counts);

template <class T>
std::uint64_t params_digest(const NetParams<T>& p, const std::vector<int>& counts,
                            bool include_bn_state = true);

template <class T>
std::size_t param_count(const NetParams<T>& p, const std::vector<int>& counts);

// mirror with all tensors zeroed, same shapes (gradients, velocity)
template <class T>
NetParams<T> zeros_like(const NetParams<T>& p);

// forward multiply-accumulates of conv + fc layers for one sample; pooling,
// batch norm and relu excluded
std::uint64_t flops_macs(const SearchSpaceSpec& spec, const LayerAssignment& a);

}  // namespace las
