#pragma once

#include <cstddef>
#include <cstdint>

namespace las::kern {

inline constexpr double kBnEps = 1e-5;

// Dense NCHW kernels. Two implementations share these signatures: the
// OpenMP-parallel production path (this namespace) and the serial reference
// (kern::ref). Both use the same per-output accumulation order, so their
// results are bitwise identical at any thread count; tests assert that.
//
// Convolution weights are [co][ci][kh][kw], no bias (batch norm follows every
// convolution). Gradient kernels are gather-formulated: each thread owns the
// outputs it writes, never a shared accumulator.

template <class T>
void conv2d_forward(const T* x, int n, int ci, int h, int w,
                    const T* wt, int co, int kh, int kw,
                    int stride, int pad, T* y);

template <class T>
void conv2d_backward_input(const T* dy, int n, int co, int oh, int ow,
                           const T* wt, int ci, int kh, int kw,
                           int stride, int pad, int h, int w, T* dx);

template <class T>
void conv2d_backward_weight(const T* dy, int n, int co, int oh, int ow,
                            const T* x, int ci, int h, int w,
                            int kh, int kw, int stride, int pad, T* dw);

// per-channel mean and biased variance over (n, h, w); double accumulators
template <class T>
void bn_channel_stats(const T* x, int n, int c, int h, int w, T* mean, T* var);

template <class T>
void bn_forward_apply(const T* x, int n, int c, int h, int w,
                      const T* mean, const T* var,
                      const T* gamma, const T* beta, T* y);

// gradients through the batch statistics; mean/var must be the ones used in
// the forward pass
template <class T>
void bn_backward(const T* x, const T* dy, int n, int c, int h, int w,
                 const T* mean, const T* var, const T* gamma,
                 T* dx, T* dgamma, T* dbeta);

template <class T>
void relu_forward(const T* x, std::size_t size, T* y);

// mask comes from the saved output: y > 0 iff the input was positive
template <class T>
void relu_backward(const T* y, const T* dy, std::size_t size, T* dx);

// 2x2 window, stride 2, floor semantics for odd extents; idx holds the flat
// offset of each window argmax into x (first scanned wins ties)
template <class T>
void maxpool2_forward(const T* x, int n, int c, int h, int w, T* y, int* idx);

// zeroes dx, then routes dy through the saved argmax offsets
template <class T>
void maxpool2_backward(const T* dy, const int* idx, int n, int c, int h, int w, T* dx);

// x [n][d], w [o][d], b [o], y [n][o]
template <class T>
void fc_forward(const T* x, int n, int d, const T* wt, const T* b, int o, T* y);

template <class T>
void fc_backward(const T* dy, const T* x, const T* wt, int n, int d, int o,
                 T* dx, T* dw, T* db);

template <class T>
void add_inplace(T* y, const T* x, std::size_t size);

// mean softmax cross-entropy over the batch; fills probs, returns the loss.
// Throws std::out_of_range on a label >= c.
template <class T>
double softmax_xent_forward(const T* logits, const std::uint16_t* labels,
                            int n, int c, T* probs);

template <class T>
void softmax_xent_backward(const T* probs, const std::uint16_t* labels,
                           int n, int c, T* dlogits);

// fused SGD step with Nesterov momentum and L2 weight decay:
//   g += wd * w;  v = mu * v + g;  w -= lr * (g + mu * v)
template <class T>
void sgd_nesterov_step(T* w, T* g, T* v, std::size_t size,
                       T lr, T mu, T wd);

namespace ref {

template <class T>
void conv2d_forward(const T* x, int n, int ci, int h, int w,
                    const T* wt, int co, int kh, int kw,
                    int stride, int pad, T* y);

template <class T>
void conv2d_backward_input(const T* dy, int n, int co, int oh, int ow,
                           const T* wt, int ci, int kh, int kw,
                           int stride, int pad, int h, int w, T* dx);

template <class T>
void conv2d_backward_weight(const T* dy, int n, int co, int oh, int ow,
                            const T* x, int ci, int h, int w,
                            int kh, int kw, int stride, int pad, T* dw);

template <class T>
void bn_channel_stats(const T* x, int n, int c, int h, int w, T* mean, T* var);

template <class T>
void bn_forward_apply(const T* x, int n, int c, int h, int w,
                      const T* mean, const T* var,
                      const T* gamma, const T* beta, T* y);

template <class T>
void bn_backward(const T* x, const T* dy, int n, int c, int h, int w,
                 const T* mean, const T* var, const T* gamma,
                 T* dx, T* dgamma, T* dbeta);

template <class T>
void relu_forward(const T* x, std::size_t size, T* y);

template <class T>
void relu_backward(const T* y, const T* dy, std::size_t size, T* dx);

template <class T>
void maxpool2_forward(const T* x, int n, int c, int h, int w, T* y, int* idx);

template <class T>
void maxpool2_backward(const T* dy, const int* idx, int n, int c, int h, int w, T* dx);

template <class T>
void fc_forward(const T* x, int n, int d, const T* wt, const T* b, int o, T* y);

template <class T>
void fc_backward(const T* dy, const T* x, const T* wt, int n, int d, int o,
                 T* dx, T* dw, T* db);

template <class T>
void add_inplace(T* y, const T* x, std::size_t size);

template <class T>
double softmax_xent_forward(const T* logits, const std::uint16_t* labels,
                            int n, int c, T* probs);

template <class T>
void softmax_xent_backward(const T* probs, const std::uint16_t* labels,
                           int n, int c, T* dlogits);

template <class T>
void sgd_nesterov_step(T* w, T* g, T* v, std::size_t size,
                       T lr, T mu, T wd);

}  // namespace ref

}  // namespace las::kern
