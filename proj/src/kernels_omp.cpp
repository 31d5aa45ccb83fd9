// OpenMP production kernels. Parallelism is only ever over independent
// outputs (each output element is written by exactly one thread, with the
// same inner accumulation order as the serial reference), so results are
// bitwise identical to kern::ref at any thread count. Weight gradients
// parallelize over weight indices, input gradients gather rather than
// scatter, and max-pool backward owns whole (n, c) planes per thread.

#include "las/kernels.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace las::kern {

namespace {

// ceiling division for a positive divisor; int division truncating toward
// zero already is the ceiling when the numerator is negative
inline int ceil_div(int a, int b) { return a >= 0 ? (a + b - 1) / b : a / b; }

}  // namespace

// Row-vectorized: the inner loop runs over contiguous output columns while
// the (ic, ky, kx) accumulation loops stay outside, so every output element
// still receives its terms in exactly the reference order.
template <class T>
void conv2d_forward(const T* x, int n, int ci, int h, int w,
                    const T* wt, int co, int kh, int kw,
                    int stride, int pad, T* y) {
    const int oh = (h + 2 * pad - kh) / stride + 1;
    const int ow = (w + 2 * pad - kw) / stride + 1;
#pragma omp parallel for collapse(2) schedule(static)
    for (int ni = 0; ni < n; ++ni) {
        for (int oc = 0; oc < co; ++oc) {
            T* yplane = y + (static_cast<std::size_t>(ni) * co + oc) * oh * ow;
            for (int i = 0; i < oh * ow; ++i) yplane[i] = T(0);
            for (int ic = 0; ic < ci; ++ic) {
                const T* xplane = x + (static_cast<std::size_t>(ni) * ci + ic) * h * w;
                const T* wrow = wt + (static_cast<std::size_t>(oc) * ci + ic) * kh * kw;
                for (int ky = 0; ky < kh; ++ky) {
                    const int oy_lo = std::max(0, ceil_div(pad - ky, stride));
                    const int oy_hi = std::min(oh, ceil_div(h + pad - ky, stride));
                    for (int kx = 0; kx < kw; ++kx) {
                        const T ws = wrow[ky * kw + kx];
                        const int ox_lo = std::max(0, ceil_div(pad - kx, stride));
                        const int ox_hi = std::min(ow, ceil_div(w + pad - kx, stride));
                        const int shift = kx - pad;
                        for (int oy = oy_lo; oy < oy_hi; ++oy) {
                            const int iy = oy * stride - pad + ky;
                            const T* xrow = xplane + static_cast<std::size_t>(iy) * w;
                            T* yrow = yplane + static_cast<std::size_t>(oy) * ow;
                            if (stride == 1) {
                                for (int ox = ox_lo; ox < ox_hi; ++ox)
                                    yrow[ox] += ws * xrow[ox + shift];
                            } else {
                                for (int ox = ox_lo; ox < ox_hi; ++ox)
                                    yrow[ox] += ws * xrow[ox * stride + shift];
                            }
                        }
                    }
                }
            }
        }
    }
}

// Scatter within thread-owned (n, ic) planes instead of per-element
// divisibility scans. For a fixed input element the contributing
// (oc, ky, kx) triples still arrive in the reference loop order.
template <class T>
void conv2d_backward_input(const T* dy, int n, int co, int oh, int ow,
                           const T* wt, int ci, int kh, int kw,
                           int stride, int pad, int h, int w, T* dx) {
#pragma omp parallel for collapse(2) schedule(static)
    for (int ni = 0; ni < n; ++ni) {
        for (int ic = 0; ic < ci; ++ic) {
            T* dxplane = dx + (static_cast<std::size_t>(ni) * ci + ic) * h * w;
            for (int i = 0; i < h * w; ++i) dxplane[i] = T(0);
            for (int oc = 0; oc < co; ++oc) {
                const T* dyplane = dy + (static_cast<std::size_t>(ni) * co + oc) * oh * ow;
                const T* wrow = wt + (static_cast<std::size_t>(oc) * ci + ic) * kh * kw;
                for (int ky = 0; ky < kh; ++ky) {
                    const int oy_lo = std::max(0, ceil_div(pad - ky, stride));
                    const int oy_hi = std::min(oh, ceil_div(h + pad - ky, stride));
                    for (int kx = 0; kx < kw; ++kx) {
                        const T ws = wrow[ky * kw + kx];
                        const int ox_lo = std::max(0, ceil_div(pad - kx, stride));
                        const int ox_hi = std::min(ow, ceil_div(w + pad - kx, stride));
                        const int shift = kx - pad;
                        for (int oy = oy_lo; oy < oy_hi; ++oy) {
                            const int iy = oy * stride - pad + ky;
                            T* dxrow = dxplane + static_cast<std::size_t>(iy) * w;
                            const T* dyrow = dyplane + static_cast<std::size_t>(oy) * ow;
                            if (stride == 1) {
                                for (int ox = ox_lo; ox < ox_hi; ++ox)
                                    dxrow[ox + shift] += ws * dyrow[ox];
                            } else {
                                for (int ox = ox_lo; ox < ox_hi; ++ox)
                                    dxrow[ox * stride + shift] += ws * dyrow[ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

// Nine independent accumulator chains for the ubiquitous 3x3 stride-1 pad-1
// case; each weight element still collects its terms in ascending
// (n, oy, ox) order, so the result matches the reference bitwise. Other
// shapes take the generic per-element loop.
template <class T>
void conv2d_backward_weight(const T* dy, int n, int co, int oh, int ow,
                            const T* x, int ci, int h, int w,
                            int kh, int kw, int stride, int pad, T* dw) {
    const bool fast = kh == 3 && kw == 3 && stride == 1 && pad == 1 && ow >= 2 && oh == h && ow == w;
#pragma omp parallel for collapse(2) schedule(static)
    for (int oc = 0; oc < co; ++oc) {
        for (int ic = 0; ic < ci; ++ic) {
            if (fast) {
                T acc[3][3] = {};
                for (int ni = 0; ni < n; ++ni) {
                    const T* dyplane = dy + (static_cast<std::size_t>(ni) * co + oc) * oh * ow;
                    const T* xplane = x + (static_cast<std::size_t>(ni) * ci + ic) * h * w;
                    for (int oy = 0; oy < oh; ++oy) {
                        const T* dyrow = dyplane + static_cast<std::size_t>(oy) * ow;
                        for (int ky = 0; ky < 3; ++ky) {
                            const int iy = oy - 1 + ky;
                            if (iy < 0 || iy >= h) continue;
                            const T* xrow = xplane + static_cast<std::size_t>(iy) * w;
                            // ox = 0 reaches kx = 1, 2 only
                            acc[ky][1] += dyrow[0] * xrow[0];
                            acc[ky][2] += dyrow[0] * xrow[1];
                            for (int ox = 1; ox < ow - 1; ++ox) {
                                const T d = dyrow[ox];
                                acc[ky][0] += d * xrow[ox - 1];
                                acc[ky][1] += d * xrow[ox];
                                acc[ky][2] += d * xrow[ox + 1];
                            }
                            // ox = ow - 1 reaches kx = 0, 1 only
                            acc[ky][0] += dyrow[ow - 1] * xrow[ow - 2];
                            acc[ky][1] += dyrow[ow - 1] * xrow[ow - 1];
                        }
                    }
                }
                T* dwrow = dw + (static_cast<std::size_t>(oc) * ci + ic) * 9;
                for (int ky = 0; ky < 3; ++ky)
                    for (int kx = 0; kx < 3; ++kx) dwrow[ky * 3 + kx] = acc[ky][kx];
                continue;
            }
            for (int ky = 0; ky < kh; ++ky) {
                for (int kx = 0; kx < kw; ++kx) {
                    T acc = T(0);
                    for (int ni = 0; ni < n; ++ni) {
                        for (int oy = 0; oy < oh; ++oy) {
                            const int iy = oy * stride - pad + ky;
                            if (iy < 0 || iy >= h) continue;
                            for (int ox = 0; ox < ow; ++ox) {
                                const int ix = ox * stride - pad + kx;
                                if (ix < 0 || ix >= w) continue;
                                acc += dy[((static_cast<std::size_t>(ni) * co + oc) * oh + oy) * ow + ox] *
                                       x[((static_cast<std::size_t>(ni) * ci + ic) * h + iy) * w + ix];
                            }
                        }
                    }
                    dw[((static_cast<std::size_t>(oc) * ci + ic) * kh + ky) * kw + kx] = acc;
                }
            }
        }
    }
}

template <class T>
void bn_channel_stats(const T* x, int n, int c, int h, int w, T* mean, T* var) {
    const double m = static_cast<double>(n) * h * w;
#pragma omp parallel for schedule(static)
    for (int ch = 0; ch < c; ++ch) {
        double sum = 0.0, sumsq = 0.0;
        for (int ni = 0; ni < n; ++ni) {
            const T* plane = x + (static_cast<std::size_t>(ni) * c + ch) * h * w;
            for (int i = 0; i < h * w; ++i) {
                const double v = static_cast<double>(plane[i]);
                sum += v;
                sumsq += v * v;
            }
        }
        const double mu = sum / m;
        double va = sumsq / m - mu * mu;
        if (va < 0.0) va = 0.0;
        mean[ch] = static_cast<T>(mu);
        var[ch] = static_cast<T>(va);
    }
}

template <class T>
void bn_forward_apply(const T* x, int n, int c, int h, int w,
                      const T* mean, const T* var,
                      const T* gamma, const T* beta, T* y) {
#pragma omp parallel for collapse(2) schedule(static)
    for (int ni = 0; ni < n; ++ni) {
        for (int ch = 0; ch < c; ++ch) {
            const T inv = static_cast<T>(1.0 / std::sqrt(static_cast<double>(var[ch]) + kBnEps));
            const T g = gamma[ch], b = beta[ch], mu = mean[ch];
            const std::size_t base = (static_cast<std::size_t>(ni) * c + ch) * h * w;
            for (int i = 0; i < h * w; ++i)
                y[base + i] = g * ((x[base + i] - mu) * inv) + b;
        }
    }
}

template <class T>
void bn_backward(const T* x, const T* dy, int n, int c, int h, int w,
                 const T* mean, const T* var, const T* gamma,
                 T* dx, T* dgamma, T* dbeta) {
    const double m = static_cast<double>(n) * h * w;
#pragma omp parallel for schedule(static)
    for (int ch = 0; ch < c; ++ch) {
        const double inv = 1.0 / std::sqrt(static_cast<double>(var[ch]) + kBnEps);
        const double mu = static_cast<double>(mean[ch]);
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (int ni = 0; ni < n; ++ni) {
            const std::size_t base = (static_cast<std::size_t>(ni) * c + ch) * h * w;
            for (int i = 0; i < h * w; ++i) {
                const double g = static_cast<double>(dy[base + i]);
                const double xhat = (static_cast<double>(x[base + i]) - mu) * inv;
                sum_dy += g;
                sum_dy_xhat += g * xhat;
            }
        }
        dgamma[ch] = static_cast<T>(sum_dy_xhat);
        dbeta[ch] = static_cast<T>(sum_dy);
        const double ga = static_cast<double>(gamma[ch]);
        for (int ni = 0; ni < n; ++ni) {
            const std::size_t base = (static_cast<std::size_t>(ni) * c + ch) * h * w;
            for (int i = 0; i < h * w; ++i) {
                const double g = static_cast<double>(dy[base + i]);
                const double xhat = (static_cast<double>(x[base + i]) - mu) * inv;
                dx[base + i] = static_cast<T>(ga * inv * (g - sum_dy / m - xhat * sum_dy_xhat / m));
            }
        }
    }
}

template <class T>
void relu_forward(const T* x, std::size_t size, T* y) {
    const auto n = static_cast<std::ptrdiff_t>(size);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
}

template <class T>
void relu_backward(const T* y, const T* dy, std::size_t size, T* dx) {
    const auto n = static_cast<std::ptrdiff_t>(size);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) dx[i] = y[i] > T(0) ? dy[i] : T(0);
}

template <class T>
void maxpool2_forward(const T* x, int n, int c, int h, int w, T* y, int* idx) {
    const int oh = h / 2, ow = w / 2;
#pragma omp parallel for collapse(2) schedule(static)
    for (int ni = 0; ni < n; ++ni) {
        for (int ch = 0; ch < c; ++ch) {
            const std::size_t in_base = (static_cast<std::size_t>(ni) * c + ch) * h * w;
            const std::size_t out_base = (static_cast<std::size_t>(ni) * c + ch) * oh * ow;
            for (int oy = 0; oy < oh; ++oy) {
                for (int ox = 0; ox < ow; ++ox) {
                    std::size_t best = in_base + static_cast<std::size_t>(2 * oy) * w + 2 * ox;
                    T best_v = x[best];
                    for (int ky = 0; ky < 2; ++ky) {
                        for (int kx = 0; kx < 2; ++kx) {
                            const std::size_t p =
                                in_base + static_cast<std::size_t>(2 * oy + ky) * w + 2 * ox + kx;
                            if (x[p] > best_v) {
                                best_v = x[p];
                                best = p;
                            }
                        }
                    }
                    y[out_base + static_cast<std::size_t>(oy) * ow + ox] = best_v;
                    idx[out_base + static_cast<std::size_t>(oy) * ow + ox] = static_cast<int>(best);
                }
            }
        }
    }
}

template <class T>
void maxpool2_backward(const T* dy, const int* idx, int n, int c, int h, int w, T* dx) {
    const int oh = h / 2, ow = w / 2;
    // window offsets never cross a (n, c) plane, so each thread owns the
    // planes it scatters into
#pragma omp parallel for collapse(2) schedule(static)
    for (int ni = 0; ni < n; ++ni) {
        for (int ch = 0; ch < c; ++ch) {
            const std::size_t in_base = (static_cast<std::size_t>(ni) * c + ch) * h * w;
            const std::size_t out_base = (static_cast<std::size_t>(ni) * c + ch) * oh * ow;
            for (int i = 0; i < h * w; ++i) dx[in_base + i] = T(0);
            for (int i = 0; i < oh * ow; ++i)
                dx[static_cast<std::size_t>(idx[out_base + i])] += dy[out_base + i];
        }
    }
}

template <class T>
void fc_forward(const T* x, int n, int d, const T* wt, const T* b, int o, T* y) {
#pragma omp parallel for collapse(2) schedule(static)
    for (int ni = 0; ni < n; ++ni) {
        for (int oi = 0; oi < o; ++oi) {
            T acc = b[oi];
            const T* xr = x + static_cast<std::size_t>(ni) * d;
            const T* wr = wt + static_cast<std::size_t>(oi) * d;
            for (int di = 0; di < d; ++di) acc += xr[di] * wr[di];
            y[static_cast<std::size_t>(ni) * o + oi] = acc;
        }
    }
}

template <class T>
void fc_backward(const T* dy, const T* x, const T* wt, int n, int d, int o,
                 T* dx, T* dw, T* db) {
#pragma omp parallel for collapse(2) schedule(static)
    for (int ni = 0; ni < n; ++ni) {
        for (int di = 0; di < d; ++di) {
            T acc = T(0);
            for (int oi = 0; oi < o; ++oi)
                acc += dy[static_cast<std::size_t>(ni) * o + oi] * wt[static_cast<std::size_t>(oi) * d + di];
            dx[static_cast<std::size_t>(ni) * d + di] = acc;
        }
    }
#pragma omp parallel for schedule(static)
    for (int oi = 0; oi < o; ++oi) {
        for (int di = 0; di < d; ++di) {
            T acc = T(0);
            for (int ni = 0; ni < n; ++ni)
                acc += dy[static_cast<std::size_t>(ni) * o + oi] * x[static_cast<std::size_t>(ni) * d + di];
            dw[static_cast<std::size_t>(oi) * d + di] = acc;
        }
        T acc = T(0);
        for (int ni = 0; ni < n; ++ni) acc += dy[static_cast<std::size_t>(ni) * o + oi];
        db[oi] = acc;
    }
}

template <class T>
void add_inplace(T* y, const T* x, std::size_t size) {
    const auto n = static_cast<std::ptrdiff_t>(size);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) y[i] += x[i];
}

template <class T>
double softmax_xent_forward(const T* logits, const std::uint16_t* labels,
                            int n, int c, T* probs) {
    std::vector<double> row_loss(static_cast<std::size_t>(n));
    bool bad_label = false;
#pragma omp parallel for schedule(static) reduction(|| : bad_label)
    for (int ni = 0; ni < n; ++ni) {
        if (labels[ni] >= c) {
            bad_label = true;
            continue;
        }
        const T* row = logits + static_cast<std::size_t>(ni) * c;
        T* prow = probs + static_cast<std::size_t>(ni) * c;
        double mx = static_cast<double>(row[0]);
        for (int ci = 1; ci < c; ++ci)
            if (static_cast<double>(row[ci]) > mx) mx = static_cast<double>(row[ci]);
        double sum = 0.0;
        for (int ci = 0; ci < c; ++ci) {
            const double e = std::exp(static_cast<double>(row[ci]) - mx);
            prow[ci] = static_cast<T>(e);
            sum += e;
        }
        const double inv = 1.0 / sum;
        for (int ci = 0; ci < c; ++ci) prow[ci] = static_cast<T>(static_cast<double>(prow[ci]) * inv);
        row_loss[static_cast<std::size_t>(ni)] =
            std::log(sum) - (static_cast<double>(row[labels[ni]]) - mx);
    }
    if (bad_label) throw std::out_of_range("softmax: label out of range");
    double total = 0.0;
    for (int ni = 0; ni < n; ++ni) total += row_loss[static_cast<std::size_t>(ni)];
    return total / n;
}

template <class T>
void softmax_xent_backward(const T* probs, const std::uint16_t* labels,
                           int n, int c, T* dlogits) {
    const T invn = T(1) / static_cast<T>(n);
#pragma omp parallel for schedule(static)
    for (int ni = 0; ni < n; ++ni) {
        for (int ci = 0; ci < c; ++ci) {
            const std::size_t p = static_cast<std::size_t>(ni) * c + ci;
            const T onehot = (ci == labels[ni]) ? T(1) : T(0);
            dlogits[p] = (probs[p] - onehot) * invn;
        }
    }
}

template <class T>
void sgd_nesterov_step(T* w, T* g, T* v, std::size_t size, T lr, T mu, T wd) {
    const auto n = static_cast<std::ptrdiff_t>(size);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const T gi = g[i] + wd * w[i];
        const T vi = mu * v[i] + gi;
        v[i] = vi;
        w[i] -= lr * (gi + mu * vi);
    }
}

#define LAS_INSTANTIATE_KERN(T)                                                                \
    template void conv2d_forward<T>(const T*, int, int, int, int, const T*, int, int, int,    \
                                    int, int, T*);                                            \
    template void conv2d_backward_input<T>(const T*, int, int, int, int, const T*, int, int,  \
                                           int, int, int, int, int, T*);                      \
    template void conv2d_backward_weight<T>(const T*, int, int, int, int, const T*, int, int, \
                                            int, int, int, int, int, T*);                     \
    template void bn_channel_stats<T>(const T*, int, int, int, int, T*, T*);                  \
    template void bn_forward_apply<T>(const T*, int, int, int, int, const T*, const T*,       \
                                      const T*, const T*, T*);                                \
    template void bn_backward<T>(const T*, const T*, int, int, int, int, const T*, const T*,  \
                                 const T*, T*, T*, T*);                                       \
    template void relu_forward<T>(const T*, std::size_t, T*);                                 \
    template void relu_backward<T>(const T*, const T*, std::size_t, T*);                      \
    template void maxpool2_forward<T>(const T*, int, int, int, int, T*, int*);                \
    template void maxpool2_backward<T>(const T*, const int*, int, int, int, int, T*);         \
    template void fc_forward<T>(const T*, int, int, const T*, const T*, int, T*);             \
    template void fc_backward<T>(const T*, const T*, const T*, int, int, int, T*, T*, T*);    \
    template void add_inplace<T>(T*, const T*, std::size_t);                                  \
    template double softmax_xent_forward<T>(const T*, const std::uint16_t*, int, int, T*);    \
    template void softmax_xent_backward<T>(const T*, const std::uint16_t*, int, int, T*);     \
    template void sgd_nesterov_step<T>(T*, T*, T*, std::size_t, T, T, T);

LAS_INSTANTIATE_KERN(float)
LAS_INSTANTIATE_KERN(double)

}  // namespace las::kern
