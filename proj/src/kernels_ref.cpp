// Serial reference kernels. Kept deliberately naive; the OpenMP kernels in
// kernels_omp.cpp must reproduce these bitwise (same per-output accumulation
// order), which the kernel tests and the bench tool both rely on.

#include "las/kernels.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace las::kern::ref {

template <class T>
void conv2d_forward(const T* x, int n, int ci, int h, int w,
                    const T* wt, int co, int kh, int kw,
                    int stride, int pad, T* y) {
    const int oh = (h + 2 * pad - kh) / stride + 1;
    const int ow = (w + 2 * pad - kw) / stride + 1;
    for (int ni = 0; ni < n; ++ni) {
        for (int oc = 0; oc < co; ++oc) {
            for (int oy = 0; oy < oh; ++oy) {
                for (int ox = 0; ox < ow; ++ox) {
                    T acc = T(0);
                    for (int ic = 0; ic < ci; ++ic) {
                        for (int ky = 0; ky < kh; ++ky) {
                            const int iy = oy * stride - pad + ky;
                            if (iy < 0 || iy >= h) continue;
                            for (int kx = 0; kx < kw; ++kx) {
                                const int ix = ox * stride - pad + kx;
                                if (ix < 0 || ix >= w) continue;
                                acc += x[((static_cast<std::size_t>(ni) * ci + ic) * h + iy) * w + ix] *
                                       wt[((static_cast<std::size_t>(oc) * ci + ic) * kh + ky) * kw + kx];
                            }
                        }
                    }
                    y[((static_cast<std::size_t>(ni) * co + oc) * oh + oy) * ow + ox] = acc;
                }
            }
        }
    }
}

template <class T>
void conv2d_backward_input(const T* dy, int n, int co, int oh, int ow,
                           const T* wt, int ci, int kh, int kw,
                           int stride, int pad, int h, int w, T* dx) {
    for (int ni = 0; ni < n; ++ni) {
        for (int ic = 0; ic < ci; ++ic) {
            for (int iy = 0; iy < h; ++iy) {
                for (int ix = 0; ix < w; ++ix) {
                    T acc = T(0);
                    for (int oc = 0; oc < co; ++oc) {
                        for (int ky = 0; ky < kh; ++ky) {
                            const int ty = iy + pad - ky;
                            if (ty < 0 || ty % stride != 0) continue;
                            const int oy = ty / stride;
                            if (oy >= oh) continue;
                            for (int kx = 0; kx < kw; ++kx) {
                                const int tx = ix + pad - kx;
                                if (tx < 0 || tx % stride != 0) continue;
                                const int ox = tx / stride;
                                if (ox >= ow) continue;
                                acc += dy[((static_cast<std::size_t>(ni) * co + oc) * oh + oy) * ow + ox] *
                                       wt[((static_cast<std::size_t>(oc) * ci + ic) * kh + ky) * kw + kx];
                            }
                        }
                    }
                    dx[((static_cast<std::size_t>(ni) * ci + ic) * h + iy) * w + ix] = acc;
                }
            }
        }
    }
}

template <class T>
void conv2d_backward_weight(const T* dy, int n, int co, int oh, int ow,
                            const T* x, int ci, int h, int w,
                            int kh, int kw, int stride, int pad, T* dw) {
    for (int oc = 0; oc < co; ++oc) {
        for (int ic = 0; ic < ci; ++ic) {
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
    for (std::size_t i = 0; i < size; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
}

template <class T>
void relu_backward(const T* y, const T* dy, std::size_t size, T* dx) {
    for (std::size_t i = 0; i < size; ++i) dx[i] = y[i] > T(0) ? dy[i] : T(0);
}

template <class T>
void maxpool2_forward(const T* x, int n, int c, int h, int w, T* y, int* idx) {
    const int oh = h / 2, ow = w / 2;
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
    const std::size_t in_size = static_cast<std::size_t>(n) * c * h * w;
    for (std::size_t i = 0; i < in_size; ++i) dx[i] = T(0);
    const std::size_t out_size = static_cast<std::size_t>(n) * c * oh * ow;
    for (std::size_t i = 0; i < out_size; ++i)
        dx[static_cast<std::size_t>(idx[i])] += dy[i];
}

template <class T>
void fc_forward(const T* x, int n, int d, const T* wt, const T* b, int o, T* y) {
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
    for (int ni = 0; ni < n; ++ni) {
        for (int di = 0; di < d; ++di) {
            T acc = T(0);
            for (int oi = 0; oi < o; ++oi)
                acc += dy[static_cast<std::size_t>(ni) * o + oi] * wt[static_cast<std::size_t>(oi) * d + di];
            dx[static_cast<std::size_t>(ni) * d + di] = acc;
        }
    }
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
    for (std::size_t i = 0; i < size; ++i) y[i] += x[i];
}

template <class T>
double softmax_xent_forward(const T* logits, const std::uint16_t* labels,
                            int n, int c, T* probs) {
    std::vector<double> row_loss(static_cast<std::size_t>(n));
    for (int ni = 0; ni < n; ++ni) {
        if (labels[ni] >= c)
            throw std::out_of_range("softmax: label out of range");
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
    double total = 0.0;
    for (int ni = 0; ni < n; ++ni) total += row_loss[static_cast<std::size_t>(ni)];
    return total / n;
}

template <class T>
void softmax_xent_backward(const T* probs, const std::uint16_t* labels,
                           int n, int c, T* dlogits) {
    const T invn = T(1) / static_cast<T>(n);
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
    for (std::size_t i = 0; i < size; ++i) {
        const T gi = g[i] + wd * w[i];
        const T vi = mu * v[i] + gi;
        v[i] = vi;
        w[i] -= lr * (gi + mu * vi);
    }
}

#define LAS_INSTANTIATE_REF(T)                                                                 \
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

LAS_INSTANTIATE_REF(float)
LAS_INSTANTIATE_REF(double)

}  // namespace las::kern::ref
