#include "las/engine.hpp"

#include <cmath>

#include "las/kernels.hpp"

namespace las {

namespace {

enum class Mode { train, eval, calibrate };

template <class T>
Tensor<T> conv_forward(const Conv<T>& c, const Tensor<T>& x) {
    const int n = x.shape[0], ci = x.shape[1], h = x.shape[2], w = x.shape[3];
    const int co = c.w.shape[0], k = c.w.shape[2];
    const int oh = (h + 2 * c.pad - k) / c.stride + 1;
    const int ow = (w + 2 * c.pad - k) / c.stride + 1;
    Tensor<T> y({n, co, oh, ow});
    kern::conv2d_forward(x.data(), n, ci, h, w, c.w.data(), co, k, k, c.stride, c.pad, y.data());
    return y;
}

template <class T>
struct BnPass {
    Mode mode;
    double momentum;
    std::vector<BnAccum>* accum;
    std::size_t accum_pos = 0;

    Tensor<T> run(const Bn<T>& bn, Bn<T>* mut, const Tensor<T>& z, Tensor<T>& m_cache,
                  Tensor<T>& v_cache) {
        const int n = z.shape[0], c = z.shape[1], h = z.shape[2], w = z.shape[3];
        Tensor<T> m({c}), v({c});
        if (mode == Mode::eval) {
            m = bn.rmean;
            v = bn.rvar;
        } else {
            kern::bn_channel_stats(z.data(), n, c, h, w, m.data(), v.data());
            if (mode == Mode::train && mut) {
                for (int i = 0; i < c; ++i) {
                    mut->rmean.v[static_cast<std::size_t>(i)] = static_cast<T>(
                        (1.0 - momentum) * mut->rmean.v[static_cast<std::size_t>(i)] +
                        momentum * m.v[static_cast<std::size_t>(i)]);
                    mut->rvar.v[static_cast<std::size_t>(i)] = static_cast<T>(
                        (1.0 - momentum) * mut->rvar.v[static_cast<std::size_t>(i)] +
                        momentum * v.v[static_cast<std::size_t>(i)]);
                }
            }
            if (mode == Mode::calibrate && accum) {
                if (accum_pos == accum->size()) {
                    BnAccum a;
                    a.sum.assign(static_cast<std::size_t>(c), 0.0);
                    a.sumsq.assign(static_cast<std::size_t>(c), 0.0);
                    accum->push_back(std::move(a));
                }
                BnAccum& a = (*accum)[accum_pos];
                const double cnt = static_cast<double>(n) * h * w;
                a.count += cnt;
                for (int i = 0; i < c; ++i) {
                    const double mu = static_cast<double>(m.v[static_cast<std::size_t>(i)]);
                    const double va = static_cast<double>(v.v[static_cast<std::size_t>(i)]);
                    a.sum[static_cast<std::size_t>(i)] += cnt * mu;
                    a.sumsq[static_cast<std::size_t>(i)] += cnt * (va + mu * mu);
                }
            }
        }
        if (mode != Mode::eval) ++accum_pos;
        Tensor<T> y(z.shape);
        kern::bn_forward_apply(z.data(), n, c, h, w, m.data(), v.data(), bn.gamma.data(),
                               bn.beta.data(), y.data());
        m_cache = std::move(m);
        v_cache = std::move(v);
        return y;
    }
};

template <class T>
Tensor<T> relu(const Tensor<T>& x) {
    Tensor<T> y(x.shape);
    kern::relu_forward(x.data(), x.size(), y.data());
    return y;
}

// conv -> bn -> relu; used by the stem and by plain cells
template <class T>
Tensor<T> conv_bn_relu(const Conv<T>& conv, const Bn<T>& bn, Bn<T>* mut_bn, BnPass<T>& bp,
                       CellCache<T>& cc, const Tensor<T>& x) {
    cc.x = x;
    cc.z1 = conv_forward(conv, x);
    Tensor<T> h1 = bp.run(bn, mut_bn, cc.z1, cc.m1, cc.v1);
    cc.out = relu(h1);
    return cc.out;
}

template <class T>
Tensor<T> cell_forward(const Cell<T>& cell, Cell<T>* mut, BnPass<T>& bp, CellCache<T>& cc,
                       const Tensor<T>& x) {
    if (!cell.has_second)
        return conv_bn_relu(cell.conv1, cell.bn1, mut ? &mut->bn1 : nullptr, bp, cc, x);
    cc.x = x;
    cc.z1 = conv_forward(cell.conv1, x);
    Tensor<T> h1 = bp.run(cell.bn1, mut ? &mut->bn1 : nullptr, cc.z1, cc.m1, cc.v1);
    cc.r1 = relu(h1);
    cc.z2 = conv_forward(cell.conv2, cc.r1);
    Tensor<T> h2 = bp.run(cell.bn2, mut ? &mut->bn2 : nullptr, cc.z2, cc.m2, cc.v2);
    if (cell.has_proj) {
        cc.zp = conv_forward(cell.proj, x);
        Tensor<T> sp = bp.run(cell.proj_bn, mut ? &mut->proj_bn : nullptr, cc.zp, cc.mp, cc.vp);
        kern::add_inplace(h2.data(), sp.data(), h2.size());
    } else {
        kern::add_inplace(h2.data(), x.data(), h2.size());
    }
    cc.out = relu(h2);
    return cc.out;
}

template <class T>
Tensor<T> maxpool(const Tensor<T>& x, Tensor<int>& idx) {
    const int n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3];
    Tensor<T> y({n, c, h / 2, w / 2});
    idx = Tensor<int>({n, c, h / 2, w / 2});
    kern::maxpool2_forward(x.data(), n, c, h, w, y.data(), idx.data());
    return y;
}

template <class T>
Tensor<T> run_forward(const SearchSpaceSpec& spec, const NetParams<T>& p, NetParams<T>* mut,
                      const LayerAssignment& a, const Tensor<T>& x0, Mode mode,
                      double bn_momentum, ForwardCache<T>& cache, std::vector<BnAccum>* accum) {
    if (x0.shape.size() != 4 || x0.shape[1] != spec.input_shape[0] ||
        x0.shape[2] != spec.input_shape[1] || x0.shape[3] != spec.input_shape[2])
        throw std::invalid_argument("forward: batch shape does not match the spec input shape");
    if (a.size() != spec.n)
        throw std::invalid_argument("forward: assignment does not match the group count");
    const int batch = x0.shape[0];
    if (batch < 1) throw std::invalid_argument("forward: empty batch");

    const auto check_finite = [](const Tensor<T>& t, const std::string& where) {
        for (const T v : t.v)
            if (!std::isfinite(static_cast<double>(v)))
                throw NumericError("forward: non-finite activations at " + where);
    };

    BnPass<T> bp{mode, bn_momentum, accum};
    Tensor<T> cur = x0;
    if (p.has_stem) {
        cur = conv_bn_relu(p.stem_conv, p.stem_bn, mut ? &mut->stem_bn : nullptr, bp, cache.stem,
                           cur);
        check_finite(cur, "stem");
    }
    cache.groups.assign(static_cast<std::size_t>(spec.n), GroupCache<T>{});
    for (int g = 0; g < spec.n; ++g) {
        auto& gc = cache.groups[static_cast<std::size_t>(g)];
        if (a[g] > static_cast<int>(p.groups[static_cast<std::size_t>(g)].size()))
            throw std::invalid_argument("forward: assignment exceeds available cells in group " +
                                        std::to_string(g + 1));
        gc.cells.assign(static_cast<std::size_t>(a[g]), CellCache<T>{});
        for (int j = 0; j < a[g]; ++j) {
            const auto& cell = p.groups[static_cast<std::size_t>(g)][static_cast<std::size_t>(j)];
            Cell<T>* mcell =
                mut ? &mut->groups[static_cast<std::size_t>(g)][static_cast<std::size_t>(j)]
                    : nullptr;
            cur = cell_forward(cell, mcell, bp, gc.cells[static_cast<std::size_t>(j)], cur);
            check_finite(cur,
                         "group " + std::to_string(g + 1) + " cell " + std::to_string(j + 1));
        }
        if (spec.cell_kind == Family::plain) cur = maxpool(cur, gc.pool_idx);
    }

    // flatten; NCHW keeps each sample contiguous
    const int d = cur.shape[1] * cur.shape[2] * cur.shape[3];
    Tensor<T> flat({batch, d});
    flat.v = std::move(cur.v);

    cache.fcs.assign(p.classifier.size(), FcCache<T>{});
    for (std::size_t i = 0; i < p.classifier.size(); ++i) {
        const auto& fc = p.classifier[i];
        auto& fcc = cache.fcs[i];
        fcc.x = flat;
        Tensor<T> z({batch, fc.w.shape[0]});
        kern::fc_forward(flat.data(), batch, fc.w.shape[1], fc.w.data(), fc.b.data(),
                         fc.w.shape[0], z.data());
        fcc.z = z;
        if (i + 1 < p.classifier.size()) {
            flat = relu(z);
        } else {
            flat = std::move(z);
        }
    }
    cache.logits = flat;
    check_finite(cache.logits, "logits");
    return cache.logits;
}

}  // namespace

template <class T>
Tensor<T> forward_train(const SearchSpaceSpec& spec, NetParams<T>& p, const LayerAssignment& a,
                        const Tensor<T>& x, double bn_momentum, ForwardCache<T>& cache) {
    return run_forward<T>(spec, p, &p, a, x, Mode::train, bn_momentum, cache, nullptr);
}

template <class T>
Tensor<T> forward_eval(const SearchSpaceSpec& spec, const NetParams<T>& p,
                       const LayerAssignment& a, const Tensor<T>& x) {
    ForwardCache<T> cache;
    return run_forward<T>(spec, p, nullptr, a, x, Mode::eval, 0.0, cache, nullptr);
}

template <class T>
Tensor<T> forward_calibrate(const SearchSpaceSpec& spec, const NetParams<T>& p,
                            const LayerAssignment& a, const Tensor<T>& x,
                            std::vector<BnAccum>& accum) {
    ForwardCache<T> cache;
    return run_forward<T>(spec, p, nullptr, a, x, Mode::calibrate, 0.0, cache, &accum);
}

namespace {

template <class T>
Tensor<T> conv_backward(const Conv<T>& c, const Tensor<T>& x, const Tensor<T>& dy, Tensor<T>& dw) {
    const int n = x.shape[0], ci = x.shape[1], h = x.shape[2], w = x.shape[3];
    const int co = dy.shape[1], oh = dy.shape[2], ow = dy.shape[3];
    const int k = c.w.shape[2];
    dw = Tensor<T>(c.w.shape);
    kern::conv2d_backward_weight(dy.data(), n, co, oh, ow, x.data(), ci, h, w, k, k, c.stride,
                                 c.pad, dw.data());
    Tensor<T> dx(x.shape);
    kern::conv2d_backward_input(dy.data(), n, co, oh, ow, c.w.data(), ci, k, k, c.stride, c.pad,
                                h, w, dx.data());
    return dx;
}

template <class T>
Tensor<T> bn_backward(const Bn<T>& bn, const Tensor<T>& z, const Tensor<T>& m, const Tensor<T>& v,
                      const Tensor<T>& dy, Bn<T>& grad) {
    const int n = z.shape[0], c = z.shape[1], h = z.shape[2], w = z.shape[3];
    grad.gamma = Tensor<T>({c});
    grad.beta = Tensor<T>({c});
    Tensor<T> dx(z.shape);
    kern::bn_backward(z.data(), dy.data(), n, c, h, w, m.data(), v.data(), bn.gamma.data(),
                      dx.data(), grad.gamma.data(), grad.beta.data());
    return dx;
}

template <class T>
Tensor<T> relu_backward_t(const Tensor<T>& y, const Tensor<T>& dy) {
    Tensor<T> dx(y.shape);
    kern::relu_backward(y.data(), dy.data(), y.size(), dx.data());
    return dx;
}

// backward through conv -> bn -> relu
template <class T>
Tensor<T> conv_bn_relu_backward(const Conv<T>& conv, const Bn<T>& bn, const CellCache<T>& cc,
                                const Tensor<T>& dout, Conv<T>& dconv, Bn<T>& dbn) {
    Tensor<T> dh1 = relu_backward_t(cc.out, dout);
    Tensor<T> dz1 = bn_backward(bn, cc.z1, cc.m1, cc.v1, dh1, dbn);
    return conv_backward(conv, cc.x, dz1, dconv.w);
}

template <class T>
Tensor<T> cell_backward(const Cell<T>& cell, const CellCache<T>& cc, const Tensor<T>& dout,
                        Cell<T>& grad) {
    if (!cell.has_second)
        return conv_bn_relu_backward(cell.conv1, cell.bn1, cc, dout, grad.conv1, grad.bn1);
    Tensor<T> dsum = relu_backward_t(cc.out, dout);
    Tensor<T> dz2 = bn_backward(cell.bn2, cc.z2, cc.m2, cc.v2, dsum, grad.bn2);
    Tensor<T> dr1 = conv_backward(cell.conv2, cc.r1, dz2, grad.conv2.w);
    Tensor<T> dh1 = relu_backward_t(cc.r1, dr1);
    Tensor<T> dz1 = bn_backward(cell.bn1, cc.z1, cc.m1, cc.v1, dh1, grad.bn1);
    Tensor<T> dx = conv_backward(cell.conv1, cc.x, dz1, grad.conv1.w);
    if (cell.has_proj) {
        Tensor<T> dzp = bn_backward(cell.proj_bn, cc.zp, cc.mp, cc.vp, dsum, grad.proj_bn);
        Tensor<T> dxp = conv_backward(cell.proj, cc.x, dzp, grad.proj.w);
        kern::add_inplace(dx.data(), dxp.data(), dx.size());
    } else {
        kern::add_inplace(dx.data(), dsum.data(), dx.size());
    }
    return dx;
}

}  // namespace

template <class T>
void net_backward(const SearchSpaceSpec& spec, const NetParams<T>& p, const LayerAssignment& a,
                  const ForwardCache<T>& cache, const Tensor<T>& dlogits, NetParams<T>& grads) {
    const int batch = dlogits.shape[0];

    // classifier, last to first
    Tensor<T> d = dlogits;
    for (std::size_t i = p.classifier.size(); i-- > 0;) {
        const auto& fc = p.classifier[i];
        const auto& fcc = cache.fcs[i];
        if (i + 1 < p.classifier.size()) d = relu_backward_t(fcc.z, d);
        auto& gfc = grads.classifier[i];
        gfc.w = Tensor<T>(fc.w.shape);
        gfc.b = Tensor<T>(fc.b.shape);
        Tensor<T> dx({batch, fc.w.shape[1]});
        kern::fc_backward(d.data(), fcc.x.data(), fc.w.data(), batch, fc.w.shape[1],
                          fc.w.shape[0], dx.data(), gfc.w.data(), gfc.b.data());
        d = std::move(dx);
    }

    // unflatten to the final feature map shape
    {
        const auto& last_group = cache.groups.back();
        const Tensor<T>& feat = spec.cell_kind == Family::plain
                                    ? last_group.cells.back().out  // pre-pool shape
                                    : last_group.cells.back().out;
        std::vector<int> shape = feat.shape;
        if (spec.cell_kind == Family::plain) {
            shape[2] /= 2;
            shape[3] /= 2;
        }
        Tensor<T> df(shape);
        df.v = std::move(d.v);
        d = std::move(df);
    }

    for (int g = spec.n; g-- > 0;) {
        const auto& gc = cache.groups[static_cast<std::size_t>(g)];
        if (spec.cell_kind == Family::plain) {
            const Tensor<T>& pre = gc.cells.back().out;
            Tensor<T> dpre(pre.shape);
            kern::maxpool2_backward(d.data(), gc.pool_idx.data(), pre.shape[0], pre.shape[1],
                                    pre.shape[2], pre.shape[3], dpre.data());
            d = std::move(dpre);
        }
        for (int j = a[g]; j-- > 0;) {
            const auto& cell = p.groups[static_cast<std::size_t>(g)][static_cast<std::size_t>(j)];
            auto& gcell = grads.groups[static_cast<std::size_t>(g)][static_cast<std::size_t>(j)];
            d = cell_backward(cell, gc.cells[static_cast<std::size_t>(j)], d, gcell);
        }
    }

    if (p.has_stem)
        d = conv_bn_relu_backward(p.stem_conv, p.stem_bn, cache.stem, d, grads.stem_conv,
                                  grads.stem_bn);
}

template <class T>
void apply_bn_aggregates(NetParams<T>& p, const LayerAssignment& a,
                         const std::vector<BnAccum>& accum) {
    std::size_t pos = 0;
    auto apply = [&pos, &accum](Bn<T>& bn) {
        if (pos >= accum.size())
            throw std::logic_error("bn aggregates: fewer accumulators than bn layers");
        const BnAccum& acc = accum[pos++];
        const int c = static_cast<int>(bn.rmean.size());
        for (int i = 0; i < c; ++i) {
            const double mu = acc.sum[static_cast<std::size_t>(i)] / acc.count;
            double va = acc.sumsq[static_cast<std::size_t>(i)] / acc.count - mu * mu;
            if (va < 0.0) va = 0.0;
            bn.rmean.v[static_cast<std::size_t>(i)] = static_cast<T>(mu);
            bn.rvar.v[static_cast<std::size_t>(i)] = static_cast<T>(va);
        }
    };
    if (p.has_stem) apply(p.stem_bn);
    for (std::size_t g = 0; g < p.groups.size(); ++g) {
        const int cnt = a[static_cast<int>(g)];
        for (int j = 0; j < cnt; ++j) {
            auto& cell = p.groups[g][static_cast<std::size_t>(j)];
            apply(cell.bn1);
            if (cell.has_second) apply(cell.bn2);
            if (cell.has_proj) apply(cell.proj_bn);
        }
    }
    if (pos != accum.size())
        throw std::logic_error("bn aggregates: more accumulators than bn layers");
}

#define LAS_INSTANTIATE_ENGINE(T)                                                              \
    template Tensor<T> forward_train<T>(const SearchSpaceSpec&, NetParams<T>&,                 \
                                        const LayerAssignment&, const Tensor<T>&, double,      \
                                        ForwardCache<T>&);                                     \
    template Tensor<T> forward_eval<T>(const SearchSpaceSpec&, const NetParams<T>&,            \
                                       const LayerAssignment&, const Tensor<T>&);              \
    template Tensor<T> forward_calibrate<T>(const SearchSpaceSpec&, const NetParams<T>&,       \
                                            const LayerAssignment&, const Tensor<T>&,          \
                                            std::vector<BnAccum>&);                            \
    template void net_backward<T>(const SearchSpaceSpec&, const NetParams<T>&,                 \
                                  const LayerAssignment&, const ForwardCache<T>&,              \
                                  const Tensor<T>&, NetParams<T>&);                            \
    template void apply_bn_aggregates<T>(NetParams<T>&, const LayerAssignment&,                \
                                         const std::vector<BnAccum>&);

LAS_INSTANTIATE_ENGINE(float)
LAS_INSTANTIATE_ENGINE(double)

}  // namespace las
