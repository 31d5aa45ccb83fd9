#include "las/net.hpp"

#include <cmath>
#include <stdexcept>

#include "las/rng.hpp"

namespace las {

namespace {

template <class T>
Conv<T> make_conv(int co, int ci, int k, int stride, int pad) {
    Conv<T> c;
    c.w = Tensor<T>({co, ci, k, k});
    c.stride = stride;
    c.pad = pad;
    return c;
}

template <class T>
Bn<T> make_bn(int c) {
    Bn<T> b;
    b.gamma = Tensor<T>({c});
    b.beta = Tensor<T>({c});
    b.rmean = Tensor<T>({c});
    b.rvar = Tensor<T>({c});
    b.gamma.fill(T(1));
    b.rvar.fill(T(1));
    return b;
}

template <class T>
Cell<T> make_cell(const SearchSpaceSpec& spec, int group, bool transition) {
    const int out_c = spec.channel_plan[static_cast<std::size_t>(group)];
    Cell<T> cell;
    if (spec.cell_kind == Family::plain) {
        const int in_c = !transition ? out_c
                         : group == 0 ? spec.input_shape[0]
                                      : spec.channel_plan[static_cast<std::size_t>(group) - 1];
        cell.conv1 = make_conv<T>(out_c, in_c, 3, 1, 1);
        cell.bn1 = make_bn<T>(out_c);
        return cell;
    }
    // residual: the stem already produced channel_plan[0], so the group-1
    // transition keeps channels and stride 1
    const bool downsample = transition && group > 0;
    const int in_c = downsample ? spec.channel_plan[static_cast<std::size_t>(group) - 1] : out_c;
    cell.conv1 = make_conv<T>(out_c, in_c, 3, downsample ? 2 : 1, 1);
    cell.bn1 = make_bn<T>(out_c);
    cell.has_second = true;
    cell.conv2 = make_conv<T>(out_c, out_c, 3, 1, 1);
    cell.bn2 = make_bn<T>(out_c);
    if (downsample) {
        cell.has_proj = true;
        cell.proj = make_conv<T>(out_c, in_c, 1, 2, 0);
        cell.proj_bn = make_bn<T>(out_c);
    }
    return cell;
}

// final spatial extent and flattened classifier input width
struct TailShape {
    int h, w, channels;
};

TailShape tail_shape(const SearchSpaceSpec& spec) {
    int h = spec.input_shape[1], w = spec.input_shape[2];
    if (spec.cell_kind == Family::plain) {
        for (int g = 0; g < spec.n; ++g) {
            h /= 2;
            w /= 2;
        }
    } else {
        for (int g = 1; g < spec.n; ++g) {
            h = (h + 1) / 2;
            w = (w + 1) / 2;
        }
    }
    return {h, w, spec.channel_plan[static_cast<std::size_t>(spec.n) - 1]};
}

}  // namespace

template <class T>
NetParams<T> build_params(const SearchSpaceSpec& spec, const std::vector<int>& counts,
                          std::uint64_t seed) {
    spec.validate();
    if (static_cast<int>(counts.size()) != spec.n)
        throw std::invalid_argument("build_params: cell counts do not match the group count");
    NetParams<T> p;
    if (spec.has_stem()) {
        p.has_stem = true;
        p.stem_conv = make_conv<T>(spec.channel_plan[0], spec.input_shape[0], 3, 1, 1);
        p.stem_bn = make_bn<T>(spec.channel_plan[0]);
    }
    p.groups.resize(static_cast<std::size_t>(spec.n));
    for (int g = 0; g < spec.n; ++g) {
        const int cnt = counts[static_cast<std::size_t>(g)];
        if (cnt < 1) throw std::invalid_argument("build_params: every group needs at least one cell");
        auto& cells = p.groups[static_cast<std::size_t>(g)];
        cells.reserve(static_cast<std::size_t>(cnt));
        for (int j = 0; j < cnt; ++j) cells.push_back(make_cell<T>(spec, g, j == 0));
    }
    const TailShape tail = tail_shape(spec);
    int in_width = tail.channels * tail.h * tail.w;
    for (int width : spec.classifier_plan) {
        Fc<T> fc;
        fc.w = Tensor<T>({width, in_width});
        fc.b = Tensor<T>({width});
        p.classifier.push_back(std::move(fc));
        in_width = width;
    }

    // fan-in-scaled Gaussian init, one stream in declaration order
    Rng rng(seed);
    visit_learnable<T>(p, counts, [&rng](Tensor<T>& t) {
        if (t.shape.size() == 4) {  // conv weight
            const double fan_in = static_cast<double>(t.shape[1]) * t.shape[2] * t.shape[3];
            const double sd = std::sqrt(2.0 / fan_in);
            for (auto& v : t.v) v = static_cast<T>(rng.normal(0.0, sd));
        } else if (t.shape.size() == 2) {  // fc weight
            const double sd = std::sqrt(2.0 / static_cast<double>(t.shape[1]));
            for (auto& v : t.v) v = static_cast<T>(rng.normal(0.0, sd));
        }
        // bn gamma/beta and fc biases keep their constructed values
    });
    return p;
}

template <class T>
Network<T> build_network(const SearchSpaceSpec& spec, const LayerAssignment& a,
                         std::uint64_t seed) {
    if (a.size() != spec.n)
        throw std::invalid_argument("build_network: assignment does not match the group count");
    for (int g = 0; g < spec.n; ++g)
        if (a[g] > spec.capacity(g))
            throw std::invalid_argument("build_network: assignment " + a.str() +
                                        " exceeds the per-group capacity");
    return Network<T>{spec, a, build_params<T>(spec, a.groups(), seed)};
}

namespace {

// Single traversal used by all visitors so the declaration order is defined
// exactly once.
template <class P, class F>
void visit_impl(P& p, const std::vector<int>& counts, bool learnable, F&& f) {
    auto bn = [&](auto& b) {
        if (learnable) {
            f(b.gamma);
            f(b.beta);
        } else {
            f(b.rmean);
            f(b.rvar);
        }
    };
    if (p.has_stem) {
        if (learnable) f(p.stem_conv.w);
        bn(p.stem_bn);
    }
    for (std::size_t g = 0; g < p.groups.size(); ++g) {
        const int cnt = g < counts.size() ? counts[g] : static_cast<int>(p.groups[g].size());
        if (cnt > static_cast<int>(p.groups[g].size()))
            throw std::invalid_argument("visit: selection exceeds available cells");
        for (int j = 0; j < cnt; ++j) {
            auto& cell = p.groups[g][static_cast<std::size_t>(j)];
            if (learnable) f(cell.conv1.w);
            bn(cell.bn1);
            if (cell.has_second) {
                if (learnable) f(cell.conv2.w);
                bn(cell.bn2);
            }
            if (cell.has_proj) {
                if (learnable) f(cell.proj.w);
                bn(cell.proj_bn);
            }
        }
    }
    if (learnable)
        for (auto& fc : p.classifier) {
            f(fc.w);
            f(fc.b);
        }
}

}  // namespace

template <class T>
void visit_learnable(NetParams<T>& p, const std::vector<int>& counts,
                     const std::function<void(Tensor<T>&)>& f) {
    visit_impl(p, counts, true, f);
}
template <class T>
void visit_learnable(const NetParams<T>& p, const std::vector<int>& counts,
                     const std::function<void(const Tensor<T>&)>& f) {
    visit_impl(p, counts, true, f);
}
template <class T>
void visit_bn_state(NetParams<T>& p, const std::vector<int>& counts,
                    const std::function<void(Tensor<T>&)>& f) {
    visit_impl(p, counts, false, f);
}
template <class T>
void visit_bn_state(const NetParams<T>& p, const std::vector<int>& counts,
                    const std::function<void(const Tensor<T>&)>& f) {
    visit_impl(p, counts, false, f);
}

template <class T>
std::vector<Tensor<T>*> collect_learnable(NetParams<T>& p, const std::vector<int>& counts) {
    std::vector<Tensor<T>*> out;
    visit_learnable<T>(p, counts, [&out](Tensor<T>& t) { out.push_back(&t); });
    return out;
}

template <class T>
std::uint64_t params_digest(const NetParams<T>& p, const std::vector<int>& counts,
                            bool include_bn_state) {
    std::uint64_t h = fnv1a64("NetParams");
    visit_learnable<T>(p, counts, [&h](const Tensor<T>& t) { h = t.digest(h); });
    if (include_bn_state)
        visit_bn_state<T>(p, counts, [&h](const Tensor<T>& t) { h = t.digest(h); });
    return h;
}

template <class T>
std::size_t param_count(const NetParams<T>& p, const std::vector<int>& counts) {
    std::size_t c = 0;
    visit_learnable<T>(p, counts, [&c](const Tensor<T>& t) { c += t.size(); });
    return c;
}

template <class T>
NetParams<T> zeros_like(const NetParams<T>& p) {
    NetParams<T> z = p;
    std::vector<int> counts;
    for (const auto& g : z.groups) counts.push_back(static_cast<int>(g.size()));
    visit_learnable<T>(z, counts, [](Tensor<T>& t) { t.zero(); });
    visit_bn_state<T>(z, counts, [](Tensor<T>& t) { t.zero(); });
    return z;
}

std::uint64_t flops_macs(const SearchSpaceSpec& spec, const LayerAssignment& a) {
    if (a.size() != spec.n)
        throw std::invalid_argument("flops: assignment does not match the group count");
    auto conv_macs = [](int co, int ci, int k, int oh, int ow) {
        return static_cast<std::uint64_t>(co) * ci * k * k * oh * ow;
    };
    std::uint64_t macs = 0;
    int h = spec.input_shape[1], w = spec.input_shape[2];
    if (spec.cell_kind == Family::plain) {
        for (int g = 0; g < spec.n; ++g) {
            const int out_c = spec.channel_plan[static_cast<std::size_t>(g)];
            const int in_c = g == 0 ? spec.input_shape[0]
                                    : spec.channel_plan[static_cast<std::size_t>(g) - 1];
            macs += conv_macs(out_c, in_c, 3, h, w);
            for (int j = 1; j < a[g]; ++j) macs += conv_macs(out_c, out_c, 3, h, w);
            h /= 2;
            w /= 2;
        }
    } else {
        const int c0 = spec.channel_plan[0];
        macs += conv_macs(c0, spec.input_shape[0], 3, h, w);  // stem
        for (int g = 0; g < spec.n; ++g) {
            const int out_c = spec.channel_plan[static_cast<std::size_t>(g)];
            const int in_c = g == 0 ? out_c : spec.channel_plan[static_cast<std::size_t>(g) - 1];
            if (g > 0) {
                h = (h + 1) / 2;
                w = (w + 1) / 2;
            }
            // transition cell
            macs += conv_macs(out_c, in_c, 3, h, w);
            macs += conv_macs(out_c, out_c, 3, h, w);
            if (g > 0) macs += conv_macs(out_c, in_c, 1, h, w);  // projection
            // internal cells
            for (int j = 1; j < a[g]; ++j) {
                macs += conv_macs(out_c, out_c, 3, h, w);
                macs += conv_macs(out_c, out_c, 3, h, w);
            }
        }
    }
    int d = spec.channel_plan[static_cast<std::size_t>(spec.n) - 1] * h * w;
    for (int width : spec.classifier_plan) {
        macs += static_cast<std::uint64_t>(d) * width;
        d = width;
    }
    return macs;
}

#define LAS_INSTANTIATE_NET(T)                                                                   \
    template NetParams<T> build_params<T>(const SearchSpaceSpec&, const std::vector<int>&,       \
                                          std::uint64_t);                                        \
    template Network<T> build_network<T>(const SearchSpaceSpec&, const LayerAssignment&,         \
                                         std::uint64_t);                                         \
    template void visit_learnable<T>(NetParams<T>&, const std::vector<int>&,                     \
                                     const std::function<void(Tensor<T>&)>&);                    \
    template void visit_learnable<T>(const NetParams<T>&, const std::vector<int>&,               \
                                     const std::function<void(const Tensor<T>&)>&);              \
    template void visit_bn_state<T>(NetParams<T>&, const std::vector<int>&,                      \
                                    const std::function<void(Tensor<T>&)>&);                     \
    template void visit_bn_state<T>(const NetParams<T>&, const std::vector<int>&,                \
                                    const std::function<void(const Tensor<T>&)>&);               \
    template std::vector<Tensor<T>*> collect_learnable<T>(NetParams<T>&,                         \
                                                          const std::vector<int>&);              \
    template std::uint64_t params_digest<T>(const NetParams<T>&, const std::vector<int>&, bool); \
    template std::size_t param_count<T>(const NetParams<T>&, const std::vector<int>&);           \
    template NetParams<T> zeros_like<T>(const NetParams<T>&);

LAS_INSTANTIATE_NET(float)
LAS_INSTANTIATE_NET(double)

}  // namespace las
