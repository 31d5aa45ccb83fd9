#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cmath>
#include <vector>

#include "las/kernels.hpp"
#include "test_util.hpp"

using las::Rng;
using las::Tensor;
using las::testutil::bitwise_equal;
using las::testutil::gradcheck_max_rel;
using las::testutil::random_tensor;
namespace kern = las::kern;

namespace {

constexpr double kTol = 1e-3;

int conv_out(int extent, int k, int stride, int pad) {
    return (extent + 2 * pad - k) / stride + 1;
}

template <class T>
void check_conv_config_bitwise(int n, int ci, int co, int h, int w, int k, int stride, int pad,
                               Rng& rng) {
    const auto x = random_tensor<T>({n, ci, h, w}, rng);
    const auto wt = random_tensor<T>({co, ci, k, k}, rng);
    const int oh = conv_out(h, k, stride, pad), ow = conv_out(w, k, stride, pad);

    Tensor<T> y_ref({n, co, oh, ow}), y_omp(y_ref.shape);
    kern::ref::conv2d_forward(x.data(), n, ci, h, w, wt.data(), co, k, k, stride, pad,
                              y_ref.data());
    kern::conv2d_forward(x.data(), n, ci, h, w, wt.data(), co, k, k, stride, pad, y_omp.data());
    CHECK(bitwise_equal(y_ref, y_omp));

    const auto dy = random_tensor<T>({n, co, oh, ow}, rng);
    Tensor<T> dx_ref(x.shape), dx_omp(x.shape);
    kern::ref::conv2d_backward_input(dy.data(), n, co, oh, ow, wt.data(), ci, k, k, stride, pad,
                                     h, w, dx_ref.data());
    kern::conv2d_backward_input(dy.data(), n, co, oh, ow, wt.data(), ci, k, k, stride, pad, h, w,
                                dx_omp.data());
    CHECK(bitwise_equal(dx_ref, dx_omp));

    Tensor<T> dw_ref(wt.shape), dw_omp(wt.shape);
    kern::ref::conv2d_backward_weight(dy.data(), n, co, oh, ow, x.data(), ci, h, w, k, k, stride,
                                      pad, dw_ref.data());
    kern::conv2d_backward_weight(dy.data(), n, co, oh, ow, x.data(), ci, h, w, k, k, stride, pad,
                                 dw_omp.data());
    CHECK(bitwise_equal(dw_ref, dw_omp));
}

}  // namespace

TEST_CASE("conv kernels: OpenMP path matches the serial reference bitwise") {
    Rng rng(42);
    for (const int stride : {1, 2}) {
        for (const int pad : {0, 1}) {
            for (const int k : {1, 3}) {
                if (k == 1 && pad == 1) continue;  // unused shape
                check_conv_config_bitwise<float>(2, 3, 4, 8, 8, k, stride, pad, rng);
                check_conv_config_bitwise<float>(1, 5, 2, 9, 7, k, stride, pad, rng);
                check_conv_config_bitwise<double>(2, 2, 3, 6, 10, k, stride, pad, rng);
            }
        }
    }
    // the exact shapes the engine runs most
    check_conv_config_bitwise<float>(4, 8, 8, 32, 32, 3, 1, 1, rng);
    check_conv_config_bitwise<float>(4, 16, 32, 8, 8, 3, 2, 1, rng);
}

TEST_CASE("bn kernels: OpenMP path matches the serial reference bitwise") {
    Rng rng(43);
    for (const auto& dims : std::vector<std::array<int, 4>>{
             {2, 3, 4, 4}, {4, 8, 16, 16}, {1, 5, 7, 9}}) {
        const auto [n, c, h, w] = dims;
        const auto x = random_tensor<float>({n, c, h, w}, rng, 2.0);
        Tensor<float> m_ref({c}), v_ref({c}), m_omp({c}), v_omp({c});
        kern::ref::bn_channel_stats(x.data(), n, c, h, w, m_ref.data(), v_ref.data());
        kern::bn_channel_stats(x.data(), n, c, h, w, m_omp.data(), v_omp.data());
        CHECK(bitwise_equal(m_ref, m_omp));
        CHECK(bitwise_equal(v_ref, v_omp));

        const auto gamma = random_tensor<float>({c}, rng);
        const auto beta = random_tensor<float>({c}, rng);
        Tensor<float> y_ref(x.shape), y_omp(x.shape);
        kern::ref::bn_forward_apply(x.data(), n, c, h, w, m_ref.data(), v_ref.data(), gamma.data(),
                                    beta.data(), y_ref.data());
        kern::bn_forward_apply(x.data(), n, c, h, w, m_omp.data(), v_omp.data(), gamma.data(),
                               beta.data(), y_omp.data());
        CHECK(bitwise_equal(y_ref, y_omp));

        const auto dy = random_tensor<float>(x.shape, rng);
        Tensor<float> dx_ref(x.shape), dx_omp(x.shape), dg_ref({c}), dg_omp({c}), db_ref({c}),
            db_omp({c});
        kern::ref::bn_backward(x.data(), dy.data(), n, c, h, w, m_ref.data(), v_ref.data(),
                               gamma.data(), dx_ref.data(), dg_ref.data(), db_ref.data());
        kern::bn_backward(x.data(), dy.data(), n, c, h, w, m_omp.data(), v_omp.data(),
                          gamma.data(), dx_omp.data(), dg_omp.data(), db_omp.data());
        CHECK(bitwise_equal(dx_ref, dx_omp));
        CHECK(bitwise_equal(dg_ref, dg_omp));
        CHECK(bitwise_equal(db_ref, db_omp));
    }
}

TEST_CASE("pool, relu, fc, add, softmax, sgd: OpenMP matches reference bitwise") {
    Rng rng(44);
    const int n = 3, c = 4, h = 8, w = 10;
    const auto x = random_tensor<float>({n, c, h, w}, rng);

    Tensor<float> py_ref({n, c, h / 2, w / 2}), py_omp(py_ref.shape);
    Tensor<int> pi_ref(py_ref.shape), pi_omp(py_ref.shape);
    kern::ref::maxpool2_forward(x.data(), n, c, h, w, py_ref.data(), pi_ref.data());
    kern::maxpool2_forward(x.data(), n, c, h, w, py_omp.data(), pi_omp.data());
    CHECK(bitwise_equal(py_ref, py_omp));
    CHECK(pi_ref.v == pi_omp.v);

    const auto pdy = random_tensor<float>(py_ref.shape, rng);
    Tensor<float> pdx_ref(x.shape), pdx_omp(x.shape);
    kern::ref::maxpool2_backward(pdy.data(), pi_ref.data(), n, c, h, w, pdx_ref.data());
    kern::maxpool2_backward(pdy.data(), pi_omp.data(), n, c, h, w, pdx_omp.data());
    CHECK(bitwise_equal(pdx_ref, pdx_omp));

    Tensor<float> r_ref(x.shape), r_omp(x.shape);
    kern::ref::relu_forward(x.data(), x.size(), r_ref.data());
    kern::relu_forward(x.data(), x.size(), r_omp.data());
    CHECK(bitwise_equal(r_ref, r_omp));
    const auto rdy = random_tensor<float>(x.shape, rng);
    Tensor<float> rdx_ref(x.shape), rdx_omp(x.shape);
    kern::ref::relu_backward(r_ref.data(), rdy.data(), x.size(), rdx_ref.data());
    kern::relu_backward(r_omp.data(), rdy.data(), x.size(), rdx_omp.data());
    CHECK(bitwise_equal(rdx_ref, rdx_omp));

    const int d = 20, o = 7;
    const auto fx = random_tensor<float>({n, d}, rng);
    const auto fw = random_tensor<float>({o, d}, rng);
    const auto fb = random_tensor<float>({o}, rng);
    Tensor<float> fy_ref({n, o}), fy_omp({n, o});
    kern::ref::fc_forward(fx.data(), n, d, fw.data(), fb.data(), o, fy_ref.data());
    kern::fc_forward(fx.data(), n, d, fw.data(), fb.data(), o, fy_omp.data());
    CHECK(bitwise_equal(fy_ref, fy_omp));
    const auto fdy = random_tensor<float>({n, o}, rng);
    Tensor<float> fdx_ref({n, d}), fdx_omp({n, d}), fdw_ref({o, d}), fdw_omp({o, d}),
        fdb_ref({o}), fdb_omp({o});
    kern::ref::fc_backward(fdy.data(), fx.data(), fw.data(), n, d, o, fdx_ref.data(),
                           fdw_ref.data(), fdb_ref.data());
    kern::fc_backward(fdy.data(), fx.data(), fw.data(), n, d, o, fdx_omp.data(), fdw_omp.data(),
                      fdb_omp.data());
    CHECK(bitwise_equal(fdx_ref, fdx_omp));
    CHECK(bitwise_equal(fdw_ref, fdw_omp));
    CHECK(bitwise_equal(fdb_ref, fdb_omp));

    Tensor<float> add_ref = x, add_omp = x;
    kern::ref::add_inplace(add_ref.data(), r_ref.data(), x.size());
    kern::add_inplace(add_omp.data(), r_omp.data(), x.size());
    CHECK(bitwise_equal(add_ref, add_omp));

    const int classes = 6;
    const auto logits = random_tensor<float>({n, classes}, rng, 3.0);
    const std::vector<std::uint16_t> labels{0, 5, 2};
    Tensor<float> probs_ref({n, classes}), probs_omp({n, classes});
    const double loss_ref = kern::ref::softmax_xent_forward(logits.data(), labels.data(), n,
                                                            classes, probs_ref.data());
    const double loss_omp =
        kern::softmax_xent_forward(logits.data(), labels.data(), n, classes, probs_omp.data());
    CHECK(loss_ref == loss_omp);
    CHECK(bitwise_equal(probs_ref, probs_omp));
    Tensor<float> dl_ref({n, classes}), dl_omp({n, classes});
    kern::ref::softmax_xent_backward(probs_ref.data(), labels.data(), n, classes, dl_ref.data());
    kern::softmax_xent_backward(probs_omp.data(), labels.data(), n, classes, dl_omp.data());
    CHECK(bitwise_equal(dl_ref, dl_omp));

    Tensor<float> w_ref = fx, w_omp = fx;
    Tensor<float> g_ref = fdx_ref, g_omp = fdx_omp;
    Tensor<float> v_ref(fx.shape), v_omp(fx.shape);
    kern::ref::sgd_nesterov_step(w_ref.data(), g_ref.data(), v_ref.data(), fx.size(), 0.05f, 0.9f,
                                 5e-4f);
    kern::sgd_nesterov_step(w_omp.data(), g_omp.data(), v_omp.data(), fx.size(), 0.05f, 0.9f,
                            5e-4f);
    CHECK(bitwise_equal(w_ref, w_omp));
    CHECK(bitwise_equal(v_ref, v_omp));
}

TEST_CASE("conv gradients match central finite differences") {
    Rng rng(7);
    for (const auto& cfg : std::vector<std::array<int, 3>>{{3, 1, 1}, {3, 2, 1}, {1, 2, 0}}) {
        const auto [k, stride, pad] = cfg;
        const int n = 2, ci = 3, co = 2, h = 6, w = 6;
        auto x = random_tensor<double>({n, ci, h, w}, rng);
        auto wt = random_tensor<double>({co, ci, k, k}, rng);
        const int oh = conv_out(h, k, stride, pad), ow = conv_out(w, k, stride, pad);
        const auto coeff = random_tensor<double>({n, co, oh, ow}, rng);

        // loss = sum(conv(x, w) * coeff), so dy = coeff
        const auto loss = [&] {
            Tensor<double> y({n, co, oh, ow});
            kern::conv2d_forward(x.data(), n, ci, h, w, wt.data(), co, k, k, stride, pad,
                                 y.data());
            double s = 0.0;
            for (std::size_t i = 0; i < y.size(); ++i) s += y.v[i] * coeff.v[i];
            return s;
        };

        Tensor<double> dx(x.shape), dw(wt.shape);
        kern::conv2d_backward_input(coeff.data(), n, co, oh, ow, wt.data(), ci, k, k, stride, pad,
                                    h, w, dx.data());
        kern::conv2d_backward_weight(coeff.data(), n, co, oh, ow, x.data(), ci, h, w, k, k,
                                     stride, pad, dw.data());
        CHECK(gradcheck_max_rel(loss, x.v, dx.v) < kTol);
        CHECK(gradcheck_max_rel(loss, wt.v, dw.v) < kTol);
    }
}

TEST_CASE("bn gradients match central finite differences (through batch stats)") {
    Rng rng(8);
    const int n = 3, c = 2, h = 4, w = 4;
    auto x = random_tensor<double>({n, c, h, w}, rng);
    auto gamma = random_tensor<double>({c}, rng);
    auto beta = random_tensor<double>({c}, rng);
    const auto coeff = random_tensor<double>(x.shape, rng);

    const auto loss = [&] {
        Tensor<double> m({c}), v({c}), y(x.shape);
        kern::bn_channel_stats(x.data(), n, c, h, w, m.data(), v.data());
        kern::bn_forward_apply(x.data(), n, c, h, w, m.data(), v.data(), gamma.data(),
                               beta.data(), y.data());
        double s = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) s += y.v[i] * coeff.v[i];
        return s;
    };

    Tensor<double> m({c}), v({c});
    kern::bn_channel_stats(x.data(), n, c, h, w, m.data(), v.data());
    Tensor<double> dx(x.shape), dgamma({c}), dbeta({c});
    kern::bn_backward(x.data(), coeff.data(), n, c, h, w, m.data(), v.data(), gamma.data(),
                      dx.data(), dgamma.data(), dbeta.data());
    CHECK(gradcheck_max_rel(loss, x.v, dx.v) < kTol);
    CHECK(gradcheck_max_rel(loss, gamma.v, dgamma.v) < kTol);
    CHECK(gradcheck_max_rel(loss, beta.v, dbeta.v) < kTol);
}

TEST_CASE("fc gradients match central finite differences") {
    Rng rng(9);
    const int n = 3, d = 5, o = 4;
    auto x = random_tensor<double>({n, d}, rng);
    auto w = random_tensor<double>({o, d}, rng);
    auto b = random_tensor<double>({o}, rng);
    const auto coeff = random_tensor<double>({n, o}, rng);

    const auto loss = [&] {
        Tensor<double> y({n, o});
        kern::fc_forward(x.data(), n, d, w.data(), b.data(), o, y.data());
        double s = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) s += y.v[i] * coeff.v[i];
        return s;
    };

    Tensor<double> dx({n, d}), dw({o, d}), db({o});
    kern::fc_backward(coeff.data(), x.data(), w.data(), n, d, o, dx.data(), dw.data(), db.data());
    CHECK(gradcheck_max_rel(loss, x.v, dx.v) < kTol);
    CHECK(gradcheck_max_rel(loss, w.v, dw.v) < kTol);
    CHECK(gradcheck_max_rel(loss, b.v, db.v) < kTol);
}

TEST_CASE("max-pool routing matches central finite differences") {
    Rng rng(10);
    const int n = 2, c = 2, h = 4, w = 4;
    // well-separated values so the finite-difference step cannot flip argmaxes
    Tensor<double> x({n, c, h, w});
    std::vector<double> levels(x.size());
    for (std::size_t i = 0; i < levels.size(); ++i) levels[i] = 0.1 * static_cast<double>(i);
    rng.shuffle(levels.begin(), levels.end());
    x.v = levels;
    const auto coeff = random_tensor<double>({n, c, h / 2, w / 2}, rng);

    const auto loss = [&] {
        Tensor<double> y({n, c, h / 2, w / 2});
        Tensor<int> idx(y.shape);
        kern::maxpool2_forward(x.data(), n, c, h, w, y.data(), idx.data());
        double s = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) s += y.v[i] * coeff.v[i];
        return s;
    };

    Tensor<double> y({n, c, h / 2, w / 2});
    Tensor<int> idx(y.shape);
    kern::maxpool2_forward(x.data(), n, c, h, w, y.data(), idx.data());
    Tensor<double> dx(x.shape);
    kern::maxpool2_backward(coeff.data(), idx.data(), n, c, h, w, dx.data());
    CHECK(gradcheck_max_rel(loss, x.v, dx.v) < kTol);
}

TEST_CASE("max-pool picks the first of tied maxima and handles odd extents") {
    // 2x2 window over a 2x3 plane: floor semantics drop the last column
    Tensor<float> x({1, 1, 2, 3});
    x.v = {5.f, 5.f, 9.f,
           1.f, 0.f, 9.f};
    Tensor<float> y({1, 1, 1, 1});
    Tensor<int> idx(y.shape);
    kern::maxpool2_forward(x.data(), 1, 1, 2, 3, y.data(), idx.data());
    CHECK(y.v[0] == 5.f);
    CHECK(idx.v[0] == 0);  // first scanned element wins the tie
}

TEST_CASE("residual add routes gradients to both branches") {
    Rng rng(11);
    const int sz = 24;
    auto a = random_tensor<double>({sz}, rng);
    auto b = random_tensor<double>({sz}, rng);
    const auto coeff = random_tensor<double>({sz}, rng);

    const auto loss = [&] {
        Tensor<double> y = a;
        kern::add_inplace(y.data(), b.data(), y.size());
        double s = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) s += y.v[i] * coeff.v[i];
        return s;
    };
    // the add distributes the upstream gradient unchanged to both inputs
    CHECK(gradcheck_max_rel(loss, a.v, coeff.v) < kTol);
    CHECK(gradcheck_max_rel(loss, b.v, coeff.v) < kTol);
}

TEST_CASE("softmax cross-entropy: value and gradient") {
    Rng rng(12);
    const int n = 4, c = 5;
    auto logits = random_tensor<double>({n, c}, rng, 2.0);
    const std::vector<std::uint16_t> labels{1, 4, 0, 2};

    Tensor<double> probs({n, c});
    const double loss_value =
        kern::softmax_xent_forward(logits.data(), labels.data(), n, c, probs.data());

    // independent naive recomputation
    double expect = 0.0;
    for (int i = 0; i < n; ++i) {
        double denom = 0.0;
        for (int j = 0; j < c; ++j)
            denom += std::exp(logits.v[static_cast<std::size_t>(i * c + j)]);
        expect -= std::log(
            std::exp(logits.v[static_cast<std::size_t>(i * c) + labels[static_cast<std::size_t>(i)]]) /
            denom);
    }
    expect /= n;
    CHECK(loss_value == doctest::Approx(expect).epsilon(1e-12));

    const auto loss = [&] {
        Tensor<double> p({n, c});
        return kern::softmax_xent_forward(logits.data(), labels.data(), n, c, p.data());
    };
    Tensor<double> dlogits({n, c});
    kern::softmax_xent_backward(probs.data(), labels.data(), n, c, dlogits.data());
    CHECK(gradcheck_max_rel(loss, logits.v, dlogits.v, 1e-4) < kTol);

    const std::vector<std::uint16_t> bad{1, 9, 0, 2};
    Tensor<double> p({n, c});
    CHECK_THROWS_AS(kern::softmax_xent_forward(logits.data(), bad.data(), n, c, p.data()),
                    std::out_of_range);
}

TEST_CASE("sgd nesterov step against a hand-rolled reference") {
    double w = 1.0, g = 0.5, v = 0.0;
    const double lr = 0.1, mu = 0.9, wd = 0.01;
    double ew = w, ev = v;
    for (int step = 0; step < 2; ++step) {
        const double eg = g + wd * ew;
        ev = mu * ev + eg;
        ew -= lr * (eg + mu * ev);
    }
    Tensor<double> tw({1}), tg({1}), tv({1});
    tw.v[0] = w;
    tv.v[0] = v;
    for (int step = 0; step < 2; ++step) {
        tg.v[0] = g;
        kern::sgd_nesterov_step(tw.data(), tg.data(), tv.data(), 1, lr, mu, wd);
    }
    CHECK(tw.v[0] == doctest::Approx(ew).epsilon(1e-15));
    CHECK(tv.v[0] == doctest::Approx(ev).epsilon(1e-15));
}
