// Timing comparison between the serial reference kernels and the OpenMP
// kernels, which must agree bitwise. Run with --threads to pin the team size.

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <CLI11.hpp>

#include "las/kernels.hpp"
#include "las/rng.hpp"
#include "las/tensor.hpp"

using las::Tensor;

namespace {

double time_ms(const std::function<void()>& fn, int reps) {
    fn();  // warm
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < reps; ++i) fn();
    const auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

Tensor<float> random_tensor(std::vector<int> shape, las::Rng& rng) {
    Tensor<float> t(std::move(shape));
    for (auto& v : t.v) v = static_cast<float>(rng.normal());
    return t;
}

bool bitwise_equal(const Tensor<float>& a, const Tensor<float>& b) {
    if (a.shape != b.shape) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a.v[i] != b.v[i]) return false;
    return true;
}

struct Row {
    const char* name;
    double serial_ms, omp_ms;
    bool match;
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"serial vs OpenMP kernel benchmark"};
    int threads = 0, batch = 64, channels = 16, hw = 32, reps = 5;
    app.add_option("--threads", threads, "OpenMP team size (0 = default)");
    app.add_option("--batch", batch, "batch size");
    app.add_option("--channels", channels, "channel count");
    app.add_option("--hw", hw, "spatial extent");
    app.add_option("--reps", reps, "repetitions per timing");
    CLI11_PARSE(app, argc, argv);

#ifdef _OPENMP
    if (threads > 0) omp_set_num_threads(threads);
    std::printf("OpenMP threads: %d\n", threads > 0 ? threads : omp_get_max_threads());
#else
    std::printf("built without OpenMP; both columns are serial\n");
#endif
    std::printf("shape: batch=%d channels=%d spatial=%dx%d\n\n", batch, channels, hw, hw);

    las::Rng rng(1234);
    const Tensor<float> x = random_tensor({batch, channels, hw, hw}, rng);
    const Tensor<float> w = random_tensor({channels, channels, 3, 3}, rng);
    Tensor<float> y_ref({batch, channels, hw, hw}), y_omp(y_ref.shape);
    Tensor<float> dx_ref(x.shape), dx_omp(x.shape);
    Tensor<float> dw_ref(w.shape), dw_omp(w.shape);
    Tensor<float> mean_ref({channels}), var_ref({channels}), mean_omp({channels}),
        var_omp({channels});
    const Tensor<float> gamma = random_tensor({channels}, rng);
    const Tensor<float> beta = random_tensor({channels}, rng);
    const int fc_d = channels * hw * hw, fc_o = 256;
    const Tensor<float> fw = random_tensor({fc_o, fc_d}, rng);
    const Tensor<float> fb = random_tensor({fc_o}, rng);
    Tensor<float> fy_ref({batch, fc_o}), fy_omp({batch, fc_o});

    std::vector<Row> rows;

    rows.push_back({"conv2d_forward",
                    time_ms([&] {
                        las::kern::ref::conv2d_forward(x.data(), batch, channels, hw, hw, w.data(),
                                                       channels, 3, 3, 1, 1, y_ref.data());
                    }, reps),
                    time_ms([&] {
                        las::kern::conv2d_forward(x.data(), batch, channels, hw, hw, w.data(),
                                                  channels, 3, 3, 1, 1, y_omp.data());
                    }, reps),
                    false});
    rows.back().match = bitwise_equal(y_ref, y_omp);

    rows.push_back({"conv2d_backward_input",
                    time_ms([&] {
                        las::kern::ref::conv2d_backward_input(y_ref.data(), batch, channels, hw, hw,
                                                              w.data(), channels, 3, 3, 1, 1, hw,
                                                              hw, dx_ref.data());
                    }, reps),
                    time_ms([&] {
                        las::kern::conv2d_backward_input(y_omp.data(), batch, channels, hw, hw,
                                                         w.data(), channels, 3, 3, 1, 1, hw, hw,
                                                         dx_omp.data());
                    }, reps),
                    false});
    rows.back().match = bitwise_equal(dx_ref, dx_omp);

    rows.push_back({"conv2d_backward_weight",
                    time_ms([&] {
                        las::kern::ref::conv2d_backward_weight(y_ref.data(), batch, channels, hw,
                                                               hw, x.data(), channels, hw, hw, 3, 3,
                                                               1, 1, dw_ref.data());
                    }, reps),
                    time_ms([&] {
                        las::kern::conv2d_backward_weight(y_omp.data(), batch, channels, hw, hw,
                                                          x.data(), channels, hw, hw, 3, 3, 1, 1,
                                                          dw_omp.data());
                    }, reps),
                    false});
    rows.back().match = bitwise_equal(dw_ref, dw_omp);

    rows.push_back({"bn_channel_stats",
                    time_ms([&] {
                        las::kern::ref::bn_channel_stats(x.data(), batch, channels, hw, hw,
                                                         mean_ref.data(), var_ref.data());
                    }, reps),
                    time_ms([&] {
                        las::kern::bn_channel_stats(x.data(), batch, channels, hw, hw,
                                                    mean_omp.data(), var_omp.data());
                    }, reps),
                    false});
    rows.back().match = bitwise_equal(mean_ref, mean_omp) && bitwise_equal(var_ref, var_omp);

    rows.push_back({"fc_forward",
                    time_ms([&] {
                        las::kern::ref::fc_forward(x.data(), batch, fc_d, fw.data(), fb.data(),
                                                   fc_o, fy_ref.data());
                    }, reps),
                    time_ms([&] {
                        las::kern::fc_forward(x.data(), batch, fc_d, fw.data(), fb.data(), fc_o,
                                              fy_omp.data());
                    }, reps),
                    false});
    rows.back().match = bitwise_equal(fy_ref, fy_omp);

    std::printf("%-24s %12s %12s %9s %s\n", "kernel", "serial ms", "openmp ms", "speedup",
                "bitwise");
    bool all_match = true;
    for (const auto& r : rows) {
        std::printf("%-24s %12.3f %12.3f %8.2fx %s\n", r.name, r.serial_ms, r.omp_ms,
                    r.serial_ms / r.omp_ms, r.match ? "ok" : "MISMATCH");
        all_match = all_match && r.match;
    }
    return all_match ? 0 : 1;
}
