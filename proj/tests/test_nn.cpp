#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <limits>
#include <filesystem>
#include <fstream>

#include "las/checkpoint.hpp"
#include "las/dataset.hpp"
#include "las/engine.hpp"
#include "las/kernels.hpp"
#include "las/train.hpp"
#include "test_util.hpp"

using las::Family;
using las::LayerAssignment;
using las::Rng;
using las::SearchSpaceSpec;
using las::Tensor;
using las::testutil::gradcheck_max_rel;
using las::testutil::random_tensor;

namespace {

SearchSpaceSpec tiny_spec(Family family, int n = 2) {
    SearchSpaceSpec s;
    s.n = n;
    s.channel_plan = n == 2 ? std::vector<int>{2, 4} : std::vector<int>{2, 4, 8};
    s.input_shape = {3, 8, 8};
    s.num_classes = 3;
    s.cell_kind = family;
    s.classifier_plan = {6, 3};
    s.target_depth = n + 3;
    return s;
}

las::TrainConfig toy_cfg() {
    las::TrainConfig cfg;
    cfg.base_lr = 0.05;
    cfg.momentum = 0.9;
    cfg.weight_decay = 1e-4;
    cfg.batch_size = 16;
    cfg.epochs = 5;
    cfg.rng_seed = 21;
    return cfg;
}

}  // namespace

TEST_CASE("build_network is deterministic in the seed") {
    const auto spec = SearchSpaceSpec::desk_default();
    const LayerAssignment a({1, 1, 1});
    const auto n1 = las::build_network<float>(spec, a, 7);
    const auto n2 = las::build_network<float>(spec, a, 7);
    const auto n3 = las::build_network<float>(spec, a, 8);
    CHECK(las::params_digest(n1.params, a.groups()) == las::params_digest(n2.params, a.groups()));
    CHECK(las::params_digest(n1.params, a.groups()) != las::params_digest(n3.params, a.groups()));
}

TEST_CASE("plain parameter count matches the hand-computed closed form") {
    // channels [8,16,32], input 3x32x32, classifier [64, 8], assignment 2-1-2:
    //   convs 8*3*9 + 8*8*9 + 16*8*9 + 32*16*9 + 32*32*9 = 216+576+1152+4608+9216
    //   bn pairs 2*(8+8+16+32+32), fc 64*512+64 and 8*64+8
    const auto spec = SearchSpaceSpec::desk_default();
    const LayerAssignment a({2, 1, 2});
    const auto net = las::build_network<float>(spec, a, 1);
    const std::size_t convs = 216 + 576 + 1152 + 4608 + 9216;
    const std::size_t bns = 2 * (8 + 8 + 16 + 32 + 32);
    const std::size_t fcs = 64 * 512 + 64 + 8 * 64 + 8;
    CHECK(las::param_count(net.params, a.groups()) == convs + bns + fcs);
}

TEST_CASE("residual template layout for a 3-3-3 network") {
    SearchSpaceSpec spec = SearchSpaceSpec::desk_default(Family::residual);
    spec.channel_plan = {16, 32, 64};
    spec.target_depth = 9;
    const LayerAssignment a({3, 3, 3});
    const auto net = las::build_network<float>(spec, a, 3);

    REQUIRE(net.params.has_stem);
    CHECK(net.params.stem_conv.w.shape == std::vector<int>{16, 3, 3, 3});
    REQUIRE(net.params.groups.size() == 3);
    for (int g = 0; g < 3; ++g) {
        REQUIRE(net.params.groups[static_cast<std::size_t>(g)].size() == 3);
        for (int j = 0; j < 3; ++j) {
            const auto& cell = net.params.groups[static_cast<std::size_t>(g)][static_cast<std::size_t>(j)];
            CHECK(cell.has_second);
            const int out_c = spec.channel_plan[static_cast<std::size_t>(g)];
            CHECK(cell.conv2.w.shape == std::vector<int>{out_c, out_c, 3, 3});
            if (g > 0 && j == 0) {
                CHECK(cell.conv1.stride == 2);
                CHECK(cell.has_proj);
                CHECK(cell.proj.w.shape == std::vector<int>{out_c, out_c / 2, 1, 1});
            } else {
                CHECK(cell.conv1.stride == 1);
                CHECK_FALSE(cell.has_proj);
            }
        }
    }
    // feature maps run 32 -> 16 -> 8; the classifier flattens 64 * 8 * 8
    CHECK(net.params.classifier.front().w.shape[1] == 64 * 8 * 8);
}

TEST_CASE("forward: zero input through a zeroed classifier gives zero logits") {
    const auto spec = tiny_spec(Family::plain);
    auto net = las::build_network<float>(spec, LayerAssignment({1, 1}), 5);
    for (auto& fc : net.params.classifier) {
        fc.w.zero();
        fc.b.zero();
    }
    Tensor<float> x({2, 3, 8, 8});
    const auto logits = las::forward_eval(spec, net.params, net.assignment, x);
    for (const float v : logits.v) CHECK(v == 0.0f);
}

TEST_CASE("forward: duplicated inputs produce identical logit rows in inference mode") {
    const auto spec = tiny_spec(Family::residual);
    const auto net = las::build_network<float>(spec, LayerAssignment({2, 1}), 6);
    Rng rng(17);
    Tensor<float> x({2, 3, 8, 8});
    for (std::size_t i = 0; i < x.size() / 2; ++i) {
        x.v[i] = static_cast<float>(rng.normal());
        x.v[i + x.size() / 2] = x.v[i];
    }
    const auto logits = las::forward_eval(spec, net.params, net.assignment, x);
    for (int c = 0; c < 3; ++c)
        CHECK(logits.v[static_cast<std::size_t>(c)] ==
              logits.v[static_cast<std::size_t>(3 + c)]);
}

TEST_CASE("forward rejects shape mismatches and empty batches") {
    const auto spec = tiny_spec(Family::plain);
    const auto net = las::build_network<float>(spec, LayerAssignment({1, 1}), 5);
    Tensor<float> bad({2, 3, 4, 4});
    CHECK_THROWS_AS(las::forward_eval(spec, net.params, net.assignment, bad),
                    std::invalid_argument);
    Tensor<float> empty({0, 3, 8, 8});
    CHECK_THROWS_AS(las::forward_eval(spec, net.params, net.assignment, empty),
                    std::invalid_argument);
}

TEST_CASE("forward flags non-finite activations with the offending layer") {
    const auto spec = tiny_spec(Family::plain);
    auto net = las::build_network<float>(spec, LayerAssignment({2, 1}), 5);
    // an infinite bn scale survives the relu on the positive side
    net.params.groups[0][1].bn1.gamma.fill(std::numeric_limits<float>::infinity());
    Rng rng(3);
    const auto x = random_tensor<float>({1, 3, 8, 8}, rng);
    las::ForwardCache<float> cache;
    try {
        las::forward_train(spec, net.params, net.assignment, x, 0.1, cache);
        FAIL("expected NumericError");
    } catch (const las::NumericError& e) {
        CHECK(std::string(e.what()).find("group 1 cell 2") != std::string::npos);
    }
}

TEST_CASE("whole-network gradients match finite differences (both families)") {
    for (const Family family : {Family::plain, Family::residual}) {
        CAPTURE(las::family_name(family));
        const auto spec = tiny_spec(family);
        // depth 3 over 2 groups exercises transition + internal cells
        const LayerAssignment a({2, 1});
        auto net = las::build_network<double>(spec, a, 11);
        Rng rng(13);
        const auto x = random_tensor<double>({2, 3, 8, 8}, rng);
        const std::vector<std::uint16_t> labels{1, 2};

        const auto loss = [&] {
            las::ForwardCache<double> cache;
            const auto logits = las::forward_train(spec, net.params, a, x, 0.1, cache);
            Tensor<double> probs(logits.shape);
            return las::kern::softmax_xent_forward(logits.data(), labels.data(), logits.shape[0],
                                                   logits.shape[1], probs.data());
        };

        las::ForwardCache<double> cache;
        const auto logits = las::forward_train(spec, net.params, a, x, 0.1, cache);
        Tensor<double> probs(logits.shape);
        las::kern::softmax_xent_forward(logits.data(), labels.data(), logits.shape[0],
                                        logits.shape[1], probs.data());
        Tensor<double> dlogits(logits.shape);
        las::kern::softmax_xent_backward(probs.data(), labels.data(), logits.shape[0],
                                         logits.shape[1], dlogits.data());
        auto grads = las::zeros_like(net.params);
        las::net_backward(spec, net.params, a, cache, dlogits, grads);

        auto p_tensors = las::collect_learnable(net.params, a.groups());
        auto g_tensors = las::collect_learnable(grads, a.groups());
        REQUIRE(p_tensors.size() == g_tensors.size());
        // a smaller step than the per-layer checks: at 1e-3 the perturbation
        // itself crosses relu kinks and pool argmax boundaries
        double worst = 0.0;
        for (std::size_t t = 0; t < p_tensors.size(); ++t)
            worst = std::max(worst,
                             gradcheck_max_rel(loss, p_tensors[t]->v, g_tensors[t]->v, 1e-4));
        CHECK(worst < 1e-3);
    }
}

TEST_CASE("training solves a separable two-class toy task") {
    SearchSpaceSpec spec = tiny_spec(Family::plain);
    spec.num_classes = 2;
    spec.classifier_plan = {6, 2};
    const auto data = las::generate_synthetic_task(901, 2, 40, {3, 8, 8}, 0.0);
    auto net = las::build_network<float>(spec, LayerAssignment({1, 1}), 31);
    auto cfg = toy_cfg();
    cfg.epochs = 50;
    const auto summary = las::train_network(net, data, cfg);
    CHECK(summary.optimizer_steps > 0);
    const double train_acc =
        las::evaluate(spec, net.params, net.assignment, data.train, cfg.batch_size);
    CHECK(train_acc >= 0.99);
    // loss should have moved substantially from its starting point
    CHECK(summary.epoch_loss.back() < 0.5 * summary.epoch_loss.front());
}

TEST_CASE("lr 0 leaves parameters untouched but batch-norm stats move") {
    const auto spec = tiny_spec(Family::plain);
    const auto data = las::generate_synthetic_task(902, 3, 20, {3, 8, 8}, 0.3);
    auto net = las::build_network<float>(spec, LayerAssignment({1, 1}), 31);
    const auto before_learn = las::params_digest(net.params, net.assignment.groups(), false);
    auto before_all = las::params_digest(net.params, net.assignment.groups(), true);

    auto cfg = toy_cfg();
    cfg.epochs = 2;
    cfg.lr_schedule = las::LrSchedule{las::LrSchedule::Kind::multistep, {0}, 0.0};  // lr == 0
    las::train_network(net, data, cfg);

    CHECK(las::params_digest(net.params, net.assignment.groups(), false) == before_learn);
    CHECK(las::params_digest(net.params, net.assignment.groups(), true) != before_all);
}

TEST_CASE("training is bitwise deterministic given the seed") {
    const auto spec = tiny_spec(Family::residual);
    const auto data = las::generate_synthetic_task(903, 3, 20, {3, 8, 8}, 0.2);
    auto cfg = toy_cfg();
    cfg.epochs = 3;
    cfg.augment_flip = true;
    cfg.augment_pad_crop = true;

    auto run = [&] {
        auto net = las::build_network<float>(spec, LayerAssignment({1, 2}), 77);
        las::train_network(net, data, cfg);
        return las::params_digest(net.params, net.assignment.groups());
    };
    CHECK(run() == run());
}

TEST_CASE("evaluate counts top-1 hits; ties resolve to the lowest class") {
    SearchSpaceSpec spec = tiny_spec(Family::plain);
    spec.num_classes = 2;
    spec.classifier_plan = {2};
    auto net = las::build_network<float>(spec, LayerAssignment({1, 1}), 5);
    for (auto& fc : net.params.classifier) {
        fc.w.zero();
        fc.b.zero();
    }

    las::Dataset valset;
    valset.shape = {3, 8, 8};
    const int count = 8;
    valset.pixels.assign(static_cast<std::size_t>(count) * valset.sample_size(), 128);
    valset.labels = {0, 0, 1, 1, 1, 1, 1, 1};  // 25% class 0

    // equal logits everywhere: always predicts class 0
    CHECK(las::evaluate(spec, net.params, net.assignment, valset, 4) == doctest::Approx(0.25));

    // bias toward class 1: always predicts class 1
    net.params.classifier.back().b.v[1] = 1.0f;
    CHECK(las::evaluate(spec, net.params, net.assignment, valset, 4) == doctest::Approx(0.75));

    // all labels match the constant prediction
    valset.labels = {1, 1, 1, 1, 1, 1, 1, 1};
    CHECK(las::evaluate(spec, net.params, net.assignment, valset, 3) == doctest::Approx(1.0));

    valset.labels.clear();
    valset.pixels.clear();
    CHECK_THROWS_AS(las::evaluate(spec, net.params, net.assignment, valset, 4),
                    std::domain_error);
}

TEST_CASE("bn running stats equal batch stats after one forward with momentum 1") {
    const auto spec = tiny_spec(Family::plain);
    auto net = las::build_network<float>(spec, LayerAssignment({1, 1}), 19);
    Rng rng(23);
    const auto x = random_tensor<float>({4, 3, 8, 8}, rng);

    las::ForwardCache<float> cache;
    las::forward_train(spec, net.params, net.assignment, x, 1.0, cache);

    // recompute the first cell's conv output and its batch stats independently
    const auto& conv = net.params.groups[0][0].conv1;
    Tensor<float> z({4, 2, 8, 8});
    las::kern::conv2d_forward(x.data(), 4, 3, 8, 8, conv.w.data(), 2, 3, 3, 1, 1, z.data());
    Tensor<float> m({2}), v({2});
    las::kern::bn_channel_stats(z.data(), 4, 2, 8, 8, m.data(), v.data());
    const auto& bn = net.params.groups[0][0].bn1;
    for (int c = 0; c < 2; ++c) {
        CHECK(bn.rmean.v[static_cast<std::size_t>(c)] ==
              doctest::Approx(m.v[static_cast<std::size_t>(c)]).epsilon(1e-6));
        CHECK(bn.rvar.v[static_cast<std::size_t>(c)] ==
              doctest::Approx(v.v[static_cast<std::size_t>(c)]).epsilon(1e-6));
    }

    // and inference right after sees (nearly) the training-mode normalization
    las::ForwardCache<float> cache2;
    const auto train_logits = las::forward_train(spec, net.params, net.assignment, x, 1.0, cache2);
    const auto eval_logits = las::forward_eval(spec, net.params, net.assignment, x);
    for (std::size_t i = 0; i < train_logits.size(); ++i)
        CHECK(train_logits.v[i] == doctest::Approx(eval_logits.v[i]).epsilon(1e-4));
}

TEST_CASE("flops: hand-computed value and exact invariance across assignments") {
    SearchSpaceSpec small;
    small.n = 1;
    small.channel_plan = {2};
    small.input_shape = {3, 4, 4};
    small.num_classes = 5;
    small.cell_kind = Family::plain;
    small.classifier_plan = {5};
    small.target_depth = 2;
    // conv 2x3x3x3 over 4x4 = 864 MACs, then pool to 2x2, fc 5 * 8 = 40
    CHECK(las::flops_macs(small, LayerAssignment({1})) == 864 + 40);

    const auto spec = SearchSpaceSpec::desk_default();
    const auto all = las::enumerate_assignments(8, 3);
    const auto f0 = las::flops_macs(spec, all.front());
    for (const auto& a : all) CHECK(las::flops_macs(spec, a) == f0);

    SearchSpaceSpec res = SearchSpaceSpec::desk_default(Family::residual);
    const auto fr = las::flops_macs(res, LayerAssignment({1, 1, 6}));
    for (const auto& a : las::enumerate_assignments(8, 3))
        CHECK(las::flops_macs(res, a) == fr);
}

TEST_CASE("checkpoint round-trips bitwise and reloads evaluate identically") {
    namespace fs = std::filesystem;
    const auto dir = fs::temp_directory_path() / "las_test_ckpt";
    fs::create_directories(dir);
    const auto path = (dir / "net.lasn").string();

    const auto spec = tiny_spec(Family::residual);
    const auto data = las::generate_synthetic_task(904, 3, 16, {3, 8, 8}, 0.2);
    auto net = las::build_network<float>(spec, LayerAssignment({2, 1}), 55);
    auto cfg = toy_cfg();
    cfg.epochs = 1;
    las::train_network(net, data, cfg);

    las::save_checkpoint(spec, net.params, net.assignment, false, path);
    const auto loaded = las::load_network_checkpoint(path, spec);
    CHECK(loaded.assignment == net.assignment);
    CHECK(las::params_digest(loaded.params, loaded.assignment.groups()) ==
          las::params_digest(net.params, net.assignment.groups()));
    CHECK(las::evaluate(spec, loaded.params, loaded.assignment, data.val, 8) ==
          las::evaluate(spec, net.params, net.assignment, data.val, 8));

    // saving the reloaded network reproduces the file byte for byte
    const auto path2 = (dir / "net2.lasn").string();
    las::save_checkpoint(spec, loaded.params, loaded.assignment, false, path2);
    std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
    const std::string b1((std::istreambuf_iterator<char>(f1)), {});
    const std::string b2((std::istreambuf_iterator<char>(f2)), {});
    CHECK(b1 == b2);

    SUBCASE("mismatched spec digest is rejected") {
        auto other = tiny_spec(Family::plain);
        CHECK_THROWS_AS(las::load_network_checkpoint(path, other), las::IoError);
    }
    SUBCASE("truncation is rejected with a byte count") {
        std::string bytes = b1.substr(0, b1.size() - 7);
        const auto tpath = (dir / "trunc.lasn").string();
        std::ofstream out(tpath, std::ios::binary);
        out << bytes;
        out.close();
        CHECK_THROWS_WITH_AS(static_cast<void>(las::load_network_checkpoint(tpath, spec)),
                             doctest::Contains("truncated"), las::IoError);
    }
    SUBCASE("bad magic is rejected") {
        const auto mpath = (dir / "bad.lasn").string();
        std::ofstream out(mpath, std::ios::binary);
        out << "NOPE" << b1.substr(4);
        out.close();
        CHECK_THROWS_WITH_AS(static_cast<void>(las::load_network_checkpoint(mpath, spec)),
                             doctest::Contains("magic"), las::IoError);
    }
}

TEST_CASE("train aborts with epoch/step on divergence") {
    const auto spec = tiny_spec(Family::plain);
    const auto data = las::generate_synthetic_task(905, 3, 16, {3, 8, 8}, 0.2);
    auto net = las::build_network<float>(spec, LayerAssignment({1, 1}), 5);
    auto cfg = toy_cfg();
    cfg.base_lr = 1e12;  // guaranteed blow-up
    cfg.epochs = 3;
    try {
        las::train_network(net, data, cfg);
        FAIL("expected divergence");
    } catch (const las::TrainingDiverged& e) {
        CHECK(e.epoch >= 0);
        CHECK(std::string(e.what()).find("epoch") != std::string::npos);
    } catch (const las::NumericError&) {
        // also acceptable: the forward flags non-finite activations first
    }
}
