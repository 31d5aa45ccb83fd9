#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "las/kernels.hpp"
#include "las/supernet.hpp"
#include "test_util.hpp"

using las::Family;
using las::LayerAssignment;
using las::Rng;
using las::SearchSpaceSpec;
using las::Supernet;
using las::Tensor;
using las::testutil::random_tensor;

namespace {

SearchSpaceSpec small_spec(Family family = Family::plain, int target_depth = 5) {
    SearchSpaceSpec s;
    s.n = 2;
    s.channel_plan = {2, 4};
    s.input_shape = {3, 8, 8};
    s.num_classes = 3;
    s.cell_kind = family;
    s.classifier_plan = {6, 3};
    s.target_depth = target_depth;
    return s;
}

las::TrainConfig knobs() {
    las::TrainConfig cfg;
    cfg.base_lr = 0.05;
    cfg.momentum = 0.9;
    cfg.weight_decay = 1e-4;
    cfg.batch_size = 8;
    cfg.epochs = 2;
    cfg.rng_seed = 5;
    return cfg;
}

std::vector<float> bn_state_snapshot(const las::NetParams<float>& p,
                                     const std::vector<int>& counts) {
    std::vector<float> out;
    las::visit_bn_state<float>(p, counts, [&out](const las::Tensor<float>& t) {
        out.insert(out.end(), t.v.begin(), t.v.end());
    });
    return out;
}

}  // namespace

TEST_CASE("init is deterministic and capacities follow the target depth") {
    SearchSpaceSpec spec = SearchSpaceSpec::desk_default();  // n=3, m_t=8
    Supernet a(spec, 1), b(spec, 1), c(spec, 2);
    CHECK(a.digest_all() == b.digest_all());
    CHECK(a.digest_all() != c.digest_all());
    CHECK(a.capacities() == std::vector<int>{6, 6, 6});
    CHECK(spec.supernet_depth() == 18);
}

TEST_CASE("slot inventory: 18 cell blocks plus stem and classifier") {
    SearchSpaceSpec spec = SearchSpaceSpec::desk_default(Family::residual);  // m_t = 8
    Supernet sn(spec, 3);
    std::size_t cells = 0;
    for (const auto& g : sn.params().groups) cells += g.size();
    CHECK(cells == 18);
    CHECK(sn.params().has_stem);
    CHECK_FALSE(sn.params().classifier.empty());
    CHECK(sn.full_assignment() == LayerAssignment({6, 6, 6}));
}

TEST_CASE("sample enforces capacity") {
    Supernet sn(small_spec(), 42);  // capacities [4, 4]
    CHECK_NOTHROW(sn.sample(LayerAssignment({4, 4})));
    CHECK_THROWS_AS(sn.sample(LayerAssignment({5, 1})), std::domain_error);
    CHECK_THROWS_AS(sn.sample(LayerAssignment({1, 1, 1})), std::domain_error);
}

TEST_CASE("view logits equal extracted stand-alone logits exactly") {
    Rng rng(7);
    for (const Family family : {Family::plain, Family::residual}) {
        Supernet sn(small_spec(family), 11);
        for (const auto& groups :
             std::vector<std::vector<int>>{{1, 1}, {2, 1}, {4, 4}, {1, 3}, {3, 2}}) {
            const LayerAssignment a(groups);
            auto view = sn.sample(a);
            const auto standalone = sn.extract(a);
            const auto x = random_tensor<float>({4, 3, 8, 8}, rng);
            const auto view_logits = view.logits(x);
            const auto alone_logits =
                las::forward_eval(sn.spec(), standalone.params, a, x);
            REQUIRE(view_logits.shape == alone_logits.shape);
            float max_abs = 0.0f;
            for (std::size_t i = 0; i < view_logits.size(); ++i)
                max_abs = std::max(max_abs,
                                   std::abs(view_logits.v[i] - alone_logits.v[i]));
            CHECK(max_abs == 0.0f);  // identical code path and accumulation order
        }
    }
}

TEST_CASE("views alias the shared weights") {
    Supernet sn(small_spec(), 13);
    const LayerAssignment a({2, 1});
    const auto before = sn.digest_selected(a);

    Rng rng(8);
    const auto x = random_tensor<float>({8, 3, 8, 8}, rng);
    const std::vector<std::uint16_t> labels{0, 1, 2, 0, 1, 2, 0, 1};
    sn.train_view_batch(a, x, labels, 0.05f, knobs());

    CHECK(sn.digest_selected(a) != before);
    // a fresh sample of the same assignment sees the updated weights
    auto view = sn.sample(a);
    const auto extracted = sn.extract(a);
    const auto view_logits = view.logits(x);
    const auto alone_logits = las::forward_eval(sn.spec(), extracted.params, a, x);
    for (std::size_t i = 0; i < view_logits.size(); ++i)
        CHECK(view_logits.v[i] == alone_logits.v[i]);
}

TEST_CASE("a candidate step leaves every slot outside its prefix untouched") {
    for (const Family family : {Family::plain, Family::residual}) {
        Supernet sn(small_spec(family), 17);
        const LayerAssignment a({2, 1});
        const auto outside_before = sn.digest_complement(a);
        const auto inside_before = sn.digest_selected(a);

        Rng rng(9);
        const auto x = random_tensor<float>({8, 3, 8, 8}, rng);
        const std::vector<std::uint16_t> labels{0, 1, 2, 0, 1, 2, 0, 1};
        sn.train_view_batch(a, x, labels, 0.05f, knobs());

        CHECK(sn.digest_complement(a) == outside_before);
        CHECK(sn.digest_selected(a) != inside_before);
    }
}

TEST_CASE("prefix sharing: an assignment's slots appear unchanged in its successors") {
    Supernet sn(small_spec(), 19);
    const LayerAssignment a({2, 2});
    const auto base = sn.extract(a);
    for (const auto& s : a.successors()) {
        const auto wider = sn.extract(s);
        CHECK(las::params_digest(wider.params, a.groups()) ==
              las::params_digest(base.params, a.groups()));
    }
}

TEST_CASE("warmup: zero epochs is a no-op, a few epochs beat chance") {
    const auto data = las::generate_synthetic_task(701, 3, 30, {3, 8, 8}, 0.1);
    Supernet sn(small_spec(), 23);

    auto cfg = knobs();
    cfg.epochs = 0;
    const auto before = sn.digest_all();
    const auto summary0 = sn.warmup(data, cfg);
    CHECK(sn.digest_all() == before);
    CHECK(summary0.optimizer_steps == 0);

    cfg.epochs = 6;
    sn.warmup(data, cfg);
    const double acc = sn.evaluate_view(sn.full_assignment(), data.val, cfg.batch_size);
    CHECK(acc > 1.5 / 3.0);  // well above the 1/num_classes chance level

    // determinism: same seed, same digests
    Supernet sn2(small_spec(), 23), sn3(small_spec(), 23);
    sn2.warmup(data, cfg);
    sn3.warmup(data, cfg);
    CHECK(sn2.digest_all() == sn3.digest_all());
}

TEST_CASE("interleaved training: 1 + n optimizer steps per batch") {
    const auto data = las::generate_synthetic_task(702, 3, 20, {3, 8, 8}, 0.2);
    // 48 train samples, batch 8 -> 6 batches per epoch
    Supernet sn(small_spec(), 29);
    las::BatchStream stream(data.train, 8, 99, false, false);
    const long long batches = stream.batches_per_epoch();

    const LayerAssignment winner = las::seed_assignment(2);
    const auto cands = winner.successors();  // n = 2 candidates
    const auto summary = sn.train_candidates_interleaved(cands, stream, knobs(), 1, 0.025);
    CHECK(summary.optimizer_steps == (1 + 2) * batches);
    CHECK(summary.diverged == std::vector<char>{0, 0});

    // an empty candidate list degenerates to full-capacity steps only
    const auto only_deep = sn.train_candidates_interleaved({}, stream, knobs(), 2, 0.025);
    CHECK(only_deep.optimizer_steps == 2 * batches);

    CHECK_THROWS_AS(
        sn.train_candidates_interleaved({winner, winner, winner}, stream, knobs(), 1, 0.025),
        std::invalid_argument);
}

TEST_CASE("bn recalculation: single batch reproduces batch statistics") {
    const auto data = las::generate_synthetic_task(703, 3, 20, {3, 8, 8}, 0.2);
    Supernet sn(small_spec(), 31);
    const LayerAssignment a({2, 1});

    las::Dataset calib;  // exactly one batch worth of samples
    calib.shape = data.train.shape;
    const std::size_t m = 8;
    calib.pixels.assign(data.train.pixels.begin(),
                        data.train.pixels.begin() +
                            static_cast<std::ptrdiff_t>(m * data.train.sample_size()));
    calib.labels.assign(data.train.labels.begin(),
                        data.train.labels.begin() + static_cast<std::ptrdiff_t>(m));

    sn.recalc_bn(a, calib, static_cast<int>(m));

    // independent recomputation of the first bn layer's input statistics
    const auto x = las::dataset_batch(calib, 0, m);
    const auto& conv = sn.params().groups[0][0].conv1;
    Tensor<float> z({static_cast<int>(m), 2, 8, 8});
    las::kern::conv2d_forward(x.data(), static_cast<int>(m), 3, 8, 8, conv.w.data(), 2, 3, 3, 1,
                              1, z.data());
    Tensor<float> mean({2}), var({2});
    las::kern::bn_channel_stats(z.data(), static_cast<int>(m), 2, 8, 8, mean.data(), var.data());
    const auto& bn = sn.params().groups[0][0].bn1;
    for (int c = 0; c < 2; ++c) {
        CHECK(bn.rmean.v[static_cast<std::size_t>(c)] ==
              doctest::Approx(mean.v[static_cast<std::size_t>(c)]).epsilon(1e-6));
        CHECK(bn.rvar.v[static_cast<std::size_t>(c)] ==
              doctest::Approx(var.v[static_cast<std::size_t>(c)]).epsilon(1e-6));
    }

    CHECK_THROWS_AS(sn.recalc_bn(a, las::Dataset{}, 8), std::domain_error);
}

TEST_CASE("bn recalculation is order-independent over calibration halves") {
    const auto data = las::generate_synthetic_task(704, 3, 24, {3, 8, 8}, 0.3);
    const LayerAssignment a({2, 2});

    const std::size_t half = data.train.count() / 2;
    auto slice = [&](std::size_t lo, std::size_t hi) {
        las::Dataset d;
        d.shape = data.train.shape;
        d.pixels.assign(
            data.train.pixels.begin() + static_cast<std::ptrdiff_t>(lo * data.train.sample_size()),
            data.train.pixels.begin() + static_cast<std::ptrdiff_t>(hi * data.train.sample_size()));
        d.labels.assign(data.train.labels.begin() + static_cast<std::ptrdiff_t>(lo),
                        data.train.labels.begin() + static_cast<std::ptrdiff_t>(hi));
        return d;
    };
    auto concat = [](const las::Dataset& x, const las::Dataset& y) {
        las::Dataset d = x;
        d.pixels.insert(d.pixels.end(), y.pixels.begin(), y.pixels.end());
        d.labels.insert(d.labels.end(), y.labels.begin(), y.labels.end());
        return d;
    };
    // equal halves: the batching must be identical in both orders, otherwise
    // the upstream batch-stat normalization itself changes
    const auto first = slice(0, half), second = slice(half, 2 * half);

    Supernet sn_ab(small_spec(), 37), sn_ba(small_spec(), 37);
    sn_ab.recalc_bn(a, concat(first, second), static_cast<int>(half));
    sn_ba.recalc_bn(a, concat(second, first), static_cast<int>(half));

    const auto stats_ab = bn_state_snapshot(sn_ab.params(), a.groups());
    const auto stats_ba = bn_state_snapshot(sn_ba.params(), a.groups());
    REQUIRE(stats_ab.size() == stats_ba.size());
    for (std::size_t i = 0; i < stats_ab.size(); ++i)
        CHECK(stats_ab[i] == doctest::Approx(stats_ba[i]).epsilon(1e-6));
}

TEST_CASE("bn recalculation fixes stale statistics and then reaches a fixed point") {
    const auto data = las::generate_synthetic_task(705, 3, 20, {3, 8, 8}, 0.2);
    Supernet sn(small_spec(), 41);
    const LayerAssignment a({1, 2});

    // poison the running statistics
    las::visit_bn_state<float>(sn.params(), a.groups(),
                               [](Tensor<float>& t) { t.fill(5.0f); });
    const auto x = las::dataset_batch(data.val, 0, 8);
    const auto stale = las::forward_eval(sn.spec(), sn.params(), a, x);

    sn.recalc_bn(a, data.calib, 8);
    const auto fresh = las::forward_eval(sn.spec(), sn.params(), a, x);
    bool changed = false;
    for (std::size_t i = 0; i < fresh.size(); ++i)
        changed = changed || fresh.v[i] != stale.v[i];
    CHECK(changed);

    // idempotent: a second pass reproduces the same statistics exactly
    const auto snap1 = bn_state_snapshot(sn.params(), a.groups());
    sn.recalc_bn(a, data.calib, 8);
    const auto snap2 = bn_state_snapshot(sn.params(), a.groups());
    CHECK(snap1 == snap2);
    const auto again = las::forward_eval(sn.spec(), sn.params(), a, x);
    for (std::size_t i = 0; i < fresh.size(); ++i) CHECK(again.v[i] == fresh.v[i]);
}

TEST_CASE("accuracy gap") {
    using pairs_t = std::vector<std::pair<double, double>>;
    CHECK(las::accuracy_gap(pairs_t{{0.70, 0.70}}) == 0.0);
    CHECK(las::accuracy_gap(pairs_t{{0.70, 0.68}, {0.60, 0.63}}) == doctest::Approx(0.025));

    // independent mean-of-absolute-differences oracle on random pairs
    Rng rng(55);
    pairs_t pairs;
    double expected = 0.0;
    for (int i = 0; i < 100; ++i) {
        const double s = rng.uniform(), o = rng.uniform();
        pairs.emplace_back(s, o);
        expected += s > o ? s - o : o - s;
    }
    expected /= 100.0;
    CHECK(std::abs(las::accuracy_gap(pairs) - expected) < 1e-12);

    CHECK_THROWS_AS(las::accuracy_gap(pairs_t{}), std::domain_error);
    CHECK_THROWS_AS(las::accuracy_gap(pairs_t{{1.2, 0.5}}), std::domain_error);
}
