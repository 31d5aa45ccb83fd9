#include "las/search.hpp"

#include <chrono>
#include <cmath>
#include <limits>

#include <json.hpp>

#include "las/supernet.hpp"

namespace las {

void SearchConfig::validate() const {
    spec.validate();
    train.validate();
    if (step_epochs < 1) throw std::invalid_argument("search config: step_epochs must be >= 1");
    if (warmup_epochs < 0) throw std::invalid_argument("search config: warmup_epochs must be >= 0");
    if (base_lr <= 0.0) throw std::invalid_argument("search config: base_lr must be positive");
    if (effective_search_lr() <= 0.0)
        throw std::invalid_argument("search config: search_lr must be positive");
    if (calib_size < 1) throw std::invalid_argument("search config: calib_size must be >= 1");
}

std::uint64_t SearchConfig::digest() const {
    std::uint64_t h = fnv1a64("SearchConfig");
    h = mix_u64(h, spec.digest());
    h = mix_u64(h, static_cast<std::uint64_t>(step_epochs));
    h = mix_u64(h, static_cast<std::uint64_t>(warmup_epochs));
    auto mixd = [&h](double x) { h = fnv1a64(&x, sizeof(x), h); };
    mixd(base_lr);
    mixd(effective_search_lr());
    h = mix_u64(h, static_cast<std::uint64_t>(calib_size));
    h = mix_u64(h, seed);
    h = mix_u64(h, train.digest(spec.digest()));
    return h;
}

LayerAssignment select_top1(const std::vector<std::pair<LayerAssignment, double>>& candidates) {
    if (candidates.empty()) throw std::domain_error("top1: empty candidate list");
    const auto* best = &candidates.front();
    for (const auto& c : candidates) {
        if (c.second > best->second ||
            (c.second == best->second && c.first < best->first))
            best = &c;
    }
    return best->first;
}

SearchTrace search_loop(int n, int target_depth, const SearchHooks& hooks) {
    if (n < 1) throw std::invalid_argument("search: group count must be positive");
    if (target_depth < n)
        throw std::invalid_argument("search: target depth below group count");

    SearchTrace trace;
    trace.n = n;
    trace.target_depth = target_depth;
    LayerAssignment winner = seed_assignment(n);
    trace.chain.push_back(winner);

    for (int p = n; p < target_depth; ++p) {
        const int step_index = p - n;
        const auto t0 = std::chrono::steady_clock::now();
        const std::vector<LayerAssignment> candidates = winner.successors();

        std::vector<char> diverged(candidates.size(), 0);
        if (hooks.train) diverged = hooks.train(step_index, candidates);
        trace.budget += static_cast<long long>(candidates.size());

        StepRecord rec{p + 1,
                       hooks.lr_used ? hooks.lr_used(step_index) : 0.0,
                       hooks.step_epochs,
                       0,
                       {},
                       diverged,
                       winner};
        std::vector<std::pair<LayerAssignment, double>> alive;
        for (std::size_t i = 0; i < candidates.size(); ++i) {
            double acc = std::numeric_limits<double>::quiet_NaN();
            if (!diverged[i]) {
                acc = hooks.evaluate(candidates[i]);
                alive.emplace_back(candidates[i], acc);
            }
            rec.candidates.emplace_back(candidates[i], acc);
        }
        if (alive.empty()) {
            rec.wall_ms = hooks.record_wall_clock
                              ? std::chrono::duration_cast<std::chrono::milliseconds>(
                                    std::chrono::steady_clock::now() - t0)
                                    .count()
                              : 0;
            trace.steps.push_back(std::move(rec));
            trace.error = "every candidate diverged at depth " + std::to_string(p + 1);
            return trace;
        }
        winner = select_top1(alive);
        rec.winner = winner;
        rec.wall_ms = hooks.record_wall_clock
                          ? std::chrono::duration_cast<std::chrono::milliseconds>(
                                std::chrono::steady_clock::now() - t0)
                                .count()
                          : 0;
        trace.steps.push_back(std::move(rec));
        trace.chain.push_back(winner);
    }
    return trace;
}

SearchTrace run_search(const SearchConfig& cfg, const DatasetSplit& data) {
    cfg.validate();
    if (data.train.empty()) throw std::invalid_argument("search: empty training set");
    if (data.val.empty()) throw std::invalid_argument("search: empty validation set");

    Supernet supernet(cfg.spec, derive_seed(cfg.seed, "supernet"));

    TrainConfig warm = cfg.train;
    warm.base_lr = cfg.base_lr;
    warm.lr_schedule = LrSchedule{};  // constant pre-set base learning rate
    warm.epochs = cfg.warmup_epochs;
    warm.rng_seed = derive_seed(cfg.seed, "warmup-stream");
    supernet.warmup(data, warm);

    // calibration subset: the split's calibration set when present, otherwise
    // drawn from the train set with the run seed; capped at calib_size
    Dataset calib = data.calib;
    if (calib.empty()) {
        Rng rng(derive_seed(cfg.seed, "calibration"));
        std::vector<std::size_t> order(data.train.count());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        rng.shuffle(order.begin(), order.end());
        order.resize(std::min<std::size_t>(order.size(),
                                           static_cast<std::size_t>(cfg.calib_size)));
        std::sort(order.begin(), order.end());
        calib.shape = data.train.shape;
        for (std::size_t row : order) {
            const std::uint8_t* s = data.train.sample(row);
            calib.pixels.insert(calib.pixels.end(), s, s + data.train.sample_size());
            calib.labels.push_back(data.train.labels[row]);
        }
    } else if (calib.count() > static_cast<std::size_t>(cfg.calib_size)) {
        calib.pixels.resize(static_cast<std::size_t>(cfg.calib_size) * calib.sample_size());
        calib.labels.resize(static_cast<std::size_t>(cfg.calib_size));
    }

    // one shuffle stream shared by all steps so data exposure carries across
    BatchStream stream(data.train, cfg.train.batch_size, derive_seed(cfg.seed, "step-stream"),
                       cfg.train.augment_flip, cfg.train.augment_pad_crop);

    const double step_lr = cfg.effective_search_lr();
    SearchHooks hooks;
    hooks.step_epochs = cfg.step_epochs;
    hooks.lr_used = [step_lr](int) { return step_lr; };
    hooks.train = [&](int, const std::vector<LayerAssignment>& candidates) {
        const InterleavedSummary s = supernet.train_candidates_interleaved(
            candidates, stream, cfg.train, cfg.step_epochs, step_lr);
        return s.diverged;
    };
    hooks.evaluate = [&](const LayerAssignment& a) {
        supernet.recalc_bn(a, calib, cfg.train.batch_size);
        return supernet.evaluate_view(a, data.val, cfg.train.batch_size);
    };

    SearchTrace trace = search_loop(cfg.spec.n, cfg.spec.target_depth, hooks);
    trace.config_digest = cfg.digest();
    return trace;
}

SearchTrace run_search_surrogate(const SurrogateLandscape& landscape, int target_depth) {
    if (target_depth > landscape.max_depth())
        throw std::invalid_argument("surrogate search: target depth beyond the landscape range");
    SearchHooks hooks;
    hooks.step_epochs = 0;
    hooks.record_wall_clock = false;  // keeps reruns byte-identical
    hooks.evaluate = [&landscape](const LayerAssignment& a) { return landscape.score(a); };
    SearchTrace trace = search_loop(landscape.group_count(), target_depth, hooks);
    trace.config_digest = landscape.digest();
    return trace;
}

namespace {

nlohmann::json step_to_json(const StepRecord& rec) {
    nlohmann::json cands = nlohmann::json::array();
    for (std::size_t i = 0; i < rec.candidates.size(); ++i) {
        nlohmann::json c{{"assignment", rec.candidates[i].first.str()}};
        if (rec.diverged[i])
            c["diverged"] = true;
        else
            c["val_acc"] = rec.candidates[i].second;
        cands.push_back(std::move(c));
    }
    return nlohmann::json{{"depth", rec.depth},
                          {"lr_used", rec.lr_used},
                          {"epochs", rec.epochs},
                          {"wall_ms", rec.wall_ms},
                          {"candidates", std::move(cands)},
                          {"winner", rec.winner.str()}};
}

}  // namespace

std::string SearchTrace::to_json() const {
    nlohmann::json steps_json = nlohmann::json::array();
    for (const auto& s : steps) steps_json.push_back(step_to_json(s));
    nlohmann::json chain_json = nlohmann::json::array();
    for (const auto& a : chain) chain_json.push_back(a.str());
    nlohmann::json j{{"trace_version", 1},
                     {"n", n},
                     {"target_depth", target_depth},
                     {"config_digest", hex_digest(config_digest)},
                     {"steps", std::move(steps_json)},
                     {"chain", std::move(chain_json)},
                     {"budget", budget}};
    if (!error.empty()) j["error"] = error;
    return j.dump(2) + "\n";
}

SearchTrace SearchTrace::from_json_text(const std::string& text) {
    const nlohmann::json j = nlohmann::json::parse(text);
    if (!j.contains("trace_version") || j["trace_version"].get<int>() != 1)
        throw IoError("trace: missing or unsupported trace_version");
    SearchTrace t;
    t.n = j.at("n").get<int>();
    t.target_depth = j.at("target_depth").get<int>();
    t.config_digest = std::stoull(j.at("config_digest").get<std::string>(), nullptr, 16);
    t.budget = j.at("budget").get<long long>();
    if (j.contains("error")) t.error = j["error"].get<std::string>();
    for (const auto& c : j.at("chain")) t.chain.push_back(LayerAssignment::parse(c.get<std::string>()));
    for (const auto& js : j.at("steps")) {
        StepRecord rec{js.at("depth").get<int>(),
                       js.at("lr_used").get<double>(),
                       js.at("epochs").get<int>(),
                       js.at("wall_ms").get<long long>(),
                       {},
                       {},
                       LayerAssignment::parse(js.at("winner").get<std::string>())};
        for (const auto& jc : js.at("candidates")) {
            const bool div = jc.contains("diverged") && jc["diverged"].get<bool>();
            rec.candidates.emplace_back(
                LayerAssignment::parse(jc.at("assignment").get<std::string>()),
                div ? std::numeric_limits<double>::quiet_NaN() : jc.at("val_acc").get<double>());
            rec.diverged.push_back(div ? 1 : 0);
        }
        t.steps.push_back(std::move(rec));
    }
    return t;
}

}  // namespace las
