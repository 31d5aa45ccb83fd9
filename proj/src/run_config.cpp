#include "las/run_config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace las {

namespace {

using nlohmann::json;

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& ctx) {
    for (const auto& [key, value] : obj.items()) {
        if (!allowed.count(key))
            throw IoError("config: unknown key \"" + key + "\" in " + ctx);
    }
}

std::array<int, 3> parse_shape3(const json& j, const std::string& ctx) {
    if (!j.is_array() || j.size() != 3)
        throw IoError("config: " + ctx + " must be a three-element array");
    return {j[0].get<int>(), j[1].get<int>(), j[2].get<int>()};
}

LrSchedule parse_schedule(const json& j) {
    check_keys(j, {"kind", "milestones", "factor"}, "train.lr_schedule");
    LrSchedule s;
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "constant")
        s.kind = LrSchedule::Kind::constant;
    else if (kind == "multistep")
        s.kind = LrSchedule::Kind::multistep;
    else if (kind == "linear_decay")
        s.kind = LrSchedule::Kind::linear_decay;
    else
        throw IoError("config: unknown lr schedule kind \"" + kind + "\"");
    if (j.contains("milestones"))
        s.milestones = j["milestones"].get<std::vector<int>>();
    if (j.contains("factor")) s.factor = j["factor"].get<double>();
    return s;
}

json schedule_to_json(const LrSchedule& s) {
    json j;
    switch (s.kind) {
        case LrSchedule::Kind::constant: j["kind"] = "constant"; break;
        case LrSchedule::Kind::multistep: j["kind"] = "multistep"; break;
        case LrSchedule::Kind::linear_decay: j["kind"] = "linear_decay"; break;
    }
    if (s.kind == LrSchedule::Kind::multistep) {
        j["milestones"] = s.milestones;
        j["factor"] = s.factor;
    }
    return j;
}

}  // namespace

DatasetSplit DatasetSource::realize(int expected_classes) const {
    switch (kind) {
        case Kind::synthetic:
            return generate_synthetic_task(seed, num_classes, samples_per_class, shape, noise);
        case Kind::lasd:
            return load_split(path, DataFormat::lasd, expected_classes);
        case Kind::csv:
            return load_split(path, DataFormat::csv, expected_classes);
    }
    throw std::logic_error("unreachable dataset kind");
}

RunConfig RunConfig::from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw IoError(std::string("config: invalid JSON: ") + e.what());
    }
    check_keys(j, {"seed", "spec", "train", "search", "dataset", "out_dir"}, "the top level");

    RunConfig cfg;
    if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("out_dir")) cfg.out_dir = j["out_dir"].get<std::string>();

    if (j.contains("spec")) {
        const json& js = j["spec"];
        check_keys(js,
                   {"n", "channel_plan", "input_shape", "num_classes", "cell_kind",
                    "classifier_plan", "target_depth", "group_capacity"},
                   "spec");
        SearchSpaceSpec& s = cfg.spec;
        if (js.contains("n")) s.n = js["n"].get<int>();
        if (js.contains("channel_plan")) s.channel_plan = js["channel_plan"].get<std::vector<int>>();
        if (js.contains("input_shape")) s.input_shape = parse_shape3(js["input_shape"], "spec.input_shape");
        if (js.contains("num_classes")) s.num_classes = js["num_classes"].get<int>();
        if (js.contains("cell_kind")) s.cell_kind = family_from_name(js["cell_kind"].get<std::string>());
        if (js.contains("classifier_plan"))
            s.classifier_plan = js["classifier_plan"].get<std::vector<int>>();
        if (js.contains("target_depth")) s.target_depth = js["target_depth"].get<int>();
        if (js.contains("group_capacity"))
            s.group_capacity = js["group_capacity"].get<std::vector<int>>();
        // keep defaults coherent when only parts were overridden
        if (!js.contains("channel_plan") && s.n != 3) {
            s.channel_plan.assign(static_cast<std::size_t>(s.n), 0);
            int c = 8;
            for (int g = 0; g < s.n; ++g, c *= 2) s.channel_plan[static_cast<std::size_t>(g)] = c;
        }
        if (!js.contains("classifier_plan")) s.classifier_plan = {64, s.num_classes};
    }

    if (j.contains("train")) {
        const json& jt = j["train"];
        check_keys(jt,
                   {"base_lr", "lr_schedule", "momentum", "weight_decay", "bn_momentum",
                    "batch_size", "epochs", "rng_seed", "augment_flip", "augment_pad_crop"},
                   "train");
        TrainConfig& t = cfg.train;
        if (jt.contains("base_lr")) t.base_lr = jt["base_lr"].get<double>();
        if (jt.contains("lr_schedule")) t.lr_schedule = parse_schedule(jt["lr_schedule"]);
        if (jt.contains("momentum")) t.momentum = jt["momentum"].get<double>();
        if (jt.contains("weight_decay")) t.weight_decay = jt["weight_decay"].get<double>();
        if (jt.contains("bn_momentum")) t.bn_momentum = jt["bn_momentum"].get<double>();
        if (jt.contains("batch_size")) t.batch_size = jt["batch_size"].get<int>();
        if (jt.contains("epochs")) t.epochs = jt["epochs"].get<int>();
        if (jt.contains("rng_seed")) t.rng_seed = jt["rng_seed"].get<std::uint64_t>();
        if (jt.contains("augment_flip")) t.augment_flip = jt["augment_flip"].get<bool>();
        if (jt.contains("augment_pad_crop"))
            t.augment_pad_crop = jt["augment_pad_crop"].get<bool>();
    }

    if (j.contains("search")) {
        const json& jq = j["search"];
        check_keys(jq, {"step_epochs", "warmup_epochs", "base_lr", "search_lr", "calib_size"},
                   "search");
        if (jq.contains("step_epochs")) cfg.step_epochs = jq["step_epochs"].get<int>();
        if (jq.contains("warmup_epochs")) cfg.warmup_epochs = jq["warmup_epochs"].get<int>();
        if (jq.contains("base_lr")) cfg.base_lr = jq["base_lr"].get<double>();
        if (jq.contains("search_lr")) cfg.search_lr = jq["search_lr"].get<double>();
        if (jq.contains("calib_size")) cfg.calib_size = jq["calib_size"].get<int>();
    }

    if (j.contains("dataset")) {
        const json& jd = j["dataset"];
        check_keys(jd,
                   {"kind", "num_classes", "samples_per_class", "shape", "noise", "seed", "path"},
                   "dataset");
        DatasetSource& d = cfg.dataset;
        const std::string kind = jd.contains("kind") ? jd["kind"].get<std::string>() : "synthetic";
        if (kind == "synthetic")
            d.kind = DatasetSource::Kind::synthetic;
        else if (kind == "lasd")
            d.kind = DatasetSource::Kind::lasd;
        else if (kind == "csv")
            d.kind = DatasetSource::Kind::csv;
        else
            throw IoError("config: unknown dataset kind \"" + kind + "\"");
        if (jd.contains("num_classes")) d.num_classes = jd["num_classes"].get<int>();
        if (jd.contains("samples_per_class"))
            d.samples_per_class = jd["samples_per_class"].get<int>();
        if (jd.contains("shape")) d.shape = parse_shape3(jd["shape"], "dataset.shape");
        if (jd.contains("noise")) d.noise = jd["noise"].get<double>();
        if (jd.contains("seed")) d.seed = jd["seed"].get<std::uint64_t>();
        if (jd.contains("path")) d.path = jd["path"].get<std::string>();
        if (d.kind != DatasetSource::Kind::synthetic && d.path.empty())
            throw IoError("config: file-backed dataset needs a path");
    }
    return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError(path + ": cannot open");
    std::stringstream ss;
    ss << f.rdbuf();
    return from_json_text(ss.str());
}

std::string RunConfig::to_json() const {
    json spec_json{{"n", spec.n},
                   {"channel_plan", spec.channel_plan},
                   {"input_shape", spec.input_shape},
                   {"num_classes", spec.num_classes},
                   {"cell_kind", family_name(spec.cell_kind)},
                   {"classifier_plan", spec.classifier_plan},
                   {"target_depth", spec.target_depth},
                   {"group_capacity", spec.capacities()}};
    json train_json{{"base_lr", train.base_lr},
                    {"lr_schedule", schedule_to_json(train.lr_schedule)},
                    {"momentum", train.momentum},
                    {"weight_decay", train.weight_decay},
                    {"bn_momentum", train.bn_momentum},
                    {"batch_size", train.batch_size},
                    {"epochs", train.epochs},
                    {"rng_seed", train.rng_seed},
                    {"augment_flip", train.augment_flip},
                    {"augment_pad_crop", train.augment_pad_crop}};
    json search_json{{"step_epochs", step_epochs},
                     {"warmup_epochs", warmup_epochs},
                     {"base_lr", base_lr},
                     {"search_lr", search_lr > 0.0 ? search_lr : base_lr / 2.0},
                     {"calib_size", calib_size}};
    json dataset_json;
    switch (dataset.kind) {
        case DatasetSource::Kind::synthetic:
            dataset_json = json{{"kind", "synthetic"},
                                {"num_classes", dataset.num_classes},
                                {"samples_per_class", dataset.samples_per_class},
                                {"shape", dataset.shape},
                                {"noise", dataset.noise},
                                {"seed", dataset.seed}};
            break;
        case DatasetSource::Kind::lasd:
            dataset_json = json{{"kind", "lasd"}, {"path", dataset.path}};
            break;
        case DatasetSource::Kind::csv:
            dataset_json = json{{"kind", "csv"}, {"path", dataset.path}};
            break;
    }
    json j{{"seed", seed},
           {"spec", std::move(spec_json)},
           {"train", std::move(train_json)},
           {"search", std::move(search_json)},
           {"dataset", std::move(dataset_json)}};
    if (!out_dir.empty()) j["out_dir"] = out_dir;
    return j.dump(2) + "\n";
}

std::uint64_t RunConfig::digest() const { return fnv1a64(to_json()); }

SearchConfig RunConfig::search_config() const {
    SearchConfig sc;
    sc.spec = spec;
    sc.step_epochs = step_epochs;
    sc.warmup_epochs = warmup_epochs;
    sc.base_lr = base_lr;
    sc.search_lr = search_lr;
    sc.calib_size = calib_size;
    sc.seed = seed;
    sc.train = train;
    return sc;
}

}  // namespace las
