// Command-line front end: search, oracle, verify-nir, compare, report.
// Every run writes its resolved config and a digest manifest under --out.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "las/checkpoint.hpp"
#include "las/oracle.hpp"
#include "las/report.hpp"
#include "las/run_config.hpp"
#include "las/supernet.hpp"

namespace fs = std::filesystem;

namespace {

std::string read_text(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw las::IoError(path + ": cannot open");
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::trunc | std::ios::binary);
    if (!f) throw las::IoError(path.string() + ": cannot open for writing");
    f << text;
    if (!f) throw las::IoError(path.string() + ": write failed");
}

// collects output files and finishes with a digest manifest
class OutDir {
public:
    explicit OutDir(const std::string& dir) : dir_(dir) {
        fs::create_directories(dir_);
    }
    void write(const std::string& name, const std::string& text) {
        write_text(dir_ / name, text);
        files_[name] = las::hex_digest(las::fnv1a64(text));
    }
    void note_existing(const std::string& name) {
        files_[name] = las::hex_digest(las::fnv1a64(read_text((dir_ / name).string())));
    }
    fs::path path(const std::string& name) const { return dir_ / name; }
    void finish() {
        nlohmann::json files_json;
        for (const auto& [name, digest] : files_) files_json[name] = digest;
        const nlohmann::json j{{"manifest_version", 1}, {"files", files_json}};
        write_text(dir_ / "manifest.json", j.dump(2) + "\n");
    }

private:
    fs::path dir_;
    std::map<std::string, std::string> files_;
};

las::DataFormat format_from_path(const std::string& path) {
    if (path.size() >= 4 && path.substr(path.size() - 4) == ".csv") return las::DataFormat::csv;
    return las::DataFormat::lasd;
}

struct CommonArgs {
    std::string config_path;
    std::string data_path;
    std::string out_dir = "las_out";
    std::optional<std::uint64_t> seed;

    las::RunConfig resolve() const {
        las::RunConfig cfg =
            config_path.empty() ? las::RunConfig{} : las::RunConfig::load(config_path);
        if (!data_path.empty()) {
            cfg.dataset.kind = format_from_path(data_path) == las::DataFormat::csv
                                   ? las::DatasetSource::Kind::csv
                                   : las::DatasetSource::Kind::lasd;
            cfg.dataset.path = data_path;
        }
        if (seed) {
            cfg.seed = *seed;
            cfg.train.rng_seed = *seed;
        }
        cfg.out_dir = out_dir;
        return cfg;
    }
};

int parse_workers_env(int flag_value) {
    if (const char* env = std::getenv("LAS_WORKERS")) {
        try {
            return std::stoi(env);
        } catch (const std::exception&) {
            throw las::IoError(std::string("LAS_WORKERS is not an integer: \"") + env + "\"");
        }
    }
    return flag_value;
}

std::pair<int, int> parse_depth_range(const std::string& text) {
    const auto pos = text.find("..");
    if (pos == std::string::npos)
        throw las::IoError("bad depth range \"" + text + "\" (expected LO..HI)");
    try {
        return {std::stoi(text.substr(0, pos)), std::stoi(text.substr(pos + 2))};
    } catch (const std::exception&) {
        throw las::IoError("bad depth range \"" + text + "\"");
    }
}

int cmd_search(const CommonArgs& common, const std::string& surrogate_kind) {
    las::RunConfig cfg = common.resolve();
    OutDir out(cfg.out_dir);
    out.write("config_resolved.json", cfg.to_json());

    las::SearchTrace trace;
    if (!surrogate_kind.empty()) {
        const las::SurrogateLandscape landscape(
            las::SurrogateLandscape::kind_from_name(surrogate_kind), cfg.spec.n,
            cfg.spec.target_depth, cfg.seed);
        trace = las::run_search_surrogate(landscape, cfg.spec.target_depth);
    } else {
        const las::DatasetSplit data = cfg.dataset.realize(cfg.spec.num_classes);
        trace = las::run_search(cfg.search_config(), data);
    }
    out.write("search_trace.json", trace.to_json());
    out.finish();

    std::cout << "chain:";
    for (const auto& a : trace.chain) std::cout << ' ' << a.str();
    std::cout << "\nbudget: " << trace.budget << " candidate trainings\n";
    if (!trace.error.empty()) {
        std::cerr << "search error: " << trace.error << '\n';
        return 2;
    }
    return 0;
}

int cmd_oracle(const CommonArgs& common, const std::string& depths, int workers,
               const std::string& family_override) {
    las::RunConfig cfg = common.resolve();
    if (!family_override.empty()) cfg.spec.cell_kind = las::family_from_name(family_override);
    const auto [lo, hi] = depths.empty() ? std::pair<int, int>{cfg.spec.n + 1, cfg.spec.target_depth}
                                         : parse_depth_range(depths);
    workers = parse_workers_env(workers);

    OutDir out(cfg.out_dir);
    out.write("config_resolved.json", cfg.to_json());
    const las::DatasetSplit data = cfg.dataset.realize(cfg.spec.num_classes);

    // resume from a previous partial run, then journal new records as they
    // finish so an interrupted run stays resumable
    const fs::path csv_path = out.path("oracle.csv");
    std::optional<las::ArchitectureDataset> resume;
    if (fs::exists(csv_path)) {
        resume = las::ArchitectureDataset::load_csv(csv_path.string());
        std::cout << "resuming: " << resume->size() << " records already present\n";
    }
    std::ofstream journal;
    if (!fs::exists(csv_path)) {
        journal.open(csv_path);
        journal << "# oracle_csv_version 1\n"
                << "family,assignment,depth,val_acc,seed,config_digest\n";
    } else {
        journal.open(csv_path, std::ios::app);
    }
    auto on_record = [&journal](const las::ArchitectureRecord& rec) {
        std::ostringstream row;
        row << las::family_name(rec.family) << ',' << rec.assignment.str() << ',' << rec.depth()
            << ',';
        if (rec.ok) {
            char buf[40];
            std::snprintf(buf, sizeof(buf), "%.17g", rec.val_acc);
            row << buf;
        } else {
            row << "nan";
        }
        row << ',' << rec.seed << ',' << las::hex_digest(rec.config_digest) << '\n';
        journal << row.str() << std::flush;
    };

    const las::ArchitectureDataset ds = las::build_architecture_dataset(
        cfg.spec, lo, hi, cfg.train, data, workers, resume ? &*resume : nullptr, on_record);
    journal.close();
    ds.save_csv(csv_path.string());  // canonical order
    out.note_existing("oracle.csv");
    out.finish();

    std::cout << "oracle: " << ds.size() << " records over depths " << lo << ".." << hi << '\n';
    return 0;
}

int cmd_verify_nir(const std::string& dataset_path, int topk, const std::string& family,
                   const std::string& out_dir) {
    const auto ds = las::ArchitectureDataset::load_csv(dataset_path);
    OutDir out(out_dir);
    const las::NirReport report = las::verify_nir(ds, las::family_from_name(family), topk);
    out.write("nir_report.json", report.to_json());
    out.finish();
    std::cout << "inheritance fraction at top-" << topk << ": " << report.fraction << " ("
              << report.pairs.size() << " depth pairs)\n";
    return 0;
}

int cmd_compare(const CommonArgs& common, const std::string& trace_path,
                const std::string& dataset_path, bool retrain) {
    las::RunConfig cfg = common.resolve();
    const las::SearchTrace trace = las::SearchTrace::from_json_text(read_text(trace_path));
    const auto ds = las::ArchitectureDataset::load_csv(dataset_path);

    std::optional<las::TrainConfig> retrain_cfg;
    std::optional<las::DatasetSplit> data;
    if (retrain) {
        retrain_cfg = cfg.train;
        data = cfg.dataset.realize(cfg.spec.num_classes);
    }
    const auto rows = las::compare_search_to_oracle(trace, ds, cfg.spec, retrain_cfg,
                                                    data ? &*data : nullptr);
    OutDir out(cfg.out_dir);
    out.write("compare.csv", las::compare_csv(rows));
    out.finish();

    for (const auto& r : rows)
        std::cout << "depth " << r.depth << ": searched " << r.searched.str() << " ("
                  << r.searched_acc << ") vs best " << r.best.str() << " (" << r.best_acc
                  << "), gap " << r.gap << '\n';
    return 0;
}

int cmd_report(const std::string& dataset_path, const std::string& trace_path,
               const std::string& family, int topk, const std::string& out_dir) {
    if (dataset_path.empty() && trace_path.empty())
        throw las::IoError("report: need --dataset and/or --trace");
    OutDir out(out_dir);
    if (!dataset_path.empty()) {
        const auto ds = las::ArchitectureDataset::load_csv(dataset_path);
        const las::Family fam = las::family_from_name(family);
        out.write("report_depth_curves.csv", las::report_depth_curves(ds, fam));
        out.write("report_nir_chains.csv", las::report_nir_chains(ds, fam, topk));
    }
    if (!trace_path.empty()) {
        const las::SearchTrace trace = las::SearchTrace::from_json_text(read_text(trace_path));
        out.write("report_step_candidates.csv", las::report_step_candidates(trace));
    }
    out.finish();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"layer assignment search over a weight-sharing supernet"};
    app.require_subcommand(1);

    CommonArgs common;
    std::string surrogate_kind, depths, family = "plain", trace_path, dataset_path;
    int workers = 0, topk = 4;
    bool retrain = false;

    auto add_common = [&common](CLI::App* sub, bool with_data = true) {
        sub->add_option("--config", common.config_path, "run config JSON");
        if (with_data) sub->add_option("--data", common.data_path, "dataset pool file (.lasd or .csv)");
        sub->add_option("--out", common.out_dir, "output directory");
        sub->add_option("--seed", common.seed, "override the run seed");
    };

    CLI::App* search = app.add_subcommand("search", "run the inherited-sampling search");
    add_common(search);
    search->add_option("--surrogate", surrogate_kind,
                       "skip training, score candidates on a landscape (planted|random|adversarial)");

    CLI::App* oracle = app.add_subcommand("oracle", "train every assignment stand-alone");
    add_common(oracle);
    oracle->add_option("--depths", depths, "depth range LO..HI");
    oracle->add_option("--workers", workers, "parallel trainers (0 = all cores)");
    oracle->add_option("--family", family, "plain|residual");

    CLI::App* verify = app.add_subcommand("verify-nir", "check inheritance on an oracle table");
    verify->add_option("--dataset", dataset_path, "oracle.csv")->required();
    verify->add_option("--topk", topk, "parents considered per depth");
    verify->add_option("--family", family, "plain|residual");
    verify->add_option("--out", common.out_dir, "output directory");

    CLI::App* compare = app.add_subcommand("compare", "score a search trace against an oracle");
    add_common(compare, false);
    compare->add_option("--trace", trace_path, "search_trace.json")->required();
    compare->add_option("--dataset", dataset_path, "oracle.csv")->required();
    compare->add_flag("--retrain", retrain, "retrain trace winners from scratch");

    CLI::App* report = app.add_subcommand("report", "emit plot-data CSVs");
    report->add_option("--dataset", dataset_path, "oracle.csv");
    report->add_option("--trace", trace_path, "search_trace.json");
    report->add_option("--family", family, "plain|residual");
    report->add_option("--topk", topk, "rows per depth in the top-k table");
    report->add_option("--out", common.out_dir, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (app.got_subcommand(search)) return cmd_search(common, surrogate_kind);
        if (app.got_subcommand(oracle)) return cmd_oracle(common, depths, workers, family);
        if (app.got_subcommand(verify))
            return cmd_verify_nir(dataset_path, topk, family, common.out_dir);
        if (app.got_subcommand(compare)) return cmd_compare(common, trace_path, dataset_path, retrain);
        if (app.got_subcommand(report))
            return cmd_report(dataset_path, trace_path, family, topk, common.out_dir);
    } catch (const las::IoError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
