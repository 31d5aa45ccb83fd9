#include "las/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <json.hpp>

#include "las/train.hpp"

namespace las {

ArchitectureDataset::Key ArchitectureDataset::key_of(Family f, const LayerAssignment& a) {
    return {f == Family::plain ? 0 : 1, a.depth(), a.groups()};
}

void ArchitectureDataset::insert(ArchitectureRecord rec) {
    const Key k = key_of(rec.family, rec.assignment);
    if (records_.count(k))
        throw std::invalid_argument("architecture dataset: duplicate record for " +
                                    family_name(rec.family) + " " + rec.assignment.str());
    records_.emplace(k, std::move(rec));
}

bool ArchitectureDataset::contains(Family f, const LayerAssignment& a) const {
    return records_.count(key_of(f, a)) != 0;
}

const ArchitectureRecord* ArchitectureDataset::find(Family f, const LayerAssignment& a) const {
    const auto it = records_.find(key_of(f, a));
    return it == records_.end() ? nullptr : &it->second;
}

std::vector<const ArchitectureRecord*> ArchitectureDataset::at_depth(Family f, int depth) const {
    std::vector<const ArchitectureRecord*> out;
    const int fi = f == Family::plain ? 0 : 1;
    for (auto it = records_.lower_bound(Key{fi, depth, {}}); it != records_.end(); ++it) {
        if (std::get<0>(it->first) != fi || std::get<1>(it->first) != depth) break;
        out.push_back(&it->second);
    }
    return out;
}

std::pair<int, int> ArchitectureDataset::depth_range(Family f) const {
    const int fi = f == Family::plain ? 0 : 1;
    int lo = 0, hi = -1;
    bool seen = false;
    for (const auto& [k, rec] : records_) {
        if (std::get<0>(k) != fi) continue;
        const int d = std::get<1>(k);
        if (!seen) {
            lo = hi = d;
            seen = true;
        } else {
            lo = std::min(lo, d);
            hi = std::max(hi, d);
        }
    }
    if (!seen)
        throw std::domain_error("architecture dataset: no records for family " + family_name(f));
    return {lo, hi};
}

std::vector<const ArchitectureRecord*> ArchitectureDataset::all() const {
    std::vector<const ArchitectureRecord*> out;
    out.reserve(records_.size());
    for (const auto& [k, rec] : records_) out.push_back(&rec);
    return out;
}

std::uint64_t ArchitectureDataset::digest() const {
    std::uint64_t h = fnv1a64("ArchitectureDataset");
    for (const auto& [k, rec] : records_) {
        h = fnv1a64(rec.assignment.str(), h);
        h = mix_u64(h, std::get<0>(k) == 0 ? 0u : 1u);
        h = fnv1a64(&rec.val_acc, sizeof(rec.val_acc), h);
        h = mix_u64(h, rec.seed);
        h = mix_u64(h, rec.config_digest);
        h = mix_u64(h, rec.ok ? 1u : 0u);
    }
    return h;
}

namespace {

std::string acc_to_string(double v) {
    if (std::isnan(v)) return "nan";
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

void ArchitectureDataset::save_csv(const std::string& path) const {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError(path + ": cannot open for writing");
    f << "# oracle_csv_version 1\n";
    f << "family,assignment,depth,val_acc,seed,config_digest\n";
    for (const auto& [k, rec] : records_) {
        f << family_name(rec.family) << ',' << rec.assignment.str() << ',' << rec.depth() << ','
          << acc_to_string(rec.ok ? rec.val_acc : std::nan("")) << ',' << rec.seed << ','
          << hex_digest(rec.config_digest) << '\n';
    }
    if (!f) throw IoError(path + ": write failed");
}

ArchitectureDataset ArchitectureDataset::load_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError(path + ": cannot open");
    ArchitectureDataset ds;
    std::string line;
    std::size_t lineno = 0;
    bool header_seen = false;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        if (!header_seen) {
            if (line != "family,assignment,depth,val_acc,seed,config_digest")
                throw IoError(path + ": unexpected header \"" + line + "\"");
            header_seen = true;
            continue;
        }
        std::vector<std::string> fields;
        std::size_t pos = 0;
        while (pos <= line.size()) {
            const std::size_t comma = line.find(',', pos);
            fields.push_back(line.substr(pos, comma == std::string::npos ? comma : comma - pos));
            if (comma == std::string::npos) break;
            pos = comma + 1;
        }
        if (fields.size() != 6)
            throw IoError(path + ": line " + std::to_string(lineno) + ": expected 6 fields, got " +
                          std::to_string(fields.size()));
        try {
            ArchitectureRecord rec{family_from_name(fields[0]),
                                   LayerAssignment::parse(fields[1]),
                                   fields[3] == "nan" ? std::nan("") : std::stod(fields[3]),
                                   std::stoull(fields[4]),
                                   std::stoull(fields[5], nullptr, 16),
                                   fields[3] != "nan"};
            if (rec.depth() != std::stoi(fields[2]))
                throw IoError(path + ": line " + std::to_string(lineno) +
                              ": depth column disagrees with the assignment");
            ds.insert(std::move(rec));
        } catch (const IoError&) {
            throw;
        } catch (const std::exception& e) {
            throw IoError(path + ": line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    if (!header_seen) throw IoError(path + ": missing header line");
    return ds;
}

std::uint64_t record_seed(std::uint64_t base_seed, Family family, const LayerAssignment& a) {
    std::uint64_t h = fnv1a64(&base_seed, sizeof(base_seed));
    h = fnv1a64(family_name(family), h);
    h = fnv1a64(a.str(), h);
    return h;
}

ArchitectureDataset build_architecture_dataset(
    const SearchSpaceSpec& spec, int depth_lo, int depth_hi, const TrainConfig& cfg,
    const DatasetSplit& data, int workers, const ArchitectureDataset* resume,
    const std::function<void(const ArchitectureRecord&)>& on_record) {
    spec.validate();
    cfg.validate();
    if (depth_lo < spec.n)
        throw std::domain_error("oracle: lower depth below the group count");
    if (depth_hi < depth_lo) throw std::domain_error("oracle: empty depth range");
    if (data.train.empty() || data.val.empty())
        throw std::invalid_argument("oracle: needs train and validation data");

    const Family family = spec.cell_kind;
    const std::uint64_t cfg_digest = cfg.digest(spec.digest());

    std::vector<LayerAssignment> jobs;
    for (int d = depth_lo; d <= depth_hi; ++d)
        for (auto& a : enumerate_assignments(d, spec.n)) jobs.push_back(std::move(a));

    std::vector<std::optional<ArchitectureRecord>> results(jobs.size());
    std::vector<char> todo(jobs.size(), 1);
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        if (resume && resume->contains(family, jobs[i])) {
            results[i] = *resume->find(family, jobs[i]);
            todo[i] = 0;
        }
    }

#ifdef _OPENMP
    omp_set_max_active_levels(1);  // kernels inside a job run serially
    const int threads = workers > 0 ? workers : omp_get_max_threads();
#else
    const int threads = 1;
    (void)workers;
#endif
    std::mutex record_mutex;
    const auto n_jobs = static_cast<std::ptrdiff_t>(jobs.size());
#pragma omp parallel for schedule(dynamic) num_threads(threads)
    for (std::ptrdiff_t i = 0; i < n_jobs; ++i) {
        if (!todo[static_cast<std::size_t>(i)]) continue;
        const LayerAssignment& a = jobs[static_cast<std::size_t>(i)];
        TrainConfig job_cfg = cfg;
        job_cfg.rng_seed = record_seed(cfg.rng_seed, family, a);
        ArchitectureRecord rec{family, a, 0.0, job_cfg.rng_seed, cfg_digest, true};
        try {
            Network<float> net =
                build_network<float>(spec, a, derive_seed(job_cfg.rng_seed, "init"));
            const TrainSummary s = train_network(net, data, job_cfg);
            rec.val_acc = s.final_val_acc;
        } catch (const std::exception&) {
            rec.ok = false;
            rec.val_acc = std::nan("");
        }
        {
            std::lock_guard<std::mutex> lock(record_mutex);
            if (on_record) on_record(rec);
            results[static_cast<std::size_t>(i)] = std::move(rec);
        }
    }

    ArchitectureDataset ds;
    for (auto& r : results)
        if (r) ds.insert(std::move(*r));
    return ds;
}

ArchitectureDataset dataset_from_landscape(const SurrogateLandscape& landscape, Family family,
                                           int depth_lo, int depth_hi) {
    ArchitectureDataset ds;
    for (int d = depth_lo; d <= depth_hi; ++d)
        for (const auto& a : enumerate_assignments(d, landscape.group_count()))
            ds.insert(ArchitectureRecord{family, a, landscape.score(a), 0, landscape.digest(), true});
    return ds;
}

std::map<int, std::vector<ArchitectureRecord>> best_per_depth(const ArchitectureDataset& ds,
                                                              Family family, int k) {
    if (k < 1) throw std::invalid_argument("best_per_depth: k must be >= 1");
    const auto [lo, hi] = ds.depth_range(family);
    std::map<int, std::vector<ArchitectureRecord>> out;
    for (int d = lo; d <= hi; ++d) {
        std::vector<ArchitectureRecord> recs;
        for (const auto* r : ds.at_depth(family, d))
            if (r->ok) recs.push_back(*r);
        std::sort(recs.begin(), recs.end(),
                  [](const ArchitectureRecord& x, const ArchitectureRecord& y) {
                      if (x.val_acc != y.val_acc) return x.val_acc > y.val_acc;
                      return x.assignment < y.assignment;
                  });
        if (static_cast<int>(recs.size()) > k)
            recs.erase(recs.begin() + k, recs.end());
        out.emplace(d, std::move(recs));
    }
    return out;
}

NirReport verify_nir(const ArchitectureDataset& ds, Family family, int k) {
    const auto [lo, hi] = ds.depth_range(family);
    for (int d = lo; d <= hi; ++d)
        if (ds.at_depth(family, d).empty())
            throw std::domain_error("nir: gap in depth coverage at depth " + std::to_string(d));

    const auto top = best_per_depth(ds, family, k);
    NirReport report;
    report.family = family;
    report.topk = k;
    int inherited_count = 0;
    for (int d = lo; d < hi; ++d) {
        const auto& shallow = top.at(d);
        const auto& deep = top.at(d + 1);
        if (shallow.empty() || deep.empty())
            throw std::domain_error("nir: depth " + std::to_string(shallow.empty() ? d : d + 1) +
                                    " has no usable records");
        NirPair pair;
        pair.from_depth = d;
        pair.to_depth = d + 1;
        pair.top1 = deep.front().assignment.str();
        for (const auto& parent : shallow) {
            const auto succ = parent.assignment.successors();
            if (std::find(succ.begin(), succ.end(), deep.front().assignment) != succ.end()) {
                pair.inherited = true;
                pair.parent = parent.assignment.str();
                break;
            }
        }
        if (pair.inherited) ++inherited_count;
        report.pairs.push_back(std::move(pair));
    }
    report.fraction =
        report.pairs.empty() ? 1.0
                             : static_cast<double>(inherited_count) /
                                   static_cast<double>(report.pairs.size());
    return report;
}

std::string NirReport::to_json() const {
    nlohmann::json pairs_json = nlohmann::json::array();
    for (const auto& p : pairs) {
        nlohmann::json jp{{"from_depth", p.from_depth},
                          {"to_depth", p.to_depth},
                          {"inherited", p.inherited},
                          {"top1", p.top1}};
        if (p.inherited) jp["parent"] = p.parent;
        pairs_json.push_back(std::move(jp));
    }
    const nlohmann::json j{{"nir_version", 1},
                           {"family", family_name(family)},
                           {"topk", topk},
                           {"pairs", std::move(pairs_json)},
                           {"fraction", fraction}};
    return j.dump(2) + "\n";
}

namespace {

double quantile(const std::vector<double>& sorted, double q) {
    if (sorted.empty()) return 0.0;
    if (sorted.size() == 1) return sorted[0];
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(lo);
    if (lo + 1 >= sorted.size()) return sorted.back();
    return sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac;
}

}  // namespace

std::vector<DepthStats> distribution_stats(const ArchitectureDataset& ds, Family family) {
    const auto [lo, hi] = ds.depth_range(family);
    std::vector<DepthStats> out;
    for (int d = lo; d <= hi; ++d) {
        std::vector<double> accs;
        for (const auto* r : ds.at_depth(family, d))
            if (r->ok) accs.push_back(r->val_acc);
        if (accs.empty()) continue;
        std::sort(accs.begin(), accs.end());
        DepthStats s;
        s.depth = d;
        s.count = static_cast<int>(accs.size());
        s.min = accs.front();
        s.max = accs.back();
        s.q1 = quantile(accs, 0.25);
        s.median = quantile(accs, 0.5);
        s.q3 = quantile(accs, 0.75);
        s.best_minus_median = s.max - s.median;
        out.push_back(s);
    }
    return out;
}

std::vector<CompareRow> compare_search_to_oracle(const SearchTrace& trace,
                                                 const ArchitectureDataset& ds,
                                                 const SearchSpaceSpec& spec,
                                                 const std::optional<TrainConfig>& retrain_cfg,
                                                 const DatasetSplit* data) {
    if (trace.chain.empty()) throw std::domain_error("compare: empty trace chain");
    if (retrain_cfg && !data)
        throw std::invalid_argument("compare: retraining needs the dataset split");
    const Family family = spec.cell_kind;
    const auto [ds_lo, ds_hi] = ds.depth_range(family);
    const int chain_lo = trace.chain.front().depth();
    const int chain_hi = trace.chain.back().depth();
    const int lo = std::max(ds_lo, chain_lo), hi = std::min(ds_hi, chain_hi);
    if (lo > hi)
        throw std::domain_error("compare: the trace and the dataset cover disjoint depth ranges");

    const auto best = best_per_depth(ds, family, 1);
    std::vector<CompareRow> rows;
    for (int d = lo; d <= hi; ++d) {
        const auto it = best.find(d);
        if (it == best.end() || it->second.empty())
            throw std::domain_error("compare: missing oracle depth " + std::to_string(d));
        const LayerAssignment& searched = trace.chain[static_cast<std::size_t>(d - chain_lo)];
        if (searched.depth() != d)
            throw std::domain_error("compare: trace chain is not indexed by depth");

        double searched_acc;
        if (retrain_cfg) {
            TrainConfig cfg = *retrain_cfg;
            cfg.rng_seed = record_seed(retrain_cfg->rng_seed, family, searched);
            Network<float> net =
                build_network<float>(spec, searched, derive_seed(cfg.rng_seed, "init"));
            searched_acc = train_network(net, *data, cfg).final_val_acc;
        } else {
            const auto* rec = ds.find(family, searched);
            if (!rec || !rec->ok)
                throw std::domain_error("compare: oracle has no usable record for " +
                                        searched.str());
            searched_acc = rec->val_acc;
        }
        const auto& b = it->second.front();
        rows.push_back(CompareRow{d, searched, searched_acc, b.assignment, b.val_acc,
                                  b.val_acc - searched_acc});
    }
    return rows;
}

std::string compare_csv(const std::vector<CompareRow>& rows) {
    std::ostringstream out;
    out << "depth,searched_assignment,searched_acc,best_assignment,best_acc,gap\n";
    for (const auto& r : rows) {
        out << r.depth << ',' << r.searched.str() << ',' << acc_to_string(r.searched_acc) << ','
            << r.best.str() << ',' << acc_to_string(r.best_acc) << ','
            << acc_to_string(r.gap) << '\n';
    }
    return out.str();
}

}  // namespace las
