#include "las/report.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace las {

namespace {

std::string num(double v) {
    if (std::isnan(v)) return "nan";
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

std::string report_depth_curves(const ArchitectureDataset& ds, Family family) {
    std::ostringstream out;
    out << "depth,count,min,q1,median,q3,max,best_minus_median\n";
    for (const auto& s : distribution_stats(ds, family)) {
        out << s.depth << ',' << s.count << ',' << num(s.min) << ',' << num(s.q1) << ','
            << num(s.median) << ',' << num(s.q3) << ',' << num(s.max) << ','
            << num(s.best_minus_median) << '\n';
    }
    return out.str();
}

std::string report_nir_chains(const ArchitectureDataset& ds, Family family, int k) {
    std::ostringstream out;
    out << "depth,rank,assignment,val_acc\n";
    for (const auto& [depth, recs] : best_per_depth(ds, family, k)) {
        for (std::size_t r = 0; r < recs.size(); ++r)
            out << depth << ',' << (r + 1) << ',' << recs[r].assignment.str() << ','
                << num(recs[r].val_acc) << '\n';
    }
    return out.str();
}

std::string report_step_candidates(const SearchTrace& trace) {
    std::ostringstream out;
    out << "depth,assignment,val_acc,winner,diverged\n";
    for (const auto& step : trace.steps) {
        for (std::size_t i = 0; i < step.candidates.size(); ++i) {
            const auto& [a, acc] = step.candidates[i];
            out << step.depth << ',' << a.str() << ',' << num(acc) << ','
                << (a == step.winner ? 1 : 0) << ',' << (step.diverged[i] ? 1 : 0) << '\n';
        }
    }
    return out.str();
}

}  // namespace las
