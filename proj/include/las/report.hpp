#pragma once

#include <string>

#include "las/oracle.hpp"
#include "las/search.hpp"

namespace las {

// Plot-data emitters. Pure derivations of their inputs; no rng anywhere.

// per-depth accuracy spread: depth,count,min,q1,median,q3,max,best_minus_median
std::string report_depth_curves(const ArchitectureDataset& ds, Family family);

// per-depth top-k table: depth,rank,assignment,val_acc
std::string report_nir_chains(const ArchitectureDataset& ds, Family family, int k);

// per-step candidate accuracies: depth,assignment,val_acc,winner,diverged
std::string report_step_candidates(const SearchTrace& trace);

}  // namespace las
