#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "las/dataset.hpp"
#include "las/search.hpp"
#include "las/spec.hpp"
#include "las/surrogate.hpp"

namespace las {

struct ArchitectureRecord {
    Family family;
    LayerAssignment assignment;
    double val_acc = 0.0;  // NaN when the training failed
    std::uint64_t seed = 0;
    std::uint64_t config_digest = 0;
    bool ok = true;

    int depth() const { return assignment.depth(); }
};

// Exhaustive (assignment -> stand-alone accuracy) table over a contiguous
// depth range, keyed by (family, assignment). Canonical order: family, depth,
// assignment; the digest and the CSV rendering both use it, so results never
// depend on worker scheduling.
class ArchitectureDataset {
public:
    void insert(ArchitectureRecord rec);
    bool contains(Family f, const LayerAssignment& a) const;
    const ArchitectureRecord* find(Family f, const LayerAssignment& a) const;
    std::vector<const ArchitectureRecord*> at_depth(Family f, int depth) const;
    // lowest and highest depths present for the family; throws when empty
    std::pair<int, int> depth_range(Family f) const;
    std::size_t size() const { return records_.size(); }
    std::vector<const ArchitectureRecord*> all() const;
    std::uint64_t digest() const;

    // "family,assignment,depth,val_acc,seed,config_digest" with one header
    // line; schema version is carried in a leading comment
    void save_csv(const std::string& path) const;
    static ArchitectureDataset load_csv(const std::string& path);

private:
    using Key = std::tuple<int, int, std::vector<int>>;  // family, depth, groups
    static Key key_of(Family f, const LayerAssignment& a);
    std::map<Key, ArchitectureRecord> records_;
};

// seed for one record's training run; shared by the oracle builder and the
// retraining path of the search comparison
std::uint64_t record_seed(std::uint64_t base_seed, Family family, const LayerAssignment& a);

// Trains every assignment with depth in [depth_lo, depth_hi] stand-alone and
// records its validation accuracy. Jobs are independent; up to `workers` run
// in parallel (0 = all cores) and the merged result is scheduling-invariant.
// Records already present in `resume` are reused, a failed training flags its
// record instead of aborting, and `on_record` (called under a lock, in
// completion order) can journal progress.
ArchitectureDataset build_architecture_dataset(
    const SearchSpaceSpec& spec, int depth_lo, int depth_hi, const TrainConfig& cfg,
    const DatasetSplit& data, int workers, const ArchitectureDataset* resume = nullptr,
    const std::function<void(const ArchitectureRecord&)>& on_record = nullptr);

// fixture path: fills a dataset from a landscape instead of training
ArchitectureDataset dataset_from_landscape(const SurrogateLandscape& landscape, Family family,
                                           int depth_lo, int depth_hi);

// per depth, the k best records by accuracy (ties lexicographic); fewer when
// a depth holds fewer records
std::map<int, std::vector<ArchitectureRecord>> best_per_depth(const ArchitectureDataset& ds,
                                                              Family family, int k);

struct NirPair {
    int from_depth = 0, to_depth = 0;
    bool inherited = false;
    std::string top1;    // the deeper depth's best assignment
    std::string parent;  // the top-k member it extends, when inherited
};

struct NirReport {
    Family family = Family::plain;
    int topk = 1;
    std::vector<NirPair> pairs;
    double fraction = 0.0;

    std::string to_json() const;  // schema "nir_version": 1
};

// For each consecutive depth pair, checks whether the deeper top-1 is a
// one-layer extension of some top-k member of the shallower depth. Requires
// contiguous depth coverage.
NirReport verify_nir(const ArchitectureDataset& ds, Family family, int k);

struct DepthStats {
    int depth = 0;
    int count = 0;
    double min = 0, q1 = 0, median = 0, q3 = 0, max = 0;
    double best_minus_median = 0;
};

std::vector<DepthStats> distribution_stats(const ArchitectureDataset& ds, Family family);

struct CompareRow {
    int depth;
    LayerAssignment searched;
    double searched_acc;
    LayerAssignment best;
    double best_acc;
    double gap;  // best_acc - searched_acc
};

// Scores the trace winners against the oracle, over the depths both cover.
// With `retrain_cfg` set the winner is retrained from scratch with the
// oracle's per-record seed rule (reproducing the oracle number bit for bit
// when the configs match); otherwise the oracle's stored accuracy is used.
std::vector<CompareRow> compare_search_to_oracle(
    const SearchTrace& trace, const ArchitectureDataset& ds, const SearchSpaceSpec& spec,
    const std::optional<TrainConfig>& retrain_cfg, const DatasetSplit* data);

std::string compare_csv(const std::vector<CompareRow>& rows);

}  // namespace las
