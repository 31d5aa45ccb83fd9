#include "las/surrogate.hpp"

#include <algorithm>
#include <stdexcept>

#include "las/digest.hpp"
#include "las/rng.hpp"

namespace las {

SurrogateLandscape::SurrogateLandscape(Kind kind, int n, int max_depth, std::uint64_t seed)
    : kind_(kind), n_(n), max_depth_(max_depth), seed_(seed) {
    if (n < 1) throw std::invalid_argument("landscape: group count must be positive");
    if (max_depth < n) throw std::invalid_argument("landscape: max depth below group count");
    if (kind_ == Kind::random) return;

    // concave increasing per-group utilities: strictly decreasing positive
    // marginal gains, accumulated into prefix sums
    const int cap = max_depth - n + 1;
    Rng rng(derive_seed(seed, "utility"));
    utility_.resize(static_cast<std::size_t>(n));
    max_total_ = 0.0;
    for (int g = 0; g < n; ++g) {
        const double weight = rng.uniform(0.5, 1.5);
        std::vector<double> gains(static_cast<std::size_t>(cap));
        for (auto& v : gains) v = weight * rng.uniform(0.1, 1.0);
        std::sort(gains.begin(), gains.end(), std::greater<>());
        for (std::size_t j = 0; j < gains.size(); ++j)
            gains[j] += static_cast<double>(gains.size() - j) * 1e-9;  // break exact ties
        auto& u = utility_[static_cast<std::size_t>(g)];
        u.resize(gains.size());
        double acc = 0.0;
        for (std::size_t j = 0; j < gains.size(); ++j) {
            acc += gains[j];
            u[j] = acc;
        }
        max_total_ += acc;
    }

    if (kind_ == Kind::adversarial && max_depth_ > n_ + 1) {
        // lift one far-off assignment to the top of a middle depth; the
        // depth's new winner is then no successor of the previous winner
        const int bump_depth = std::min(n_ + 2, max_depth_);
        const auto prev = enumerate_assignments(bump_depth - 1, n_);
        const LayerAssignment* prev_best = &prev.front();
        for (const auto& a : prev)
            if (base_score(a) > base_score(*prev_best)) prev_best = &a;
        const auto succ = prev_best->successors();
        auto pool = enumerate_assignments(bump_depth, n_);
        for (auto it = pool.rbegin(); it != pool.rend(); ++it) {
            if (std::find(succ.begin(), succ.end(), *it) == succ.end()) {
                bonus_[it->str()] = 2.0 * max_total_;
                break;
            }
        }
    }
}

double SurrogateLandscape::base_score(const LayerAssignment& a) const {
    double total = 0.0;
    for (int g = 0; g < a.size(); ++g) {
        const auto& u = utility_[static_cast<std::size_t>(g)];
        const int k = a[g];
        // beyond the planted capacity the utility stays flat
        total += u[static_cast<std::size_t>(std::min<int>(k, static_cast<int>(u.size())) - 1)];
    }
    return total;
}

double SurrogateLandscape::score(const LayerAssignment& a) const {
    if (a.size() != n_)
        throw std::invalid_argument("landscape: assignment group count mismatch");
    if (kind_ == Kind::random) {
        const std::uint64_t h = derive_seed(seed_, "random-score", fnv1a64(a.str()));
        return static_cast<double>(h >> 11) * 0x1.0p-53;
    }
    double s = base_score(a);
    if (kind_ == Kind::adversarial) {
        const auto it = bonus_.find(a.str());
        if (it != bonus_.end()) s += it->second;
    }
    // squash into a plausible pseudo-accuracy range; monotone, so argmax
    // structure is untouched
    return 0.05 + 0.9 * s / (3.0 * max_total_);
}

std::uint64_t SurrogateLandscape::digest() const {
    std::uint64_t h = fnv1a64("SurrogateLandscape");
    h = mix_u64(h, static_cast<std::uint64_t>(kind_));
    h = mix_u64(h, static_cast<std::uint64_t>(n_));
    h = mix_u64(h, static_cast<std::uint64_t>(max_depth_));
    h = mix_u64(h, seed_);
    return h;
}

SurrogateLandscape::Kind SurrogateLandscape::kind_from_name(const std::string& name) {
    if (name == "planted") return Kind::planted_monotone;
    if (name == "random") return Kind::random;
    if (name == "adversarial") return Kind::adversarial;
    throw std::invalid_argument("unknown landscape kind \"" + name +
                                "\" (expected planted, random or adversarial)");
}

std::string SurrogateLandscape::kind_name(Kind kind) {
    switch (kind) {
        case Kind::planted_monotone: return "planted";
        case Kind::random: return "random";
        case Kind::adversarial: return "adversarial";
    }
    return "?";
}

}  // namespace las
