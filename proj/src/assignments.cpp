#include "las/assignments.hpp"

#include <charconv>
#include <numeric>
#include <stdexcept>

namespace las {

LayerAssignment::LayerAssignment(std::vector<int> groups) : groups_(std::move(groups)) {
    if (groups_.empty())
        throw std::domain_error("layer assignment: needs at least one group");
    for (int a : groups_)
        if (a < 1)
            throw std::domain_error("layer assignment: every group needs at least one layer");
}

LayerAssignment LayerAssignment::seed(int n) {
    if (n < 1) throw std::domain_error("seed assignment: group count must be positive");
    return LayerAssignment(std::vector<int>(static_cast<std::size_t>(n), 1));
}

LayerAssignment LayerAssignment::parse(std::string_view text) {
    std::vector<int> groups;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t dash = text.find('-', pos);
        std::string_view tok = text.substr(pos, dash == std::string_view::npos ? dash : dash - pos);
        int value = 0;
        auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
        if (ec != std::errc() || ptr != tok.data() + tok.size())
            throw std::domain_error("layer assignment: cannot parse \"" + std::string(text) + "\"");
        groups.push_back(value);
        if (dash == std::string_view::npos) break;
        pos = dash + 1;
    }
    return LayerAssignment(std::move(groups));
}

int LayerAssignment::depth() const {
    return std::accumulate(groups_.begin(), groups_.end(), 0);
}

std::vector<LayerAssignment> LayerAssignment::successors() const {
    std::vector<LayerAssignment> out;
    out.reserve(groups_.size());
    for (std::size_t i = 0; i < groups_.size(); ++i) {
        std::vector<int> g = groups_;
        ++g[i];
        out.emplace_back(std::move(g));
    }
    return out;
}

std::string LayerAssignment::str() const {
    std::string s;
    for (std::size_t i = 0; i < groups_.size(); ++i) {
        if (i) s += '-';
        s += std::to_string(groups_[i]);
    }
    return s;
}

std::uint64_t count_assignments(int m, int n) {
    if (n < 1) throw std::domain_error("count_assignments: group count must be positive");
    if (m < n) throw std::domain_error("count_assignments: no valid assignment (depth below group count)");
    if (m > 64) throw std::domain_error("count_assignments: depth above 64 would overflow the 64-bit count");
    // (m-1) choose (n-1) by Pascal's rule, additions only
    const int rows = m - 1;
    const int k = n - 1;
    std::vector<std::uint64_t> row(static_cast<std::size_t>(k) + 1, 0);
    row[0] = 1;
    for (int r = 1; r <= rows; ++r)
        for (int c = std::min(r, k); c >= 1; --c)
            row[static_cast<std::size_t>(c)] += row[static_cast<std::size_t>(c) - 1];
    return row[static_cast<std::size_t>(k)];
}

std::uint64_t count_range(int n, int m_lo, int m_hi) {
    if (m_lo < n) throw std::domain_error("count_range: lower depth below group count");
    if (m_hi < m_lo) throw std::domain_error("count_range: empty depth range");
    std::uint64_t total = 0;
    for (int m = m_lo; m <= m_hi; ++m) total += count_assignments(m, n);
    return total;
}

namespace {

void enumerate_rec(int remaining, int groups_left, std::vector<int>& prefix,
                   std::vector<LayerAssignment>& out) {
    if (groups_left == 1) {
        prefix.push_back(remaining);
        out.emplace_back(prefix);
        prefix.pop_back();
        return;
    }
    // ascending first entry => ascending lexicographic output
    for (int a = 1; a <= remaining - (groups_left - 1); ++a) {
        prefix.push_back(a);
        enumerate_rec(remaining - a, groups_left - 1, prefix, out);
        prefix.pop_back();
    }
}

}  // namespace

std::vector<LayerAssignment> enumerate_assignments(int m, int n) {
    const std::uint64_t expected = count_assignments(m, n);  // also validates m, n
    std::vector<LayerAssignment> out;
    out.reserve(static_cast<std::size_t>(expected));
    std::vector<int> prefix;
    enumerate_rec(m, n, prefix, out);
    return out;
}

LayerAssignment seed_assignment(int n) { return LayerAssignment::seed(n); }

namespace {

bool is_one_hot_step(const LayerAssignment& a, const LayerAssignment& b) {
    if (a.size() != b.size()) return false;
    int bumped = 0;
    for (int i = 0; i < a.size(); ++i) {
        int d = b[i] - a[i];
        if (d == 0) continue;
        if (d != 1) return false;
        ++bumped;
    }
    return bumped == 1;
}

}  // namespace

bool is_inherited_chain(std::span<const LayerAssignment> chain) {
    for (std::size_t i = 1; i < chain.size(); ++i)
        if (!is_one_hot_step(chain[i - 1], chain[i])) return false;
    return true;
}

AssignmentChain::AssignmentChain(std::vector<LayerAssignment> entries)
    : entries_(std::move(entries)) {
    if (!is_inherited_chain(entries_))
        throw std::domain_error("assignment chain: consecutive entries must differ by one layer in one group");
}

void AssignmentChain::push(LayerAssignment next) {
    if (!entries_.empty() && !is_one_hot_step(entries_.back(), next))
        throw std::domain_error("assignment chain: not a successor of the current tail");
    entries_.push_back(std::move(next));
}

}  // namespace las
