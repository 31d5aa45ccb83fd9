#pragma once

#include <compare>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace las {

// A layer assignment: one positive layer count per spatial-resolution group.
// Immutable value type; validity is checked at construction.
class LayerAssignment {
public:
    explicit LayerAssignment(std::vector<int> groups);

    // [1, 1, ..., 1], the unique assignment of depth n
    static LayerAssignment seed(int n);

    // parses the canonical "a1-a2-...-an" rendering
    static LayerAssignment parse(std::string_view text);

    int size() const { return static_cast<int>(groups_.size()); }
    int depth() const;
    int operator[](int i) const { return groups_[static_cast<std::size_t>(i)]; }
    const std::vector<int>& groups() const { return groups_; }

    // the n assignments obtained by incrementing one group, in group order
    std::vector<LayerAssignment> successors() const;

    // canonical rendering "a1-a2-...-an"
    std::string str() const;

    // lexicographic over the group vector
    auto operator<=>(const LayerAssignment&) const = default;

private:
    std::vector<int> groups_;
};

// Number of assignments of depth m over n groups, (m-1) choose (n-1).
// Exact integer arithmetic via the additive binomial recurrence; m must be
// <= 64 so the count fits in 64 bits.
std::uint64_t count_assignments(int m, int n);

// Sum of count_assignments(i, n) for i in [m_lo, m_hi].
std::uint64_t count_range(int n, int m_lo, int m_hi);

// All assignments of depth m over n groups in ascending lexicographic order.
std::vector<LayerAssignment> enumerate_assignments(int m, int n);

LayerAssignment seed_assignment(int n);

// True iff every consecutive pair differs by +1 in exactly one group.
// Vacuously true for lists of size <= 1.
bool is_inherited_chain(std::span<const LayerAssignment> chain);

// A validated inherited chain, one entry per depth.
class AssignmentChain {
public:
    AssignmentChain() = default;
    explicit AssignmentChain(std::vector<LayerAssignment> entries);

    const std::vector<LayerAssignment>& entries() const { return entries_; }
    bool empty() const { return entries_.empty(); }

    // append a successor of the current last entry
    void push(LayerAssignment next);

private:
    std::vector<LayerAssignment> entries_;
};

}  // namespace las
