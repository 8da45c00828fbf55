#pragma once

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

namespace flatlin {

/// Multi-index of per-component shift orders (r^1, ..., r^m).
/// Comparison A <= B is componentwise; #A is the sum over components.
class MultiIndex {
public:
    MultiIndex() = default;
    explicit MultiIndex(std::vector<int> entries) : entries_(std::move(entries)) {}
    MultiIndex(std::initializer_list<int> entries) : entries_(entries) {}

    int size() const { return static_cast<int>(entries_.size()); }
    int operator[](int j) const { return entries_[static_cast<std::size_t>(j)]; }
    int& operator[](int j) { return entries_[static_cast<std::size_t>(j)]; }
    const std::vector<int>& entries() const { return entries_; }

    /// Sum over all components, written #A.
    int total() const { return std::accumulate(entries_.begin(), entries_.end(), 0); }

    int min_entry() const;
    int max_entry() const;

    bool operator==(const MultiIndex& o) const { return entries_ == o.entries_; }
    bool operator!=(const MultiIndex& o) const { return !(*this == o); }

    /// Componentwise a^j <= b^j for all j. Not a total order.
    bool leq(const MultiIndex& o) const;
    bool nonnegative() const;

    MultiIndex plus(int c) const;

    std::string str() const;

    /// All multi-indices 0 <= A <= bound, in lexicographic order.
    static std::vector<MultiIndex> all_up_to(const MultiIndex& bound);

private:
    std::vector<int> entries_;
};

}  // namespace flatlin
