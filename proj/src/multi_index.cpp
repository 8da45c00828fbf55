#include "flatlin/multi_index.hpp"

#include <algorithm>
#include <stdexcept>

namespace flatlin {

int MultiIndex::min_entry() const {
    if (entries_.empty()) throw std::logic_error("empty multi-index");
    return *std::min_element(entries_.begin(), entries_.end());
}

int MultiIndex::max_entry() const {
    if (entries_.empty()) throw std::logic_error("empty multi-index");
    return *std::max_element(entries_.begin(), entries_.end());
}

bool MultiIndex::leq(const MultiIndex& o) const {
    if (size() != o.size()) return false;
    for (int j = 0; j < size(); ++j)
        if ((*this)[j] > o[j]) return false;
    return true;
}

bool MultiIndex::nonnegative() const {
    return std::all_of(entries_.begin(), entries_.end(), [](int a) { return a >= 0; });
}

MultiIndex MultiIndex::plus(int c) const {
    std::vector<int> e = entries_;
    for (int& a : e) a += c;
    return MultiIndex(std::move(e));
}

std::string MultiIndex::str() const {
    std::string s = "(";
    for (int j = 0; j < size(); ++j) {
        if (j) s += ",";
        s += std::to_string((*this)[j]);
    }
    return s + ")";
}

std::vector<MultiIndex> MultiIndex::all_up_to(const MultiIndex& bound) {
    std::vector<MultiIndex> out;
    const int m = bound.size();
    std::vector<int> cur(static_cast<std::size_t>(m), 0);
    while (true) {
        out.emplace_back(cur);
        int j = m - 1;
        while (j >= 0 && cur[static_cast<std::size_t>(j)] == bound[j]) {
            cur[static_cast<std::size_t>(j)] = 0;
            --j;
        }
        if (j < 0) break;
        ++cur[static_cast<std::size_t>(j)];
    }
    return out;
}

}  // namespace flatlin
