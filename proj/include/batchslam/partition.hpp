#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "batchslam/types.hpp"

namespace batchslam {

/// A cell: the measurement indices attributed to one source. Non-empty,
/// at most one index per time step, kept sorted.
struct Cell {
    std::vector<MeasurementIndex> indices;

    [[nodiscard]] std::size_t size() const { return indices.size(); }
    [[nodiscard]] const MeasurementIndex& earliest() const { return indices.front(); }

    [[nodiscard]] bool has_step(int k) const {
        return std::any_of(indices.begin(), indices.end(),
                           [k](const MeasurementIndex& m) { return m.k == k; });
    }
    /// Position of the index at step k, or -1.
    [[nodiscard]] int find_step(int k) const {
        for (std::size_t i = 0; i < indices.size(); ++i)
            if (indices[i].k == k) return static_cast<int>(i);
        return -1;
    }

    void insert(const MeasurementIndex& m) {
        indices.insert(std::upper_bound(indices.begin(), indices.end(), m), m);
    }
    void erase(const MeasurementIndex& m) {
        auto it = std::lower_bound(indices.begin(), indices.end(), m);
        if (it != indices.end() && *it == m) indices.erase(it);
    }

    friend bool operator==(const Cell&, const Cell&) = default;
};

inline bool cell_valid(const Cell& c) {
    if (c.indices.empty()) return false;
    for (std::size_t i = 1; i < c.indices.size(); ++i) {
        if (!(c.indices[i - 1] < c.indices[i])) return false;
        if (c.indices[i - 1].k == c.indices[i].k) return false;
    }
    return true;
}

/// A data association: disjoint cells covering the full index set.
/// Cells are kept in canonical order (sorted by their smallest index).
struct Partition {
    std::vector<Cell> cells;

    [[nodiscard]] std::size_t size() const { return cells.size(); }

    void canonicalize() {
        for (auto& c : cells) std::sort(c.indices.begin(), c.indices.end());
        std::sort(cells.begin(), cells.end(), [](const Cell& a, const Cell& b) {
            return a.indices.front() < b.indices.front();
        });
    }

    /// Stable content key (assumes canonical form).
    [[nodiscard]] std::vector<std::uint64_t> key() const {
        std::vector<std::uint64_t> k;
        for (const auto& c : cells) {
            for (const auto& m : c.indices) k.push_back(pack(m));
            k.push_back(~std::uint64_t{0}); // cell separator
        }
        return k;
    }

    friend bool operator==(const Partition&, const Partition&) = default;
};

/// Validity per the point-object model: cells valid, pairwise disjoint,
/// union equal to the given index set.
inline bool partition_valid(const Partition& p, const std::vector<MeasurementIndex>& index_set) {
    std::vector<MeasurementIndex> all;
    for (const auto& c : p.cells) {
        if (!cell_valid(c)) return false;
        all.insert(all.end(), c.indices.begin(), c.indices.end());
    }
    std::sort(all.begin(), all.end());
    if (std::adjacent_find(all.begin(), all.end()) != all.end()) return false;
    std::vector<MeasurementIndex> want = index_set;
    std::sort(want.begin(), want.end());
    return all == want;
}

inline Partition all_singletons(const std::vector<MeasurementIndex>& index_set) {
    Partition p;
    for (const auto& m : index_set) p.cells.push_back(Cell{{m}});
    p.canonicalize();
    return p;
}

/// All valid partitions of the index set, each exactly once. Guarded to
/// |index_set| <= 10; throws std::invalid_argument beyond that.
inline std::vector<Partition> enumerate_partitions(std::vector<MeasurementIndex> index_set) {
    if (index_set.size() > 10)
        throw std::invalid_argument("enumerate_partitions: index set larger than 10");
    std::sort(index_set.begin(), index_set.end());
    std::vector<Partition> out;
    Partition work;
    // Restricted-growth enumeration: each index joins an existing cell
    // without a same-step conflict, or opens a new cell. Yields each
    // partition once (cell order by first element).
    auto rec = [&](auto&& self, std::size_t i) -> void {
        if (i == index_set.size()) {
            Partition p = work;
            p.canonicalize();
            out.push_back(std::move(p));
            return;
        }
        const MeasurementIndex m = index_set[i];
        const std::size_t n_cells = work.cells.size();
        for (std::size_t ci = 0; ci < n_cells; ++ci) {
            if (work.cells[ci].has_step(m.k)) continue;
            work.cells[ci].indices.push_back(m);
            self(self, i + 1);
            work.cells[ci].indices.pop_back();
        }
        work.cells.push_back(Cell{{m}});
        self(self, i + 1);
        work.cells.pop_back();
    };
    rec(rec, 0);
    return out;
}

} // namespace batchslam
