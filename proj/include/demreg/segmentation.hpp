#pragma once

/**
 * @file segmentation.hpp
 * @brief Watershed by immersion and waterfall-style hierarchical merging.
 *
 * Regions are 4-connected. Level 0 holds one region per regional minimum of
 * the flooding surface; each coarser level merges adjacent regions whose
 * boundary saliency falls below the level threshold.
 */

#include "demreg/dem_io.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <map>
#include <numeric>
#include <queue>
#include <tuple>
#include <vector>

namespace demreg {

inline constexpr std::int32_t kBackgroundLabel = -1;

struct SegmentLabels {
    int nrows = 0;
    int ncols = 0;
    std::vector<std::int32_t> labels; ///< kBackgroundLabel on nodata cells
    std::int32_t region_count = 0;

    std::int32_t at(int r, int c) const {
        return labels[static_cast<std::size_t>(r) * static_cast<std::size_t>(ncols) + static_cast<std::size_t>(c)];
    }
};

struct SegmentHierarchy {
    std::vector<SegmentLabels> levels;
    /// merge_tree[k][id] = parent id at level k+1.
    std::vector<std::vector<std::int32_t>> merge_tree;
    /// Saliency threshold that produced level k+1 from level k.
    std::vector<double> thresholds;
};

enum class FloodSurface { Elevation, GradientMagnitude };

namespace detail {
inline constexpr std::array<std::pair<int, int>, 4> kNeighbors4{{{-1, 0}, {0, -1}, {0, 1}, {1, 0}}};
}

/// Central-difference gradient magnitude (m/cell); one-sided next to edges or nodata.
inline double gradient_magnitude_at(const DemGrid& g, int r, int c) {
    auto deriv = [&](int r0, int c0, int r1, int c1) {
        const bool lo = g.in_bounds(r0, c0) && g.valid(r0, c0);
        const bool hi = g.in_bounds(r1, c1) && g.valid(r1, c1);
        const double z = g.at(r, c);
        if (lo && hi) return (g.at(r1, c1) - g.at(r0, c0)) / 2.0;
        if (hi) return g.at(r1, c1) - z;
        if (lo) return z - g.at(r0, c0);
        return 0.0;
    };
    const double dr = deriv(r - 1, c, r + 1, c);
    const double dc = deriv(r, c - 1, r, c + 1);
    return std::hypot(dr, dc);
}

inline DemGrid gradient_magnitude(const DemGrid& g) {
    DemGrid out = g;
    for (int r = 0; r < g.nrows; ++r)
        for (int c = 0; c < g.ncols; ++c)
            if (g.valid(r, c)) out.at(r, c) = gradient_magnitude_at(g, r, c);
    return out;
}

/// Watershed by simulated immersion (priority flood from regional minima).
///
/// Plateau ties resolve by flooding distance, then by lower region id; region
/// ids follow the row-major position of each minimum.
inline SegmentLabels watershed(const DemGrid& grid, FloodSurface surface = FloodSurface::Elevation) {
    if (count_valid(grid) == 0) fail("AllNoData", "grid has no valid cells");
    const DemGrid field = surface == FloodSurface::Elevation ? grid : gradient_magnitude(grid);
    const int nr = grid.nrows, nc = grid.ncols;
    const std::size_t n = grid.size();

    SegmentLabels out;
    out.nrows = nr;
    out.ncols = nc;
    out.labels.assign(n, kBackgroundLabel);

    // Regional minima: equal-valued plateaus with no strictly lower neighbour.
    std::vector<char> seen(n, 0);
    std::vector<std::size_t> component;
    std::int32_t next_label = 0;
    for (int r = 0; r < nr; ++r)
        for (int c = 0; c < nc; ++c) {
            const auto start = grid.index(r, c);
            if (seen[start] || !grid.valid(r, c)) continue;
            const double v = field.cells[start];
            component.clear();
            std::deque<std::size_t> q{start};
            seen[start] = 1;
            bool minimum = true;
            while (!q.empty()) {
                const auto cur = q.front();
                q.pop_front();
                component.push_back(cur);
                const int cr = static_cast<int>(cur / nc), cc = static_cast<int>(cur % nc);
                for (auto [dr, dc] : detail::kNeighbors4) {
                    const int rr = cr + dr, c2 = cc + dc;
                    if (!grid.in_bounds(rr, c2) || !grid.valid(rr, c2)) continue;
                    const auto ni = grid.index(rr, c2);
                    const double nv = field.cells[ni];
                    if (nv < v) minimum = false;
                    if (nv == v && !seen[ni]) {
                        seen[ni] = 1;
                        q.push_back(ni);
                    }
                }
            }
            // Plateaus that are not minima are labelled later by the flood.
            if (minimum) {
                for (auto idx : component) out.labels[idx] = next_label;
                ++next_label;
            }
        }
    out.region_count = next_label;

    // (value, plateau generation, label, index) -- min-heap.
    using Entry = std::tuple<double, std::uint32_t, std::int32_t, std::size_t>;
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> pq;
    std::vector<std::uint32_t> gen(n, 0);
    for (std::size_t i = 0; i < n; ++i)
        if (out.labels[i] != kBackgroundLabel) pq.emplace(field.cells[i], 0u, out.labels[i], i);

    while (!pq.empty()) {
        const auto [v, g, label, idx] = pq.top();
        pq.pop();
        const int cr = static_cast<int>(idx / nc), cc = static_cast<int>(idx % nc);
        for (auto [dr, dc] : detail::kNeighbors4) {
            const int rr = cr + dr, c2 = cc + dc;
            if (!grid.in_bounds(rr, c2) || !grid.valid(rr, c2)) continue;
            const auto ni = grid.index(rr, c2);
            if (out.labels[ni] != kBackgroundLabel) continue;
            out.labels[ni] = label;
            gen[ni] = field.cells[ni] == v ? g + 1 : 0;
            pq.emplace(field.cells[ni], gen[ni], label, ni);
        }
    }
    return out;
}

namespace detail {

struct UnionFind {
    std::vector<std::int32_t> parent;
    explicit UnionFind(std::int32_t n) : parent(static_cast<std::size_t>(n)) {
        std::iota(parent.begin(), parent.end(), 0);
    }
    std::int32_t find(std::int32_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    }
    void unite(std::int32_t a, std::int32_t b) {
        a = find(a);
        b = find(b);
        if (a == b) return;
        if (b < a) std::swap(a, b);
        parent[b] = a;
    }
};

} // namespace detail

/// Boundary saliency between every pair of adjacent regions: the lowest pass
/// elevation on the shared boundary minus the higher of the two region minima.
inline std::map<std::pair<std::int32_t, std::int32_t>, double>
boundary_saliency(const DemGrid& grid, const SegmentLabels& seg) {
    std::vector<double> minima(static_cast<std::size_t>(seg.region_count), std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < grid.size(); ++i)
        if (seg.labels[i] != kBackgroundLabel) minima[seg.labels[i]] = std::min(minima[seg.labels[i]], grid.cells[i]);

    std::map<std::pair<std::int32_t, std::int32_t>, double> pass;
    for (int r = 0; r < grid.nrows; ++r)
        for (int c = 0; c < grid.ncols; ++c) {
            const auto a = seg.at(r, c);
            if (a == kBackgroundLabel) continue;
            for (auto [dr, dc] : {std::pair{0, 1}, std::pair{1, 0}}) {
                const int rr = r + dr, cc = c + dc;
                if (!grid.in_bounds(rr, cc)) continue;
                const auto b = seg.at(rr, cc);
                if (b == kBackgroundLabel || b == a) continue;
                const auto key = std::minmax(a, b);
                const double h = std::max(grid.at(r, c), grid.at(rr, cc));
                auto [it, inserted] = pass.try_emplace({key.first, key.second}, h);
                if (!inserted) it->second = std::min(it->second, h);
            }
        }
    for (auto& [key, h] : pass) h -= std::max(minima[key.first], minima[key.second]);
    return pass;
}

/// Hierarchical watershed/waterfall segmentation. Threshold schedule is
/// t_k = t_0 * 2^k with t_0 = 2% of the grid's elevation range.
inline SegmentHierarchy p_model_segment(const DemGrid& grid, int max_levels,
                                        FloodSurface surface = FloodSurface::Elevation) {
    if (max_levels < 1) fail("InvalidArgument", "max_levels must be >= 1");
    SegmentHierarchy h;
    h.levels.push_back(watershed(grid, surface));
    const auto range = valid_range(grid);
    const double t0 = 0.02 * (range->second - range->first);

    for (int k = 0; static_cast<int>(h.levels.size()) < max_levels && h.levels.back().region_count > 1; ++k) {
        const auto& cur = h.levels.back();
        const auto sal = boundary_saliency(grid, cur);
        if (sal.empty()) break; // disjoint valid components never merge
        const double t = t0 * std::ldexp(1.0, k);
        detail::UnionFind uf(cur.region_count);
        for (const auto& [key, s] : sal)
            if (s < t) uf.unite(key.first, key.second);

        std::vector<std::int32_t> parent(static_cast<std::size_t>(cur.region_count));
        std::vector<std::int32_t> remap(static_cast<std::size_t>(cur.region_count), -1);
        std::int32_t next = 0;
        for (std::int32_t id = 0; id < cur.region_count; ++id) {
            const auto root = uf.find(id);
            if (remap[root] < 0) remap[root] = next++;
            parent[id] = remap[root];
        }
        if (next == cur.region_count) {
            // Nothing merged; escalate the threshold without emitting a level.
            if (!(t <= 4.0 * (range->second - range->first))) break;
            continue;
        }
        SegmentLabels nxt = cur;
        for (auto& l : nxt.labels)
            if (l != kBackgroundLabel) l = parent[l];
        nxt.region_count = next;
        h.merge_tree.push_back(std::move(parent));
        h.thresholds.push_back(t);
        h.levels.push_back(std::move(nxt));
    }
    return h;
}

} // namespace demreg
