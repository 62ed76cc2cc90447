#include "demreg/segmentation.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

#include <map>
#include <random>
#include <set>

using namespace demreg;
using namespace demreg::oracle;

namespace {

DemGrid profile_grid(const std::vector<double>& profile, int rows) {
    DemGrid g(rows, static_cast<int>(profile.size()));
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < g.ncols; ++c) g.at(r, c) = profile[c];
    return g;
}

void expect_connected_regions(const SegmentLabels& s) {
    // Every label forms exactly one 4-connected component.
    std::vector<char> seen(s.labels.size(), 0);
    std::set<std::int32_t> started;
    for (int r = 0; r < s.nrows; ++r)
        for (int c = 0; c < s.ncols; ++c) {
            const auto i = static_cast<std::size_t>(r) * s.ncols + c;
            const auto l = s.labels[i];
            if (l == kBackgroundLabel || seen[i]) continue;
            EXPECT_TRUE(started.insert(l).second) << "label " << l << " is disconnected";
            std::vector<std::size_t> stack{i};
            seen[i] = 1;
            while (!stack.empty()) {
                auto cur = stack.back();
                stack.pop_back();
                const int cr = static_cast<int>(cur / s.ncols), cc = static_cast<int>(cur % s.ncols);
                const int dr[4] = {-1, 0, 0, 1}, dc[4] = {0, -1, 1, 0};
                for (int k = 0; k < 4; ++k) {
                    const int rr = cr + dr[k], c2 = cc + dc[k];
                    if (rr < 0 || c2 < 0 || rr >= s.nrows || c2 >= s.ncols) continue;
                    const auto j = static_cast<std::size_t>(rr) * s.ncols + c2;
                    if (seen[j] || s.labels[j] != l) continue;
                    seen[j] = 1;
                    stack.push_back(j);
                }
            }
        }
    EXPECT_EQ(static_cast<std::int32_t>(started.size()), s.region_count);
    for (auto l : started) EXPECT_LT(l, s.region_count);
}

DemGrid pits_grid(const std::vector<std::pair<int, int>>& centers, int n = 64) {
    DemGrid g(n, n, 100.0);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c)
            for (auto [pr, pc] : centers)
                g.at(r, c) -= 20.0 * std::exp(-((r - pr) * (r - pr) + (c - pc) * (c - pc)) / (2.0 * 16.0));
    return g;
}

} // namespace

TEST(Watershed, ConstantGridIsOneRegion) {
    auto s = watershed(DemGrid(10, 12, 3.0));
    EXPECT_EQ(s.region_count, 1);
    for (auto l : s.labels) EXPECT_EQ(l, 0);
}

TEST(Watershed, TwoPitProfileSplitsAtRidge) {
    auto s = watershed(profile_grid({5, 1, 5, 5, 1, 5}, 4));
    ASSERT_EQ(s.region_count, 2);
    for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 3; ++c) EXPECT_EQ(s.at(r, c), s.at(0, 0));
        for (int c = 3; c < 6; ++c) EXPECT_EQ(s.at(r, c), s.at(0, 5));
    }
    EXPECT_NE(s.at(0, 0), s.at(0, 5));
}

TEST(Watershed, TwoPitsBoundaryIsEquidistant) {
    auto g = pits_grid({{32, 20}, {32, 44}});
    auto s = watershed(g);
    ASSERT_EQ(s.region_count, 2);
    const auto left = s.at(32, 20), right = s.at(32, 44);
    ASSERT_NE(left, right);
    for (int r = 0; r < 64; ++r)
        for (int c = 0; c < 64; ++c) {
            const double dl = std::hypot(r - 32.0, c - 20.0), dr = std::hypot(r - 32.0, c - 44.0);
            if (dl + 1.0 < dr) {
                EXPECT_EQ(s.at(r, c), left) << r << "," << c;
            }
            if (dr + 1.0 < dl) {
                EXPECT_EQ(s.at(r, c), right) << r << "," << c;
            }
        }
}

TEST(Watershed, GradientSurfaceOptionRuns) {
    auto g = pits_grid({{32, 20}, {32, 44}});
    auto s = watershed(g, FloodSurface::GradientMagnitude);
    EXPECT_GE(s.region_count, 1);
    expect_connected_regions(s);
}

TEST(Watershed, AllNoData) {
    DemGrid g(3, 3);
    for (auto& v : g.cells) v = g.nodata;
    EXPECT_DEMREG_ERROR(watershed(g), "AllNoData");
    EXPECT_DEMREG_ERROR(p_model_segment(g, 2), "AllNoData");
}

TEST(Watershed, NodataGetsBackgroundLabel) {
    auto g = pits_grid({{8, 8}}, 16);
    g.at(0, 0) = g.nodata;
    g.at(15, 3) = g.nodata;
    auto s = watershed(g);
    EXPECT_EQ(s.at(0, 0), kBackgroundLabel);
    EXPECT_EQ(s.at(15, 3), kBackgroundLabel);
    for (int r = 0; r < 16; ++r)
        for (int c = 0; c < 16; ++c)
            if (g.valid(r, c)) {
                EXPECT_NE(s.at(r, c), kBackgroundLabel);
            }
}

TEST(Watershed, MatchesSteepestDescentOracle) {
    std::mt19937_64 rng(12345);
    for (int trial = 0; trial < 50; ++trial) {
        std::uniform_int_distribution<int> dim(2, 16);
        DemGrid g(dim(rng), dim(rng));
        std::vector<double> values(g.size());
        for (std::size_t i = 0; i < values.size(); ++i) values[i] = static_cast<double>(i);
        std::shuffle(values.begin(), values.end(), rng);
        g.cells = values;
        auto s = watershed(g);
        EXPECT_TRUE(same_partition(s.labels, steepest_descent_oracle(g))) << "trial " << trial;
        expect_connected_regions(s);
    }
}

TEST(Hierarchy, ConstantGridSingleLevel) {
    auto h = p_model_segment(DemGrid(8, 8, 1.0), 3);
    ASSERT_EQ(h.levels.size(), 1u);
    EXPECT_EQ(h.levels[0].region_count, 1);
    EXPECT_TRUE(h.merge_tree.empty());
}

TEST(Hierarchy, RidgeSaliencyThenMerge) {
    // Two pits at depth 0 in a base of 0 with ridge height 1 at the center column.
    auto g = profile_grid({0.5, 0, 0.5, 1, 0.5, 0, 0.5}, 5);
    auto s0 = watershed(g);
    ASSERT_EQ(s0.region_count, 2);
    auto sal = boundary_saliency(g, s0);
    ASSERT_EQ(sal.size(), 1u);
    EXPECT_DOUBLE_EQ(sal.begin()->second, 1.0);

    auto h = p_model_segment(g, 10);
    EXPECT_EQ(h.levels.front().region_count, 2);
    EXPECT_EQ(h.levels.back().region_count, 1);
}

TEST(Hierarchy, FourPitsGroupAcrossLowRidges) {
    // Pits A,B | C,D: A-B and C-D separated by low ridges, B-C by a high ridge.
    const std::vector<double> profile = {3, 0, 1, 0, 3, 3, 30, 3, 3, 0, 1, 0, 3};
    auto g = profile_grid(profile, 3);
    auto h = p_model_segment(g, 10);
    EXPECT_EQ(h.levels.front().region_count, 4);
    bool found_two = false;
    for (const auto& lvl : h.levels) {
        if (lvl.region_count != 2) continue;
        found_two = true;
        EXPECT_EQ(lvl.at(0, 1), lvl.at(0, 3));
        EXPECT_EQ(lvl.at(0, 9), lvl.at(0, 11));
        EXPECT_NE(lvl.at(0, 1), lvl.at(0, 9));
    }
    EXPECT_TRUE(found_two);
}

TEST(Hierarchy, NestingMonotoneAndPartition) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0, 100);
    DemGrid g(24, 24);
    for (auto& v : g.cells) v = u(rng);
    g.at(3, 3) = g.nodata;
    // Mild smoothing keeps the region count moderate.
    g = smooth_gaussian(g, 1.0);
    auto h = p_model_segment(g, 6);
    ASSERT_EQ(h.merge_tree.size() + 1, h.levels.size());
    for (std::size_t k = 0; k + 1 < h.levels.size(); ++k) {
        const auto& lo = h.levels[k];
        const auto& hi = h.levels[k + 1];
        EXPECT_LE(hi.region_count, lo.region_count);
        ASSERT_EQ(h.merge_tree[k].size(), static_cast<std::size_t>(lo.region_count));
        for (std::size_t i = 0; i < lo.labels.size(); ++i) {
            if (lo.labels[i] == kBackgroundLabel) {
                EXPECT_EQ(hi.labels[i], kBackgroundLabel);
                continue;
            }
            EXPECT_EQ(hi.labels[i], h.merge_tree[k][lo.labels[i]]);
        }
        expect_connected_regions(hi);
    }
    for (const auto& lvl : h.levels)
        for (int r = 0; r < g.nrows; ++r)
            for (int c = 0; c < g.ncols; ++c)
                EXPECT_EQ(lvl.at(r, c) == kBackgroundLabel, !g.valid(r, c));
}

TEST(Hierarchy, InvalidMaxLevels) {
    EXPECT_DEMREG_ERROR(p_model_segment(DemGrid(3, 3, 1.0), 0), "InvalidArgument");
}
