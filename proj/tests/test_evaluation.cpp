#include "demreg/evaluation.hpp"
#include "test_support.hpp"

#include <algorithm>
#include <numbers>

using namespace demreg;

namespace {

SyntheticPair rotated_pair(std::uint64_t seed, double deg) {
    const auto world = random_scene(seed, {.rows = 192, .cols = 192});
    const auto truth = rotation_about({63.5, 63.5}, deg * std::numbers::pi / 180, 6, -4);
    return make_pair(world, 128, 128, {32, 32}, truth, 128, cols_for_overlap(truth, 128, 128, 128, 128, 0.8));
}

} // namespace

TEST(Scene, RespectsSeparationMarginAndSeed) {
    const auto s = random_scene(3);
    std::vector<Point> centres;
    for (const auto& f : s.features) {
        if (const auto* p = std::get_if<GaussianPeak>(&f)) centres.push_back({p->row, p->col});
        if (const auto* p = std::get_if<GaussianPit>(&f)) centres.push_back({p->row, p->col});
    }
    EXPECT_GE(centres.size(), 9u);
    for (std::size_t i = 0; i < centres.size(); ++i) {
        EXPECT_GE(centres[i].row, 8);
        EXPECT_LE(centres[i].row, 127 - 8);
        for (std::size_t j = i + 1; j < centres.size(); ++j) EXPECT_GE(distance(centres[i], centres[j]), 14);
    }
    EXPECT_EQ(generate_synthetic(random_scene(3)).cells, generate_synthetic(s).cells);
    EXPECT_NE(generate_synthetic(random_scene(4)).cells, generate_synthetic(s).cells);
}

TEST(Scene, PairSamplesThroughTruth) {
    const auto world = random_scene(8, {.rows = 160, .cols = 160});
    const auto t = rotation_about({40, 40}, 0.3, 5, 2);
    const auto p = make_pair(world, 100, 100, {20, 30}, t, 80, 80);
    EXPECT_EQ(p.cand.nrows, 80);
    const Point q = t.apply({10, 20});
    EXPECT_DOUBLE_EQ(p.cand.at(10, 20), synth_elevation(world, q.row + 20, q.col + 30));
    EXPECT_DOUBLE_EQ(p.ref.at(7, 9), synth_elevation(world, 27, 39));
}

TEST(Overlap, AnalyticFractionForShifts) {
    EXPECT_DOUBLE_EQ(analytic_overlap(SimilarityTransform::identity(), 50, 50, 50, 50), 1.0);
    EXPECT_DOUBLE_EQ(analytic_overlap(SimilarityTransform::translation(0, 10), 50, 50, 50, 50), 40.0 / 50);
    const auto t = rotation_about({63.5, 63.5}, 0.4, 3, 3);
    const int w = cols_for_overlap(t, 128, 128, 128, 128, 0.8);
    EXPECT_NEAR(analytic_overlap(t, 128, 128, 128, w), 0.8, 0.01);
}

TEST(Robustness, ZeroNoiseReproducesClean) {
    const auto p = rotated_pair(61, 15);
    const auto r = robustness_eval(p.ref, p.cand, 0, 1);
    EXPECT_EQ(r.mi_noisy, r.mi_clean);
    EXPECT_EQ(r.cc_noisy, r.cc_clean);
    EXPECT_EQ(r.noisy_transform.theta, r.clean_transform.theta);
    EXPECT_EQ(r.noisy_transform.t_row, r.clean_transform.t_row);
    EXPECT_EQ(r.noisy_transform.t_col, r.clean_transform.t_col);
}

TEST(Robustness, TenMetreNoiseStaysWithinDoubledTolerance) {
    const auto p = rotated_pair(62, 15);
    const auto r = robustness_eval(p.ref, p.cand, 10, 7);
    EXPECT_GT(r.mi_noisy, 0);
    EXPECT_LT(r.mi_noisy, r.mi_clean);
    const auto e = transform_error(r.noisy_transform, p.truth, {63.5, 63.5});
    EXPECT_LE(std::abs(e.theta_deg), 2.0);
    EXPECT_LE(e.translation, 2.0);
}

TEST(Robustness, HeavyNoiseDegradesInformation) {
    const auto p = rotated_pair(63, 5);
    const auto clean = robustness_eval(p.ref, p.cand, 0, 1);
    try {
        const auto r = robustness_eval(p.ref, p.cand, 2000, 9);
        EXPECT_LT(r.mi_noisy, r.mi_clean);
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), "RegistrationFailed"); // noise may leave no usable landmarks
    }
    EXPECT_GT(clean.mi_clean, 0);
}

TEST(Sweep, RowsAndCsv) {
    const auto world = random_scene(1000, {.rows = 128, .cols = 256});
    const auto rows = overlap_sweep(world, 128, {50, 90}, "set1");
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_TRUE(rows[0].failed || rows[0].low_confidence);
    EXPECT_FALSE(rows[1].failed);
    EXPECT_NEAR(rows[1].overlap_fraction, 0.9, 0.03);
    EXPECT_EQ(sweep_csv_header(), "set_id,overlap_pct,cc,mi,kld");
    const auto line = to_csv(rows[1]);
    EXPECT_EQ(line.rfind("set1,90,", 0), 0u);
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 4);
}
