#include "demreg/landmarks.hpp"
#include "test_support.hpp"

#include <cmath>
#include <numbers>
#include <random>

using namespace demreg;

namespace {

DemGrid gaussian_peak_grid(int n, double row, double col, double amplitude, double sigma, double base = 0) {
    SynthSpec s;
    s.nrows = s.ncols = n;
    s.base = base;
    s.features.push_back(GaussianPeak{row, col, amplitude, sigma});
    return generate_synthetic(s);
}

// Center minus mean of Chebyshev ring k of an isotropic Gaussian, evaluated cell by cell.
double gaussian_cmr(double amplitude, double sigma, int k) {
    double sum = 0;
    int n = 0;
    for (int dr = -k; dr <= k; ++dr)
        for (int dc = -k; dc <= k; ++dc) {
            if (std::max(std::abs(dr), std::abs(dc)) != k) continue;
            sum += amplitude * std::exp(-(dr * dr + dc * dc) / (2 * sigma * sigma));
            ++n;
        }
    return amplitude - sum / n;
}

Landmark make_lm(LandmarkClass k, double row, double col, double prom) {
    Landmark lm;
    lm.cls = k;
    lm.row = row;
    lm.col = col;
    lm.prominence = prom;
    lm.support_radius = 4;
    return lm;
}

Thresholds permissive() {
    Thresholds th;
    th.t_peak = th.t_valley = 5;
    th.t_flat = 0.01;
    th.t_ripple_relief = 0.02;
    return th;
}

} // namespace

TEST(Signature, ConstantGridIsZero) {
    DemGrid g(11, 11, 42.0);
    auto sig = pyramid_signature(g, 5, 5);
    for (std::size_t k = 0; k < 4; ++k) {
        EXPECT_EQ(sig.levels[k].size, PyramidSignature::kWindowSizes[k]);
        EXPECT_EQ(sig.levels[k].relief, 0);
        EXPECT_EQ(sig.levels[k].center_minus_ring, 0);
        EXPECT_EQ(sig.levels[k].mean, 42.0);
        EXPECT_EQ(sig.levels[k].mean_gradient, 0);
    }
    EXPECT_EQ(sig.alternations, 0);
}

TEST(Signature, GaussianPeakRingMeansIncrease) {
    auto g = gaussian_peak_grid(21, 10, 10, 50, 2);
    auto sig = pyramid_signature(g, 10, 10);
    for (int k = 1; k <= 4; ++k)
        EXPECT_NEAR(sig.levels[k - 1].center_minus_ring, gaussian_cmr(50, 2, k), 1e-9);
    for (std::size_t k = 1; k < 4; ++k)
        EXPECT_GT(sig.levels[k].center_minus_ring, sig.levels[k - 1].center_minus_ring);
    for (const auto& lv : sig.levels) EXPECT_GE(lv.relief, 0);
}

TEST(Signature, WindowOutOfBounds) {
    DemGrid g(20, 20, 1.0);
    EXPECT_DEMREG_ERROR(pyramid_signature(g, 1, 10), "WindowOutOfBounds");
    EXPECT_DEMREG_ERROR(pyramid_signature(g, 10, 16), "WindowOutOfBounds");
}

TEST(Signature, NoDataInWindow) {
    DemGrid g(20, 20, 1.0);
    g.at(12, 13) = g.nodata;
    EXPECT_DEMREG_ERROR(pyramid_signature(g, 10, 10), "NoDataInWindow");
}

TEST(Classify, ZeroSignatureIsFlat) {
    PyramidSignature sig;
    Thresholds th;
    th.t_flat = 1;
    EXPECT_EQ(classify_cell(sig, th), LandmarkClass::Flat);
}

TEST(Classify, GaussianPeakIsPeakAndPitIsValley) {
    auto g = gaussian_peak_grid(21, 10, 10, 50, 2);
    Thresholds th;
    th.t_peak = th.t_valley = gaussian_cmr(50, 2, 4) - 1;
    EXPECT_EQ(classify_cell(pyramid_signature(g, 10, 10), th), LandmarkClass::Peak);
    for (auto& v : g.cells) v = -v;
    EXPECT_EQ(classify_cell(pyramid_signature(g, 10, 10), th), LandmarkClass::Valley);
    th.t_peak = th.t_valley = gaussian_cmr(50, 2, 4) + 1;
    th.t_flat = th.t_ripple_relief = 0.1;
    EXPECT_EQ(classify_cell(pyramid_signature(g, 10, 10), th), std::nullopt);
}

TEST(Classify, SinusoidalRippleIsRipple) {
    SynthSpec s;
    s.nrows = s.ncols = 21;
    s.base = 10;
    s.features.push_back(Ripple{0, std::numbers::pi / 2, 0.5, 0});
    auto g = generate_synthetic(s);
    auto sig = pyramid_signature(g, 10, 10);
    EXPECT_GE(sig.alternations, 3);
    Thresholds th;
    th.t_peak = th.t_valley = 10;
    th.t_flat = 0.5;
    th.t_ripple_relief = 2;
    EXPECT_EQ(classify_cell(sig, th), LandmarkClass::Ripple);
    th.min_alternations = 5;
    EXPECT_EQ(classify_cell(sig, th), std::nullopt);
}

TEST(Classify, AtMostOneClassEvenWhenRulesOverlap) {
    // A signature satisfying Flat and Ripple at once resolves to the higher-priority Flat.
    PyramidSignature sig;
    sig.alternations = 6;
    Thresholds th;
    th.t_flat = th.t_ripple_relief = 1;
    EXPECT_EQ(classify_cell(sig, th), LandmarkClass::Flat);
}

TEST(Detect, ThreePlantedPeaks) {
    SynthSpec s;
    s.nrows = s.ncols = 64;
    s.base = 100;
    const std::vector<std::pair<double, double>> centers{{15, 15}, {20, 45}, {48, 30}};
    for (auto [r, c] : centers) s.features.push_back(GaussianPeak{r, c, 50, 3});
    auto g = generate_synthetic(s);
    auto res = detect_landmarks(g, permissive());
    int peaks = 0;
    for (const auto& lm : res.landmarks) peaks += lm.cls == LandmarkClass::Peak;
    EXPECT_GE(peaks, 3);
    for (auto [r, c] : centers) {
        double best = 1e9;
        for (const auto& lm : res.landmarks)
            if (lm.cls == LandmarkClass::Peak) best = std::min(best, std::hypot(lm.row - r, lm.col - c));
        EXPECT_LE(best, 1.0);
    }
    for (const auto& lm : res.landmarks) {
        EXPECT_GE(lm.prominence, 0);
        EXPECT_TRUE(lm.row >= 0 && lm.row <= 63 && lm.col >= 0 && lm.col <= 63);
    }
    EXPECT_EQ(res.relaxation_rounds, 0);
    EXPECT_EQ(res.thresholds, permissive());
}

TEST(Detect, SubCellPeakPosition) {
    auto g = gaussian_peak_grid(40, 19.3, 20.6, 60, 3);
    auto c = detect_candidates(g, permissive());
    ASSERT_FALSE(c.empty());
    const Landmark* peak = nullptr;
    for (const auto& lm : c)
        if (lm.cls == LandmarkClass::Peak) peak = &lm;
    ASSERT_NE(peak, nullptr);
    EXPECT_NEAR(peak->row, 19.3, 0.25);
    EXPECT_NEAR(peak->col, 20.6, 0.25);
}

TEST(Detect, ConstantGridYieldsFlatsOnly) {
    DemGrid g(32, 32, 100.0);
    try {
        detect_landmarks(g);
        FAIL() << "a single flat area cannot provide three majors";
    } catch (const InsufficientLandmarks& e) {
        const auto& lms = e.partial().landmarks;
        ASSERT_FALSE(lms.empty());
        for (const auto& lm : lms) EXPECT_EQ(lm.cls, LandmarkClass::Flat);
        EXPECT_EQ(e.code(), "InsufficientLandmarks");
        EXPECT_EQ(e.partial().relaxation_rounds, kMaxRelaxationRounds);
    }
}

TEST(Detect, WhiteNoiseStrictThresholdsIsInsufficient) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0, 1);
    DemGrid g(12, 12);
    for (auto& v : g.cells) v = u(rng);
    Thresholds th;
    th.t_peak = th.t_valley = 1e6;
    th.t_flat = th.t_ripple_relief = 1e-9;
    EXPECT_DEMREG_ERROR(detect_landmarks(g, th), "InsufficientLandmarks");
}

TEST(Detect, GridTooSmallAndInvalidThresholds) {
    EXPECT_DEMREG_ERROR(detect_landmarks(DemGrid(10, 30, 1.0)), "GridTooSmall");
    Thresholds th;
    th.t_peak = 0;
    EXPECT_DEMREG_ERROR(detect_candidates(DemGrid(20, 20, 1.0), th), "InvalidThresholds");
}

TEST(Detect, RelaxationLoosensUntilMajorsAppear) {
    SynthSpec s;
    s.nrows = s.ncols = 64;
    for (auto [r, c] : std::vector<std::pair<double, double>>{{12, 12}, {12, 50}, {50, 30}})
        s.features.push_back(GaussianPeak{r, c, 30, 3});
    auto g = generate_synthetic(s);
    Thresholds th = permissive();
    const double cmr = gaussian_cmr(30, 3, 4);
    th.t_peak = th.t_valley = cmr / 0.8 / 0.8 * 1.01; // needs three rounds
    auto res = detect_landmarks(g, th);
    EXPECT_EQ(res.relaxation_rounds, 3);
    EXPECT_NEAR(res.thresholds.t_peak, th.t_peak * 0.8 * 0.8 * 0.8, 1e-12);
    EXPECT_NEAR(res.thresholds.t_flat, th.t_flat * 1.25 * 1.25 * 1.25, 1e-12);
}

TEST(Detect, RecallOnPlantedPeaks) {
    std::mt19937_64 rng(77);
    for (int trial = 0; trial < 8; ++trial) {
        SynthSpec s;
        s.nrows = s.ncols = 72;
        s.base = 50;
        Thresholds th = permissive();
        std::uniform_real_distribution<double> pos(6, 65), amp(2 * th.t_peak / 0.6, 80), sig(1.0, 1.5);
        std::vector<GaussianPeak> planted;
        for (int attempt = 0; attempt < 400 && planted.size() < 6; ++attempt) {
            GaussianPeak p{std::round(pos(rng)), std::round(pos(rng)), amp(rng), sig(rng)};
            bool ok = true;
            for (const auto& q : planted)
                ok = ok && std::hypot(p.row - q.row, p.col - q.col) >= 2 * kPointSupportRadius;
            if (ok) planted.push_back(p);
        }
        for (const auto& p : planted) s.features.push_back(p);
        auto g = generate_synthetic(s);
        auto cands = detect_candidates(g, th);
        for (const auto& p : planted) {
            const auto sig9 = pyramid_signature(g, static_cast<int>(p.row), static_cast<int>(p.col));
            if (sig9.outer().center_minus_ring < 2 * th.t_peak) continue;
            double best = 1e9;
            for (const auto& lm : cands)
                if (lm.cls == LandmarkClass::Peak) best = std::min(best, std::hypot(lm.row - p.row, lm.col - p.col));
            EXPECT_LE(best, 1.0) << "trial " << trial << " peak " << p.row << "," << p.col;
        }
    }
}

TEST(Detect, RelaxationYieldsPointSuperset) {
    SynthSpec s;
    s.nrows = s.ncols = 80;
    s.base = 0;
    s.seed = 4;
    s.jitter = 0.3;
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> pos(5, 74), amp(3, 40), sig(1.5, 4);
    for (int i = 0; i < 14; ++i) {
        s.features.push_back(GaussianPeak{pos(rng), pos(rng), amp(rng), sig(rng)});
        s.features.push_back(GaussianPit{pos(rng), pos(rng), amp(rng), sig(rng)});
    }
    auto g = generate_synthetic(s);
    Thresholds th = default_thresholds(g);
    auto prev = detect_candidates(g, th);
    for (int round = 0; round < kMaxRelaxationRounds; ++round) {
        th = relax(th);
        auto next = detect_candidates(g, th);
        for (const auto& a : prev) {
            if (!is_point_class(a.cls)) continue;
            bool found = false;
            for (const auto& b : next) found = found || (b.cls == a.cls && b.row == a.row && b.col == a.col);
            EXPECT_TRUE(found) << "round " << round << " lost " << to_string(a.cls) << " at " << a.row << "," << a.col;
        }
        prev = std::move(next);
    }
}

TEST(Detect, SegmentLabelsAttached) {
    auto g = gaussian_peak_grid(40, 20, 20, 50, 3, 10);
    auto seg = watershed(g);
    auto c = detect_candidates(g, permissive(), &seg);
    for (const auto& lm : c) EXPECT_NE(lm.segment, kBackgroundLabel);
}

TEST(GroupMajor, FivePeaksCollapseToWeightedCentroid) {
    std::vector<Landmark> in{make_lm(LandmarkClass::Peak, 10, 10, 1), make_lm(LandmarkClass::Peak, 12, 10, 2),
                             make_lm(LandmarkClass::Peak, 14, 10, 3), make_lm(LandmarkClass::Peak, 10, 14, 4),
                             make_lm(LandmarkClass::Peak, 12, 14, 10)};
    auto out = group_major(in, 15);
    ASSERT_EQ(out.size(), 1u);
    // Hand computation: sum w = 20; sum w*row = 10+24+42+40+120 = 236; sum w*col = 10+20+30+56+140 = 256.
    EXPECT_NEAR(out[0].row, 236.0 / 20.0, 1e-12);
    EXPECT_NEAR(out[0].col, 256.0 / 20.0, 1e-12);
    EXPECT_TRUE(out[0].is_major);
    EXPECT_EQ(out[0].cls, LandmarkClass::Peak);
}

TEST(GroupMajor, SmallClustersPassThroughWithMedianRule) {
    std::vector<Landmark> in{make_lm(LandmarkClass::Peak, 10, 10, 1), make_lm(LandmarkClass::Peak, 12, 10, 5),
                             make_lm(LandmarkClass::Valley, 40, 40, 2)};
    auto out = group_major(in, 15);
    ASSERT_EQ(out.size(), 3u);
    int majors = 0;
    for (const auto& lm : out)
        if (lm.cls == LandmarkClass::Peak) majors += lm.is_major;
    EXPECT_EQ(majors, 1); // median of {1, 5} is 3
    for (const auto& lm : out)
        if (lm.cls == LandmarkClass::Valley) {
            EXPECT_TRUE(lm.is_major);
        }
}

TEST(GroupMajor, MergeBoundaryIsFour) {
    std::vector<Landmark> three, four;
    for (int i = 0; i < 4; ++i) {
        auto lm = make_lm(LandmarkClass::Flat, 5.0 * i, 0, 1);
        if (i < 3) three.push_back(lm);
        four.push_back(lm);
    }
    EXPECT_EQ(group_major(three, 6).size(), 3u);
    EXPECT_EQ(group_major(four, 6).size(), 1u);
    // Chained links: consecutive distance 5 <= 6 but endpoints 15 apart.
}

TEST(GroupMajor, EmptyInEmptyOut) { EXPECT_TRUE(group_major({}, 15).empty()); }

TEST(ContourAnchors, ConstantGridIsDegenerate) {
    EXPECT_DEMREG_ERROR(contour_anchors(DemGrid(10, 10, 3.0), 3), "DegenerateRange");
    EXPECT_DEMREG_ERROR(contour_anchors(DemGrid(10, 10, 3.0), 0), "InvalidArgument");
}

TEST(ContourAnchors, GaussianIsoRadii) {
    const double A = 50, sigma = 6;
    auto g = gaussian_peak_grid(64, 32, 32, A, sigma);
    auto anchors = contour_anchors(g, 4);
    ASSERT_FALSE(anchors.empty());
    for (const auto& a : anchors) {
        const double radius = std::sqrt(2 * sigma * sigma * std::log(A / a.level));
        EXPECT_NEAR(std::hypot(a.row - 32, a.col - 32), radius, 1.0);
    }
}

TEST(ContourAnchors, TiltedPlaneHasAtMostTwoPerContour) {
    SynthSpec s;
    s.nrows = s.ncols = 40;
    s.features.push_back(Plane{0.3, 0.7});
    auto g = generate_synthetic(s);
    auto anchors = contour_anchors(g, 6);
    std::map<int, int> per;
    for (const auto& a : anchors) ++per[a.contour];
    for (auto [id, n] : per) EXPECT_LE(n, 2) << "contour " << id;
}
