#include "demreg/metrics.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

#include <cmath>
#include <map>
#include <random>

using namespace demreg;
using namespace demreg::oracle;

namespace {

DemGrid from_values(int rows, int cols, const std::vector<double>& v) {
    DemGrid g(rows, cols);
    g.cells = v;
    return g;
}

} // namespace

TEST(Cc, IdenticalAndAntiCorrelated) {
    auto a = from_values(2, 3, {1, 4, 2, 8, 5, 7});
    EXPECT_DOUBLE_EQ(cc(a, a, full_mask(a)), 1.0);
    auto b = a;
    for (auto& v : b.cells) v = -v + 7;
    EXPECT_DOUBLE_EQ(cc(a, b, full_mask(a)), -1.0);
}

TEST(Cc, Errors) {
    auto a = from_values(1, 4, {3, 3, 3, 3});
    auto b = from_values(1, 4, {1, 2, 3, 4});
    EXPECT_DEMREG_ERROR(cc(a, b, full_mask(a)), "ConstantInput");
    EXPECT_DEMREG_ERROR(cc(b, b, Mask(4, 0)), "EmptyMask");
    EXPECT_DEMREG_ERROR(cc(b, DemGrid(2, 2), full_mask(b)), "DimsMismatch");
}

TEST(Cc, PositiveAffineInvarianceAndRange) {
    std::mt19937_64 rng(5);
    for (int t = 0; t < 50; ++t) {
        auto a = random_grid(rng, 6, 7, 9), b = random_grid(rng, 6, 7, 9);
        auto s = a;
        for (auto& v : s.cells) v = 3.7 * v + 120.0;
        const auto m = full_mask(a);
        double r = 0;
        try {
            r = cc(a, b, m);
        } catch (const Error&) {
            continue;
        }
        EXPECT_NEAR(cc(s, b, m), r, 1e-9);
        EXPECT_LE(std::abs(r), 1.0 + 1e-12);
    }
}

TEST(Mi, TwoBinIdentityIsOneBit) {
    auto a = from_values(1, 4, {0, 0, 1, 1});
    EXPECT_NEAR(mutual_information(a, a, full_mask(a), 2), 1.0, 1e-15);
}

TEST(Mi, UniformJointIsZero) {
    // Checkerboard against a row ramp: every (parity, row half) pair is equally common.
    DemGrid a(4, 4), b(4, 4);
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) {
            a.at(r, c) = (r + c) % 2;
            b.at(r, c) = r;
        }
    EXPECT_NEAR(mutual_information(a, b, full_mask(a), 2), 0.0, 1e-15);
}

TEST(Mi, ConstantIsZero) {
    DemGrid a(3, 3, 4.0);
    EXPECT_EQ(mutual_information(a, a, full_mask(a)), 0.0);
}

TEST(Mi, Errors) {
    DemGrid a(3, 3, 4.0);
    EXPECT_DEMREG_ERROR(mutual_information(a, a, Mask(9, 0)), "EmptyMask");
    EXPECT_DEMREG_ERROR(mutual_information(a, a, full_mask(a), 1), "InvalidArgument");
}

TEST(Mi, MatchesBruteForceOracle) {
    std::mt19937_64 rng(2024);
    std::uniform_int_distribution<int> dim(1, 8), bins(2, 12), levels(1, 20);
    std::bernoulli_distribution keep(0.8);
    for (int t = 0; t < 100; ++t) {
        const int r = dim(rng), c = dim(rng), k = bins(rng);
        auto a = random_grid(rng, r, c, levels(rng)), b = random_grid(rng, r, c, levels(rng));
        Mask m(a.size());
        for (auto& v : m) v = keep(rng);
        m[0] = 1;
        EXPECT_NEAR(mutual_information(a, b, m, k), oracle_mi(a, b, m, k), 1e-12) << "case " << t;
    }
}

TEST(Mi, SymmetricAndBoundedByEntropy) {
    std::mt19937_64 rng(9);
    for (int t = 0; t < 60; ++t) {
        auto a = random_grid(rng, 8, 8, 12), b = random_grid(rng, 8, 8, 5);
        const auto m = full_mask(a);
        const double ab = mutual_information(a, b, m, 8);
        EXPECT_EQ(ab, mutual_information(b, a, m, 8));
        const auto h = joint_entropies(a, b, m, 8);
        EXPECT_GE(ab, 0.0);
        EXPECT_LE(ab, std::min(h.h_a, h.h_b) + 1e-9);
        const double nmi = normalized_mutual_information(a, b, m, 8);
        EXPECT_GE(nmi, 0.0);
        EXPECT_LE(nmi, 1.0 + 1e-12);
    }
}

TEST(Kld, ClosedFormTwoBins) {
    auto a = from_values(1, 4, {0, 0, 1, 1});
    auto b = from_values(1, 4, {0, 1, 1, 1});
    const double expect = 0.5 * std::log2(2.0) + 0.5 * std::log2(2.0 / 3.0);
    EXPECT_NEAR(kld(a, b, full_mask(a), {2, false}), expect, 1e-12);
    EXPECT_NEAR(kld(a, b, full_mask(a), {2, false}), 0.2075, 1e-4);
}

TEST(Kld, IdenticalHistogramsWithSmoothing) {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n(0, 10);
    DemGrid a(100, 120);
    for (auto& v : a.cells) v = n(rng);
    EXPECT_EQ(kld(a, a, full_mask(a), {32, false}), 0.0);
    EXPECT_LT(kld(a, a, full_mask(a)), 1e-3);
}

TEST(Kld, NonNegativeOnRandomGrids) {
    std::mt19937_64 rng(77);
    std::uniform_int_distribution<int> dim(1, 8);
    for (int t = 0; t < 200; ++t) {
        const int r = dim(rng), c = dim(rng);
        auto a = random_grid(rng, r, c, 7), b = random_grid(rng, r, c, 4);
        EXPECT_GE(kld(a, b, full_mask(a), {8, true}), 0.0);
        EXPECT_GE(kld(a, b, full_mask(a), {8, false}), 0.0);
    }
}

TEST(Kld, UnsupportedBinIsInfiniteWithoutSmoothing) {
    auto a = from_values(1, 2, {0, 1});
    auto b = from_values(1, 2, {1, 1});
    EXPECT_TRUE(std::isinf(kld(a, b, full_mask(a), {2, false})));
    EXPECT_TRUE(std::isfinite(kld(a, b, full_mask(a), {2, true})));
}

TEST(Kld, EmptyMask) {
    DemGrid a(2, 2, 1.0);
    EXPECT_DEMREG_ERROR(kld(a, a, Mask(4, 0)), "EmptyMask");
}

TEST(Psnr, Examples) {
    DemGrid a(4, 4, 10.0);
    EXPECT_EQ(psnr(a, a, 65535), kPsnrInfinity);
    DemGrid zero(4, 4, 0.0), full(4, 4, 255.0);
    EXPECT_NEAR(psnr(zero, full, 255), 0.0, 1e-12);
    EXPECT_DEMREG_ERROR(psnr(a, DemGrid(3, 3), 1), "DimsMismatch");
    EXPECT_DEMREG_ERROR(psnr(a, a, 0), "InvalidArgument");
    DemGrid holes(2, 2, -9999.0);
    EXPECT_DEMREG_ERROR(psnr(holes, holes, 1), "EmptyMask");
}

TEST(Psnr, UniformQuantizationNoise) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0, 65535);
    DemGrid a(300, 400), q(300, 400);
    for (std::size_t i = 0; i < a.size(); ++i) {
        a.cells[i] = u(rng);
        q.cells[i] = std::round(a.cells[i]);
    }
    const double bound = 10 * std::log10(65535.0 * 65535.0 * 12.0);
    EXPECT_NEAR(bound, 107.0, 0.2);
    EXPECT_NEAR(psnr(a, q, 65535), bound, 0.1);
}

TEST(Psnr, IgnoresNodataCells) {
    DemGrid a(1, 3), b(1, 3);
    a.cells = {1, 2, -9999};
    b.cells = {1, 2, 500};
    EXPECT_EQ(psnr(a, b, 10), kPsnrInfinity);
}

TEST(Report, EmptyMaskGivesZeroCells) {
    DemGrid a(3, 3, 1.0);
    const auto r = compute_metrics(a, a, Mask(9, 0));
    EXPECT_EQ(r.n_cells, 0u);
    EXPECT_FALSE(r.cc);
}

TEST(Report, ConstantInputLeavesCcEmpty) {
    DemGrid a(3, 3, 1.0), b(3, 3);
    for (std::size_t i = 0; i < b.size(); ++i) b.cells[i] = static_cast<double>(i);
    const auto r = compute_metrics(a, b, full_mask(a), 4);
    EXPECT_FALSE(r.cc);
    EXPECT_EQ(r.n_cells, 9u);
    EXPECT_EQ(r.bins, 4);
    EXPECT_EQ(r.mi, 0.0);
}

TEST(ValidMask, CombinesNodata) {
    DemGrid a(1, 3), b(1, 3);
    a.cells = {1, -9999, 3};
    b.cells = {-9999, 2, 3};
    EXPECT_EQ(valid_mask(a, b), (Mask{0, 0, 1}));
    EXPECT_DEMREG_ERROR(valid_mask(a, DemGrid(2, 2)), "DimsMismatch");
}
