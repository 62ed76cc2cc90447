#pragma once

/**
 * @file metrics.hpp
 * @brief Similarity measures over a cell mask: Pearson correlation, mutual
 *        information and Kullback-Leibler divergence (bits), PSNR.
 */

#include "demreg/dem_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

namespace demreg {

/// One byte per cell, non-zero where the cell takes part in a comparison.
using Mask = std::vector<std::uint8_t>;

inline constexpr int kDefaultBins = 32;

inline Mask full_mask(const DemGrid& g) { return Mask(g.size(), 1); }

/// Cells that are valid in both grids.
inline Mask valid_mask(const DemGrid& a, const DemGrid& b) {
    if (!a.same_frame(b)) fail("DimsMismatch", "grids differ in dimensions");
    Mask m(a.size(), 0);
    for (std::size_t i = 0; i < a.size(); ++i) m[i] = !a.is_nodata(a.cells[i]) && !b.is_nodata(b.cells[i]);
    return m;
}

inline std::size_t mask_count(const Mask& m) {
    return static_cast<std::size_t>(std::count_if(m.begin(), m.end(), [](auto v) { return v != 0; }));
}

namespace detail {

inline void check_frame(const DemGrid& a, const DemGrid& b, const Mask& mask) {
    if (!a.same_frame(b)) fail("DimsMismatch", "grids differ in dimensions");
    if (mask.size() != a.size()) fail("DimsMismatch", "mask size does not match grids");
}

/// Equal-width bin of v in [lo, hi]; the top edge falls into the last bin.
inline int bin_of(double v, double lo, double hi, int bins) {
    if (!(hi > lo)) return 0;
    const int b = static_cast<int>(std::floor((v - lo) / (hi - lo) * bins));
    return std::clamp(b, 0, bins - 1);
}

/// Counts are summed in sorted order so the value does not depend on bin order.
inline double entropy_bits(std::vector<double> counts, double total) {
    std::sort(counts.begin(), counts.end());
    double h = 0;
    for (double c : counts)
        if (c > 0) {
            const double p = c / total;
            h -= p * std::log2(p);
        }
    return h;
}

struct MaskedValues {
    std::vector<double> a, b;
};

inline MaskedValues gather(const DemGrid& a, const DemGrid& b, const Mask& mask) {
    check_frame(a, b, mask);
    MaskedValues v;
    for (std::size_t i = 0; i < mask.size(); ++i)
        if (mask[i]) {
            v.a.push_back(a.cells[i]);
            v.b.push_back(b.cells[i]);
        }
    return v;
}

} // namespace detail

/// Pearson correlation over masked cells.
inline double cc(const DemGrid& a, const DemGrid& b, const Mask& mask) {
    const auto v = detail::gather(a, b, mask);
    const std::size_t n = v.a.size();
    if (n == 0) fail("EmptyMask", "no cells selected for correlation");
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < n; ++i) {
        ma += v.a[i];
        mb += v.b[i];
    }
    ma /= static_cast<double>(n);
    mb /= static_cast<double>(n);
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double da = v.a[i] - ma, db = v.b[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa == 0 || sbb == 0) fail("ConstantInput", "correlation undefined for a constant input on the mask");
    return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

struct HistogramEntropies {
    double h_a = 0, h_b = 0, h_ab = 0;
};

/// Marginal and joint entropies from a bins x bins joint histogram, each
/// input binned over its own masked range.
inline HistogramEntropies joint_entropies(const DemGrid& a, const DemGrid& b, const Mask& mask, int bins) {
    if (bins < 2) fail("InvalidArgument", "bins must be >= 2");
    const auto v = detail::gather(a, b, mask);
    const std::size_t n = v.a.size();
    if (n == 0) fail("EmptyMask", "no cells selected for mutual information");
    const auto [alo, ahi] = std::minmax_element(v.a.begin(), v.a.end());
    const auto [blo, bhi] = std::minmax_element(v.b.begin(), v.b.end());
    std::vector<double> ca(static_cast<std::size_t>(bins), 0), cb(static_cast<std::size_t>(bins), 0),
        cab(static_cast<std::size_t>(bins * bins), 0);
    for (std::size_t i = 0; i < n; ++i) {
        const int ia = detail::bin_of(v.a[i], *alo, *ahi, bins);
        const int ib = detail::bin_of(v.b[i], *blo, *bhi, bins);
        ca[ia] += 1;
        cb[ib] += 1;
        cab[ia * bins + ib] += 1;
    }
    const double total = static_cast<double>(n);
    return {detail::entropy_bits(ca, total), detail::entropy_bits(cb, total), detail::entropy_bits(cab, total)};
}

/// MI = H(A) + H(B) - H(A,B), in bits.
inline double mutual_information(const DemGrid& a, const DemGrid& b, const Mask& mask, int bins = kDefaultBins) {
    const auto h = joint_entropies(a, b, mask, bins);
    const double mi = h.h_a + h.h_b - h.h_ab;
    return mi < 0 && mi > -1e-12 ? 0.0 : mi;
}

/// 2 MI / (H(A) + H(B)); 0 when both marginals are degenerate.
inline double normalized_mutual_information(const DemGrid& a, const DemGrid& b, const Mask& mask,
                                            int bins = kDefaultBins) {
    const auto h = joint_entropies(a, b, mask, bins);
    const double denom = h.h_a + h.h_b;
    if (denom <= 0) return 0.0;
    return std::max(0.0, 2.0 * (h.h_a + h.h_b - h.h_ab) / denom);
}

/// D(p || q) in bits for two probability vectors of equal length.
inline double kl_divergence_bits(const std::vector<double>& p, const std::vector<double>& q) {
    if (p.size() != q.size()) fail("DimsMismatch", "distributions differ in length");
    double d = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] <= 0) continue;
        if (q[i] <= 0) return std::numeric_limits<double>::infinity();
        d += p[i] * std::log2(p[i] / q[i]);
    }
    if (d < 0) {
        if (d < -1e-12) fail("InvariantViolation", "negative KL divergence");
        d = 0;
    }
    return d;
}

struct KldOptions {
    int bins = kDefaultBins;
    bool laplace = true; ///< add-one smoothing of the second histogram
};

/// D(P_a || P_b) over marginal histograms sharing the joint masked range of
/// both inputs.
inline double kld(const DemGrid& a, const DemGrid& b, const Mask& mask, const KldOptions& opt = {}) {
    if (opt.bins < 2) fail("InvalidArgument", "bins must be >= 2");
    const auto v = detail::gather(a, b, mask);
    const std::size_t n = v.a.size();
    if (n == 0) fail("EmptyMask", "no cells selected for KL divergence");
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t i = 0; i < n; ++i) {
        lo = std::min({lo, v.a[i], v.b[i]});
        hi = std::max({hi, v.a[i], v.b[i]});
    }
    const auto bins = static_cast<std::size_t>(opt.bins);
    std::vector<double> pa(bins, 0), pb(bins, opt.laplace ? 1.0 : 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        pa[detail::bin_of(v.a[i], lo, hi, opt.bins)] += 1;
        pb[detail::bin_of(v.b[i], lo, hi, opt.bins)] += 1;
    }
    const double ta = static_cast<double>(n);
    const double tb = static_cast<double>(n) + (opt.laplace ? static_cast<double>(bins) : 0.0);
    for (auto& x : pa) x /= ta;
    for (auto& x : pb) x /= tb;
    return kl_divergence_bits(pa, pb);
}

inline constexpr double kPsnrInfinity = std::numeric_limits<double>::infinity();

/// 10 log10(peak^2 / MSE) over cells valid in both; +infinity when MSE is 0.
inline double psnr(const DemGrid& orig, const DemGrid& recon, double peak) {
    if (!orig.same_frame(recon)) fail("DimsMismatch", "grids differ in dimensions");
    if (!(peak > 0)) fail("InvalidArgument", "peak must be > 0");
    double se = 0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < orig.size(); ++i) {
        if (orig.is_nodata(orig.cells[i]) || recon.is_nodata(recon.cells[i])) continue;
        const double d = orig.cells[i] - recon.cells[i];
        se += d * d;
        ++n;
    }
    if (n == 0) fail("EmptyMask", "no valid cells to compare");
    if (se == 0) return kPsnrInfinity;
    return 10.0 * std::log10(peak * peak / (se / static_cast<double>(n)));
}

struct MetricsReport {
    std::optional<double> cc; ///< empty when an input is constant on the mask
    double mi = 0;
    double kld = 0;
    std::optional<double> nmi;
    std::size_t n_cells = 0;
    int bins = kDefaultBins;
};

/// All metrics on one mask; an empty mask gives n_cells = 0 and zero measures.
inline MetricsReport compute_metrics(const DemGrid& ref, const DemGrid& other, const Mask& mask,
                                     int bins = kDefaultBins) {
    detail::check_frame(ref, other, mask);
    MetricsReport r;
    r.bins = bins;
    r.n_cells = mask_count(mask);
    if (r.n_cells == 0) return r;
    try {
        r.cc = cc(ref, other, mask);
    } catch (const Error& e) {
        if (e.code() != "ConstantInput") throw;
    }
    r.mi = mutual_information(ref, other, mask, bins);
    r.nmi = normalized_mutual_information(ref, other, mask, bins);
    r.kld = kld(ref, other, mask, {bins, true});
    return r;
}

} // namespace demreg
