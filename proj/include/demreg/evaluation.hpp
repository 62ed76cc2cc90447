#pragma once

/**
 * @file evaluation.hpp
 * @brief Synthetic scenes with known transforms, the noise-robustness
 *        harness and the overlap sweep.
 */

#include "demreg/dem_io.hpp"
#include "demreg/metrics.hpp"
#include "demreg/register.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace demreg {

struct SceneOptions {
    int rows = 128;
    int cols = 128;
    double base = 100;
    double amp_min = 50;
    double amp_max = 110;
    double sigma_min = 3;
    double sigma_max = 6;
    double min_separation = 14;
    double margin = 8;
    double max_gradient = 0.3;
    /// Planted peaks and pits per 128 x 128 cells.
    int peaks_min = 6, peaks_max = 8;
    int pits_min = 3, pits_max = 4;
};

/// Random terrain of Gaussian peaks and pits on a tilted plane, features kept
/// `min_separation` apart and `margin` cells inside the extent.
inline SynthSpec random_scene(std::uint64_t seed, const SceneOptions& o = {}) {
    std::mt19937_64 rng(seed);
    SynthSpec s;
    s.nrows = o.rows;
    s.ncols = o.cols;
    s.base = o.base;
    s.seed = seed;
    const double area = static_cast<double>(o.rows) * o.cols / (128.0 * 128.0);
    std::uniform_int_distribution<int> np(o.peaks_min, o.peaks_max), nv(o.pits_min, o.pits_max);
    const int n_peaks = static_cast<int>(std::lround(np(rng) * area));
    const int n_pits = static_cast<int>(std::lround(nv(rng) * area));
    std::uniform_real_distribution<double> pr(o.margin, o.rows - 1 - o.margin), pc(o.margin, o.cols - 1 - o.margin);
    std::uniform_real_distribution<double> amp(o.amp_min, o.amp_max), sig(o.sigma_min, o.sigma_max),
        grad(-o.max_gradient, o.max_gradient);
    std::vector<Point> placed;
    for (int tries = 0; static_cast<int>(placed.size()) < n_peaks + n_pits && tries < 20000; ++tries) {
        const Point p{pr(rng), pc(rng)};
        bool ok = true;
        for (const auto& q : placed) ok = ok && distance(p, q) >= o.min_separation;
        if (!ok) continue;
        if (static_cast<int>(placed.size()) < n_peaks) s.features.push_back(GaussianPeak{p.row, p.col, amp(rng), sig(rng)});
        else s.features.push_back(GaussianPit{p.row, p.col, amp(rng), sig(rng)});
        placed.push_back(p);
    }
    s.features.push_back(Plane{grad(rng), grad(rng)});
    return s;
}

/// Rotation by theta about `center` followed by a translation.
inline SimilarityTransform rotation_about(Point center, double theta, double t_row, double t_col) {
    const Point rc = SimilarityTransform{theta, 1, 0, 0}.apply(center);
    return {theta, 1, center.row - rc.row + t_row, center.col - rc.col + t_col};
}

struct SyntheticPair {
    DemGrid ref;
    DemGrid cand;
    SimilarityTransform truth; ///< candidate cell -> reference cell
};

/// Samples `world` into a reference window at `origin` and a candidate whose
/// cells map into reference coordinates through `truth`.
inline SyntheticPair make_pair(const SynthSpec& world, int rows, int cols, Point origin,
                               const SimilarityTransform& truth, int cand_rows = 0, int cand_cols = 0) {
    SyntheticPair p;
    p.truth = truth;
    p.ref = sample_synthetic(world, rows, cols, [&](double r, double c) { return std::pair{r + origin.row, c + origin.col}; });
    p.cand = sample_synthetic(world, cand_rows ? cand_rows : rows, cand_cols ? cand_cols : cols, [&](double r, double c) {
        const Point q = truth.apply({r, c});
        return std::pair{q.row + origin.row, q.col + origin.col};
    });
    return p;
}

/// Fraction of reference cells whose bilinear footprint lies inside a
/// cand_rows x cand_cols candidate mapped through `truth`.
inline double analytic_overlap(const SimilarityTransform& truth, int ref_rows, int ref_cols, int cand_rows,
                               int cand_cols) {
    const auto inv = truth.inverse();
    std::size_t in = 0;
    for (int r = 0; r < ref_rows; ++r)
        for (int c = 0; c < ref_cols; ++c) {
            const Point q = inv.apply({static_cast<double>(r), static_cast<double>(c)});
            in += q.row >= 0 && q.col >= 0 && q.row <= cand_rows - 1 && q.col <= cand_cols - 1;
        }
    return static_cast<double>(in) / (static_cast<double>(ref_rows) * ref_cols);
}

/// Candidate width (columns kept from the left) whose overlap is closest to `target`.
inline int cols_for_overlap(const SimilarityTransform& truth, int ref_rows, int ref_cols, int cand_rows,
                            int max_cols, double target) {
    int best = max_cols;
    double best_gap = std::numeric_limits<double>::infinity();
    for (int w = max_cols; w >= max_cols / 2; --w) {
        const double gap = std::abs(analytic_overlap(truth, ref_rows, ref_cols, cand_rows, w) - target);
        if (gap < best_gap) {
            best_gap = gap;
            best = w;
        }
    }
    return best;
}

/// Reference window at (32, 32) of a square world 64 cells larger; the candidate
/// is rotated by `deg` about the window centre, shifted by up to `max_shift`
/// cells in a random direction and cropped to `overlap` (1 keeps it whole).
inline SyntheticPair transform_case(std::uint64_t scene_seed, std::uint64_t shift_seed, double deg, double overlap = 0.8,
                                    int n = 128, double max_shift = 15) {
    const auto world = random_scene(scene_seed, {.rows = n + 64, .cols = n + 64});
    std::mt19937_64 rng(shift_seed);
    std::uniform_real_distribution<double> dir(0, 2 * std::numbers::pi), mag(0, max_shift);
    const double a = dir(rng), m = mag(rng);
    const double mid = (n - 1) / 2.0;
    const auto truth = rotation_about({mid, mid}, deg * std::numbers::pi / 180, m * std::cos(a), m * std::sin(a));
    const int w = overlap < 1 ? cols_for_overlap(truth, n, n, n, n, overlap) : n;
    return make_pair(world, n, n, {32, 32}, truth, n, w);
}

struct TransformError {
    double theta_deg = 0;
    double translation = 0;  ///< |t_est - t_truth|, cells
    double displacement = 0; ///< distance between the images of `center`
    double scale = 0;
};

inline TransformError transform_error(const SimilarityTransform& est, const SimilarityTransform& truth, Point center) {
    TransformError e;
    e.theta_deg = wrap_angle(est.theta - truth.theta) * 180.0 / std::numbers::pi;
    e.scale = est.scale - truth.scale;
    e.translation = std::hypot(est.t_row - truth.t_row, est.t_col - truth.t_col);
    e.displacement = distance(est.apply(center), truth.apply(center));
    return e;
}

struct RobustnessResult {
    double mi_clean = 0, mi_noisy = 0;
    double kld_clean = 0, kld_noisy = 0;
    std::optional<double> cc_clean, cc_noisy;
    double overlap_clean = 0, overlap_noisy = 0;
    SimilarityTransform clean_transform, noisy_transform;
    bool noisy_low_confidence = false;
};

/// Registers the clean candidate and a noise-added copy against the same
/// reference and reports paired metrics.
inline RobustnessResult robustness_eval(const DemGrid& ref, const DemGrid& cand, double half_range, std::uint64_t seed,
                                        const RegisterConfig& cfg = {}) {
    RobustnessResult out;
    const auto clean = register_dems(ref, cand, cfg);
    out.mi_clean = clean.metrics.mi;
    out.kld_clean = clean.metrics.kld;
    out.cc_clean = clean.metrics.cc;
    out.overlap_clean = clean.overlap_fraction;
    out.clean_transform = clean.transform;
    if (half_range == 0) {
        out.mi_noisy = out.mi_clean;
        out.kld_noisy = out.kld_clean;
        out.cc_noisy = out.cc_clean;
        out.overlap_noisy = out.overlap_clean;
        out.noisy_transform = out.clean_transform;
        out.noisy_low_confidence = clean.low_confidence;
        return out;
    }
    const auto noisy = register_dems(ref, add_noise(cand, half_range, seed), cfg);
    out.mi_noisy = noisy.metrics.mi;
    out.kld_noisy = noisy.metrics.kld;
    out.cc_noisy = noisy.metrics.cc;
    out.overlap_noisy = noisy.overlap_fraction;
    out.noisy_transform = noisy.transform;
    out.noisy_low_confidence = noisy.low_confidence;
    return out;
}

struct SweepRow {
    std::string set_id;
    double overlap_pct = 0; ///< nominal overlap level
    std::optional<double> cc;
    double mi = 0;
    double kld = 0;
    double overlap_fraction = 0; ///< measured after registration
    bool low_confidence = false;
    bool failed = false;
    std::string note;
};

/// Candidates cut from a wider world, shifted along columns so the nominal
/// overlap with the reference equals each requested level.
inline std::vector<SweepRow> overlap_sweep(const SynthSpec& world, int n, const std::vector<double>& levels,
                                           const std::string& set_id, const RegisterConfig& cfg = {}) {
    std::vector<SweepRow> rows;
    for (double level : levels) {
        SweepRow row;
        row.set_id = set_id;
        row.overlap_pct = level;
        const double shift = std::round(n * (1.0 - level / 100.0));
        const auto pair = make_pair(world, n, n, {0, 0}, SimilarityTransform::translation(0, shift));
        try {
            const auto res = register_dems(pair.ref, pair.cand, cfg);
            row.cc = res.metrics.cc;
            row.mi = res.metrics.mi;
            row.kld = res.metrics.kld;
            row.overlap_fraction = res.overlap_fraction;
            row.low_confidence = res.low_confidence;
        } catch (const Error& e) {
            if (e.code() != "RegistrationFailed") throw;
            row.failed = true;
            row.note = e.what();
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

namespace detail {
inline std::string csv_number(std::optional<double> v) { return v ? format_double(*v) : ""; }
} // namespace detail

inline std::string sweep_csv_header() { return "set_id,overlap_pct,cc,mi,kld"; }

inline std::string to_csv(const SweepRow& r) {
    return r.set_id + "," + detail::format_double(r.overlap_pct) + "," + detail::csv_number(r.cc) + "," +
           (r.failed ? "" : detail::format_double(r.mi)) + "," + (r.failed ? "" : detail::format_double(r.kld));
}

} // namespace demreg
