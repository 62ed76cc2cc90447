#pragma once

/**
 * @file landmarks.hpp
 * @brief Concentric-window (3/5/7/9) terrain statistics, four-class landmark
 *        classification, detection with threshold relaxation, major-landmark
 *        grouping and contour-based anchor points.
 */

#include "demreg/dem_io.hpp"
#include "demreg/segmentation.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace demreg {

enum class LandmarkClass : std::uint8_t { Peak = 0, Valley = 1, Flat = 2, Ripple = 3 };

inline constexpr std::array<LandmarkClass, 4> kAllClasses{LandmarkClass::Peak, LandmarkClass::Valley,
                                                          LandmarkClass::Flat, LandmarkClass::Ripple};

inline std::string_view to_string(LandmarkClass c) {
    switch (c) {
    case LandmarkClass::Peak: return "Peak";
    case LandmarkClass::Valley: return "Valley";
    case LandmarkClass::Flat: return "Flat";
    case LandmarkClass::Ripple: return "Ripple";
    }
    return "?";
}

inline LandmarkClass landmark_class_from_string(std::string_view s) {
    for (auto c : kAllClasses)
        if (to_string(c) == s) return c;
    fail("InvalidArgument", "unknown landmark class '" + std::string(s) + "'");
}

/// Statistics of one odd concentric window.
struct WindowStats {
    int size = 0;
    double mean = 0;
    double relief = 0;            ///< max - min
    double center_minus_ring = 0; ///< center - mean of the outermost ring
    double mean_gradient = 0;     ///< mean gradient magnitude, m/cell

    friend bool operator==(const WindowStats&, const WindowStats&) = default;
};

struct PyramidSignature {
    static constexpr std::array<int, 4> kWindowSizes{3, 5, 7, 9};
    static constexpr int kMaxHalf = 4;

    std::array<WindowStats, 4> levels{};
    /// Largest number of slope sign changes along the four 9-cell profiles
    /// (row, column, both diagonals) through the center.
    int alternations = 0;

    const WindowStats& outer() const { return levels.back(); }
    friend bool operator==(const PyramidSignature&, const PyramidSignature&) = default;
};

struct Thresholds {
    double t_flat = 1;
    double t_peak = 1;
    double t_valley = 1;
    double t_ripple_relief = 1;
    int min_alternations = 3;
    double cluster_radius = 15;

    friend bool operator==(const Thresholds&, const Thresholds&) = default;
};

inline void validate(const Thresholds& th) {
    if (!(th.t_flat > 0 && th.t_peak > 0 && th.t_valley > 0 && th.t_ripple_relief > 0 &&
          th.min_alternations > 0 && th.cluster_radius > 0))
        fail("InvalidThresholds", "all thresholds must be strictly positive");
}

/// Scale-relative defaults: flat 2%, peak/valley 5%, ripple relief 4% of the
/// elevation range.
inline Thresholds default_thresholds(const DemGrid& g) {
    const auto range = valid_range(g);
    const double span = range ? range->second - range->first : 0.0;
    constexpr double floor_value = 1e-9;
    Thresholds th;
    th.t_flat = std::max(0.02 * span, floor_value);
    th.t_peak = std::max(0.05 * span, floor_value);
    th.t_valley = th.t_peak;
    th.t_ripple_relief = std::max(0.04 * span, floor_value);
    th.min_alternations = 3;
    th.cluster_radius = 15;
    return th;
}

/// One readjustment round: point-feature thresholds shrink, area-feature thresholds grow.
inline Thresholds relax(Thresholds th) {
    th.t_peak *= 0.8;
    th.t_valley *= 0.8;
    th.t_flat *= 1.25;
    th.t_ripple_relief *= 1.25;
    return th;
}

struct Landmark {
    LandmarkClass cls = LandmarkClass::Flat;
    double row = 0;
    double col = 0;
    double prominence = 0;
    double support_radius = 0;
    PyramidSignature signature{};
    bool is_major = false;
    std::int32_t segment = kBackgroundLabel;

    friend bool operator==(const Landmark&, const Landmark&) = default;
};

namespace detail {

/// Summed-area table of nodata flags for O(1) window checks.
class NoDataIndex {
public:
    explicit NoDataIndex(const DemGrid& g)
        : cols_(g.ncols + 1), sat_(static_cast<std::size_t>(g.nrows + 1) * static_cast<std::size_t>(g.ncols + 1), 0) {
        for (int r = 0; r < g.nrows; ++r)
            for (int c = 0; c < g.ncols; ++c)
                sat_[idx(r + 1, c + 1)] = (g.valid(r, c) ? 0 : 1) + sat_[idx(r, c + 1)] + sat_[idx(r + 1, c)] -
                                          sat_[idx(r, c)];
    }
    /// Nodata count in the inclusive window [r0, r1] x [c0, c1].
    int count(int r0, int c0, int r1, int c1) const {
        return sat_[idx(r1 + 1, c1 + 1)] - sat_[idx(r0, c1 + 1)] - sat_[idx(r1 + 1, c0)] + sat_[idx(r0, c0)];
    }

private:
    std::size_t idx(int r, int c) const {
        return static_cast<std::size_t>(r) * static_cast<std::size_t>(cols_) + static_cast<std::size_t>(c);
    }
    int cols_;
    std::vector<int> sat_;
};

template <class GradientAt>
PyramidSignature signature_at(const DemGrid& g, int r, int c, GradientAt&& gradient_at) {
    constexpr int H = PyramidSignature::kMaxHalf;
    std::array<double, H + 1> ring_sum{}, ring_grad{}, ring_min{}, ring_max{};
    std::array<int, H + 1> ring_n{};
    ring_min.fill(std::numeric_limits<double>::infinity());
    ring_max.fill(-std::numeric_limits<double>::infinity());
    for (int dr = -H; dr <= H; ++dr)
        for (int dc = -H; dc <= H; ++dc) {
            const int ring = std::max(std::abs(dr), std::abs(dc));
            const double z = g.at(r + dr, c + dc);
            ring_sum[ring] += z;
            ring_grad[ring] += gradient_at(r + dr, c + dc);
            ring_min[ring] = std::min(ring_min[ring], z);
            ring_max[ring] = std::max(ring_max[ring], z);
            ++ring_n[ring];
        }

    PyramidSignature sig;
    const double center = g.at(r, c);
    double sum = ring_sum[0], grad = ring_grad[0], lo = ring_min[0], hi = ring_max[0];
    for (int k = 1; k <= H; ++k) {
        sum += ring_sum[k];
        grad += ring_grad[k];
        lo = std::min(lo, ring_min[k]);
        hi = std::max(hi, ring_max[k]);
        const int w = 2 * k + 1;
        auto& lv = sig.levels[k - 1];
        lv.size = w;
        lv.mean = sum / (w * w);
        lv.relief = hi - lo;
        lv.center_minus_ring = center - ring_sum[k] / ring_n[k];
        lv.mean_gradient = grad / (w * w);
    }

    const double eps = 1e-9 * std::max(1.0, sig.outer().relief);
    constexpr std::array<std::pair<int, int>, 4> dirs{{{0, 1}, {1, 0}, {1, 1}, {1, -1}}};
    for (auto [dr, dc] : dirs) {
        int changes = 0, last_sign = 0;
        for (int t = -H; t < H; ++t) {
            const double d = g.at(r + (t + 1) * dr, c + (t + 1) * dc) - g.at(r + t * dr, c + t * dc);
            const int s = d > eps ? 1 : (d < -eps ? -1 : 0);
            if (s == 0) continue;
            if (last_sign != 0 && s != last_sign) ++changes;
            last_sign = s;
        }
        sig.alternations = std::max(sig.alternations, changes);
    }
    return sig;
}

} // namespace detail

/// Concentric-window statistics centred on (row, col).
inline PyramidSignature pyramid_signature(const DemGrid& g, int row, int col) {
    constexpr int H = PyramidSignature::kMaxHalf;
    if (row - H < 0 || col - H < 0 || row + H >= g.nrows || col + H >= g.ncols)
        fail("WindowOutOfBounds", "9x9 window around (" + std::to_string(row) + ", " + std::to_string(col) +
                                      ") leaves the grid");
    for (int dr = -H; dr <= H; ++dr)
        for (int dc = -H; dc <= H; ++dc)
            if (!g.valid(row + dr, col + dc))
                fail("NoDataInWindow", "nodata cell inside window around (" + std::to_string(row) + ", " +
                                           std::to_string(col) + ")");
    return detail::signature_at(g, row, col, [&](int r, int c) { return gradient_magnitude_at(g, r, c); });
}

/// Priority-ordered crisp rules: Peak, Valley, Flat, Ripple.
inline std::optional<LandmarkClass> classify_cell(const PyramidSignature& sig, const Thresholds& th) {
    const auto& lv = sig.levels;
    auto increasing = [&](double sign) {
        for (std::size_t k = 1; k < lv.size(); ++k)
            if (!(sign * lv[k].center_minus_ring > sign * lv[k - 1].center_minus_ring)) return false;
        return true;
    };
    const double cmr = sig.outer().center_minus_ring;
    if (cmr >= th.t_peak && increasing(1.0)) return LandmarkClass::Peak;
    if (-cmr >= th.t_valley && increasing(-1.0)) return LandmarkClass::Valley;
    const double relief = sig.outer().relief;
    if (relief < th.t_flat) return LandmarkClass::Flat;
    if (relief < th.t_ripple_relief && sig.alternations >= th.min_alternations) return LandmarkClass::Ripple;
    return std::nullopt;
}

/// Suppression radius (cells) for the point classes.
inline constexpr double kPointSupportRadius = 4.0;
/// Smallest connected area (cells) that forms a Flat or Ripple landmark.
inline constexpr std::size_t kMinAreaCells = 9;

inline bool is_point_class(LandmarkClass c) { return c == LandmarkClass::Peak || c == LandmarkClass::Valley; }

/// Single detection pass at fixed thresholds, before major-landmark grouping.
///
/// Peaks and valleys are local maxima of prominence among same-class cells
/// within kPointSupportRadius, refined to sub-cell precision by a quadratic fit
/// of the prominence field. Flats and ripples are connected same-class areas
/// (split by segment when `segments` is given) reported at their centroid.
inline std::vector<Landmark> detect_candidates(const DemGrid& g, const Thresholds& th,
                                               const SegmentLabels* segments = nullptr) {
    validate(th);
    constexpr int H = PyramidSignature::kMaxHalf;
    if (g.nrows < 2 * H + 3 || g.ncols < 2 * H + 3)
        fail("GridTooSmall", "landmark detection needs at least an 11x11 grid");
    if (segments && (segments->nrows != g.nrows || segments->ncols != g.ncols))
        fail("DimsMismatch", "segment labels do not match grid");

    const int nr = g.nrows, nc = g.ncols;
    const std::size_t n = g.size();
    detail::NoDataIndex nodata(g);
    std::vector<double> grad(n, 0.0);
    for (int r = 0; r < nr; ++r)
        for (int c = 0; c < nc; ++c)
            if (g.valid(r, c)) grad[g.index(r, c)] = gradient_magnitude_at(g, r, c);

    std::vector<PyramidSignature> sigs(n);
    std::vector<std::int8_t> cls(n, -1);
    std::vector<char> scanned(n, 0);
    for (int r = H; r < nr - H; ++r)
        for (int c = H; c < nc - H; ++c) {
            if (nodata.count(r - H, c - H, r + H, c + H) != 0) continue;
            const auto i = g.index(r, c);
            sigs[i] = detail::signature_at(g, r, c, [&](int rr, int cc) { return grad[g.index(rr, cc)]; });
            scanned[i] = 1;
            if (auto k = classify_cell(sigs[i], th)) cls[i] = static_cast<std::int8_t>(*k);
        }

    std::vector<Landmark> out;
    auto segment_at = [&](double row, double col) {
        if (!segments) return kBackgroundLabel;
        const int r = std::clamp(static_cast<int>(std::lround(row)), 0, nr - 1);
        const int c = std::clamp(static_cast<int>(std::lround(col)), 0, nc - 1);
        return segments->at(r, c);
    };

    // Point classes.
    const int R = static_cast<int>(kPointSupportRadius);
    for (int r = H; r < nr - H; ++r)
        for (int c = H; c < nc - H; ++c) {
            const auto i = g.index(r, c);
            if (cls[i] < 0) continue;
            const auto k = static_cast<LandmarkClass>(cls[i]);
            if (!is_point_class(k)) continue;
            const double sign = k == LandmarkClass::Peak ? 1.0 : -1.0;
            const double score = sign * sigs[i].outer().center_minus_ring;
            bool keep = true;
            for (int dr = -R; dr <= R && keep; ++dr)
                for (int dc = -R; dc <= R; ++dc) {
                    if (dr * dr + dc * dc > R * R || (dr == 0 && dc == 0)) continue;
                    const int rr = r + dr, cc = c + dc;
                    if (!g.in_bounds(rr, cc)) continue;
                    const auto j = g.index(rr, cc);
                    if (cls[j] != cls[i]) continue;
                    const double s = sign * sigs[j].outer().center_minus_ring;
                    if (s > score || (s == score && j < i)) {
                        keep = false;
                        break;
                    }
                }
            if (!keep) continue;

            // Least-squares quadratic over the 5x5 neighbourhood of scanned cells.
            double row = r, col = c;
            {
                double ata[6][6] = {}, atb[6] = {};
                int used = 0;
                for (int dr = -2; dr <= 2; ++dr)
                    for (int dc = -2; dc <= 2; ++dc) {
                        const int rr = r + dr, cc = c + dc;
                        if (!g.in_bounds(rr, cc) || !scanned[g.index(rr, cc)]) continue;
                        const double v = sign * sigs[g.index(rr, cc)].outer().center_minus_ring;
                        const double x = dc, y = dr;
                        const double basis[6] = {1, x, y, x * x, y * y, x * y};
                        for (int a = 0; a < 6; ++a) {
                            atb[a] += basis[a] * v;
                            for (int b = 0; b < 6; ++b) ata[a][b] += basis[a] * basis[b];
                        }
                        ++used;
                    }
                if (used >= 9) {
                    // Gaussian elimination with partial pivoting.
                    double m[6][7];
                    for (int a = 0; a < 6; ++a) {
                        for (int b = 0; b < 6; ++b) m[a][b] = ata[a][b];
                        m[a][6] = atb[a];
                    }
                    bool ok = true;
                    for (int col_i = 0; col_i < 6 && ok; ++col_i) {
                        int piv = col_i;
                        for (int a = col_i + 1; a < 6; ++a)
                            if (std::abs(m[a][col_i]) > std::abs(m[piv][col_i])) piv = a;
                        if (std::abs(m[piv][col_i]) < 1e-12) {
                            ok = false;
                            break;
                        }
                        std::swap(m[piv], m[col_i]);
                        for (int a = 0; a < 6; ++a) {
                            if (a == col_i) continue;
                            const double f = m[a][col_i] / m[col_i][col_i];
                            for (int b = col_i; b < 7; ++b) m[a][b] -= f * m[col_i][b];
                        }
                    }
                    if (ok) {
                        double coef[6];
                        for (int a = 0; a < 6; ++a) coef[a] = m[a][6] / m[a][a];
                        const double bx = coef[1], by = coef[2], dxx = coef[3], dyy = coef[4], dxy = coef[5];
                        // Maximum of the fitted quadratic: Hessian must be negative definite.
                        const double h11 = 2 * dxx, h22 = 2 * dyy, h12 = dxy;
                        const double det = h11 * h22 - h12 * h12;
                        if (h11 < 0 && det > 0) {
                            const double ox = (-bx * h22 + by * h12) / det;
                            const double oy = (-by * h11 + bx * h12) / det;
                            if (std::abs(ox) <= 1.0 && std::abs(oy) <= 1.0) {
                                col = c + ox;
                                row = r + oy;
                            }
                        }
                    }
                }
            }

            Landmark lm;
            lm.cls = k;
            lm.row = row;
            lm.col = col;
            lm.prominence = std::abs(sigs[i].outer().center_minus_ring);
            lm.support_radius = kPointSupportRadius;
            lm.signature = sigs[i];
            lm.segment = segment_at(row, col);
            out.push_back(lm);
        }

    // Area classes: connected components of same-class (and same-segment) cells.
    std::vector<char> visited(n, 0);
    std::vector<std::size_t> comp;
    for (int r = H; r < nr - H; ++r)
        for (int c = H; c < nc - H; ++c) {
            const auto start = g.index(r, c);
            if (visited[start] || cls[start] < 0) continue;
            const auto k = static_cast<LandmarkClass>(cls[start]);
            if (is_point_class(k)) continue;
            const auto seg = segments ? segments->labels[start] : kBackgroundLabel;
            comp.clear();
            std::vector<std::size_t> stack{start};
            visited[start] = 1;
            while (!stack.empty()) {
                const auto cur = stack.back();
                stack.pop_back();
                comp.push_back(cur);
                const int cr = static_cast<int>(cur / nc), cc = static_cast<int>(cur % nc);
                for (auto [dr, dc] : detail::kNeighbors4) {
                    const int rr = cr + dr, c2 = cc + dc;
                    if (!g.in_bounds(rr, c2)) continue;
                    const auto j = g.index(rr, c2);
                    if (visited[j] || cls[j] != cls[start]) continue;
                    if (segments && segments->labels[j] != seg) continue;
                    visited[j] = 1;
                    stack.push_back(j);
                }
            }
            if (comp.size() < kMinAreaCells) continue;
            double sr = 0, sc = 0;
            for (auto idx : comp) {
                sr += static_cast<double>(idx / nc);
                sc += static_cast<double>(idx % nc);
            }
            const double mr = sr / static_cast<double>(comp.size());
            const double mc = sc / static_cast<double>(comp.size());
            std::size_t nearest = comp.front();
            double best = std::numeric_limits<double>::infinity();
            for (auto idx : comp) {
                const double d = std::hypot(static_cast<double>(idx / nc) - mr, static_cast<double>(idx % nc) - mc);
                if (d < best) {
                    best = d;
                    nearest = idx;
                }
            }
            Landmark lm;
            lm.cls = k;
            lm.row = mr;
            lm.col = mc;
            lm.prominence = std::abs(sigs[nearest].outer().center_minus_ring);
            lm.support_radius = std::sqrt(static_cast<double>(comp.size()) / std::numbers::pi);
            lm.signature = sigs[nearest];
            lm.segment = segments ? seg : kBackgroundLabel;
            out.push_back(lm);
        }
    return out;
}

namespace detail {

inline void sort_landmarks(std::vector<Landmark>& v) {
    std::sort(v.begin(), v.end(), [](const Landmark& a, const Landmark& b) {
        if (a.cls != b.cls) return a.cls < b.cls;
        if (a.is_major != b.is_major) return a.is_major;
        if (a.prominence != b.prominence) return a.prominence > b.prominence;
        if (a.row != b.row) return a.row < b.row;
        return a.col < b.col;
    });
}

} // namespace detail

/// Groups same-class landmarks linked by distance <= cluster_radius. Clusters
/// of more than three collapse into one major landmark at the
/// prominence-weighted centroid; members of smaller clusters are major when
/// their prominence reaches the class median.
inline std::vector<Landmark> group_major(const std::vector<Landmark>& landmarks, double cluster_radius) {
    std::vector<Landmark> out;
    for (auto k : kAllClasses) {
        std::vector<Landmark> members;
        for (const auto& lm : landmarks)
            if (lm.cls == k) members.push_back(lm);
        if (members.empty()) continue;

        std::vector<double> proms;
        for (const auto& m : members) proms.push_back(m.prominence);
        std::sort(proms.begin(), proms.end());
        const std::size_t np = proms.size();
        const double median = np % 2 ? proms[np / 2] : 0.5 * (proms[np / 2 - 1] + proms[np / 2]);

        const auto count = static_cast<std::int32_t>(members.size());
        detail::UnionFind uf(count);
        for (std::int32_t a = 0; a < count; ++a)
            for (std::int32_t b = a + 1; b < count; ++b)
                if (std::hypot(members[a].row - members[b].row, members[a].col - members[b].col) <= cluster_radius)
                    uf.unite(a, b);

        std::map<std::int32_t, std::vector<std::int32_t>> clusters;
        for (std::int32_t a = 0; a < count; ++a) clusters[uf.find(a)].push_back(a);

        for (const auto& [root, ids] : clusters) {
            if (ids.size() > 3) {
                double wsum = 0, wr = 0, wc = 0, sr = 0, sc = 0;
                std::int32_t top = ids.front();
                for (auto id : ids) {
                    const auto& m = members[id];
                    wsum += m.prominence;
                    wr += m.prominence * m.row;
                    wc += m.prominence * m.col;
                    sr += m.row;
                    sc += m.col;
                    if (m.prominence > members[top].prominence) top = id;
                }
                Landmark major = members[top];
                if (wsum > 0) {
                    major.row = wr / wsum;
                    major.col = wc / wsum;
                } else {
                    major.row = sr / static_cast<double>(ids.size());
                    major.col = sc / static_cast<double>(ids.size());
                }
                double extent = 0;
                for (auto id : ids)
                    extent = std::max(extent, std::hypot(members[id].row - major.row, members[id].col - major.col) +
                                                  members[id].support_radius);
                major.support_radius = extent;
                major.is_major = true;
                out.push_back(major);
            } else {
                for (auto id : ids) {
                    Landmark m = members[id];
                    m.is_major = m.prominence >= median;
                    out.push_back(m);
                }
            }
        }
    }
    detail::sort_landmarks(out);
    return out;
}

inline std::map<LandmarkClass, int> major_counts(const std::vector<Landmark>& lms) {
    std::map<LandmarkClass, int> counts;
    for (auto k : kAllClasses) counts[k] = 0;
    for (const auto& lm : lms)
        if (lm.is_major) ++counts[lm.cls];
    return counts;
}

struct DetectionResult {
    std::vector<Landmark> landmarks;  ///< grouped, final
    std::vector<Landmark> candidates; ///< last pass before grouping
    Thresholds thresholds;            ///< thresholds of the final pass
    int relaxation_rounds = 0;
};

/// Raised when no class reaches three major landmarks after all relaxation
/// rounds; carries the last pass so callers can fall back.
class InsufficientLandmarks : public Error {
public:
    explicit InsufficientLandmarks(DetectionResult partial)
        : Error("InsufficientLandmarks", "no landmark class reached 3 major landmarks after " +
                                             std::to_string(partial.relaxation_rounds) + " relaxation rounds"),
          partial_(std::move(partial)) {}
    const DetectionResult& partial() const noexcept { return partial_; }

private:
    DetectionResult partial_;
};

inline constexpr int kMaxRelaxationRounds = 5;
inline constexpr int kRequiredMajors = 3;

inline DetectionResult detect_landmarks(const DemGrid& g, const Thresholds& initial,
                                        const SegmentLabels* segments = nullptr) {
    Thresholds th = initial;
    DetectionResult res;
    for (int round = 0;; ++round) {
        res.candidates = detect_candidates(g, th, segments);
        res.landmarks = group_major(res.candidates, th.cluster_radius);
        res.thresholds = th;
        res.relaxation_rounds = round;
        for (const auto& [k, n] : major_counts(res.landmarks))
            if (n >= kRequiredMajors) return res;
        if (round == kMaxRelaxationRounds) break;
        th = relax(th);
    }
    throw InsufficientLandmarks(std::move(res));
}

inline DetectionResult detect_landmarks(const DemGrid& g) { return detect_landmarks(g, default_thresholds(g)); }

// ---------------------------------------------------------------------------
// Contour anchors
// ---------------------------------------------------------------------------

struct ContourAnchor {
    double row = 0;
    double col = 0;
    double level = 0;
    int contour = 0;      ///< index of the traced contour the anchor lies on
    double curvature = 0; ///< turning angle per unit arc length, 1/cell
};

/// Curvature floor below which a vertex never counts as an anchor.
inline constexpr double kMinAnchorCurvature = 1e-3;

namespace detail {

struct Point2 {
    double row, col;
};

/// Marching-squares iso-lines at `level`, linked into polylines. The bool is
/// true for closed loops.
inline std::vector<std::pair<std::vector<Point2>, bool>> trace_contours(const DemGrid& g, double level) {
    const int nr = g.nrows, nc = g.ncols;
    // Edge ids: horizontal (r,c)-(r,c+1) -> 2*(r*nc+c); vertical (r,c)-(r+1,c) -> 2*(r*nc+c)+1.
    auto hid = [&](int r, int c) { return 2 * (static_cast<long long>(r) * nc + c); };
    auto vid = [&](int r, int c) { return 2 * (static_cast<long long>(r) * nc + c) + 1; };
    std::unordered_map<long long, Point2> points;
    std::unordered_map<long long, std::vector<long long>> adj;

    auto crossing = [&](double r0, double c0, double v0, double r1, double c1, double v1) {
        const double t = (level - v0) / (v1 - v0);
        return Point2{r0 + t * (r1 - r0), c0 + t * (c1 - c0)};
    };
    auto link = [&](long long a, long long b) {
        adj[a].push_back(b);
        adj[b].push_back(a);
    };

    for (int r = 0; r + 1 < nr; ++r)
        for (int c = 0; c + 1 < nc; ++c) {
            if (!g.valid(r, c) || !g.valid(r, c + 1) || !g.valid(r + 1, c) || !g.valid(r + 1, c + 1)) continue;
            const double v[4] = {g.at(r, c), g.at(r, c + 1), g.at(r + 1, c + 1), g.at(r + 1, c)};
            const int mask = (v[0] > level) | ((v[1] > level) << 1) | ((v[2] > level) << 2) | ((v[3] > level) << 3);
            if (mask == 0 || mask == 15) continue;
            // Edges: 0 top, 1 right, 2 bottom, 3 left.
            const long long eid[4] = {hid(r, c), vid(r, c + 1), hid(r + 1, c), vid(r, c)};
            auto ensure = [&](int e) {
                if (points.count(eid[e])) return;
                switch (e) {
                case 0: points[eid[e]] = crossing(r, c, v[0], r, c + 1, v[1]); break;
                case 1: points[eid[e]] = crossing(r, c + 1, v[1], r + 1, c + 1, v[2]); break;
                case 2: points[eid[e]] = crossing(r + 1, c, v[3], r + 1, c + 1, v[2]); break;
                default: points[eid[e]] = crossing(r, c, v[0], r + 1, c, v[3]); break;
                }
            };
            auto seg = [&](int a, int b) {
                ensure(a);
                ensure(b);
                link(eid[a], eid[b]);
            };
            const double center = 0.25 * (v[0] + v[1] + v[2] + v[3]);
            switch (mask) {
            case 1: case 14: seg(3, 0); break;
            case 2: case 13: seg(0, 1); break;
            case 3: case 12: seg(3, 1); break;
            case 4: case 11: seg(1, 2); break;
            case 6: case 9: seg(0, 2); break;
            case 7: case 8: seg(3, 2); break;
            case 5:
                if (center > level) { seg(3, 2); seg(0, 1); }
                else { seg(3, 0); seg(1, 2); }
                break;
            case 10:
                if (center > level) { seg(3, 0); seg(1, 2); }
                else { seg(3, 2); seg(0, 1); }
                break;
            default: break;
            }
        }

    // Deterministic traversal order.
    std::vector<long long> ids;
    ids.reserve(adj.size());
    for (const auto& [id, _] : adj) ids.push_back(id);
    std::sort(ids.begin(), ids.end());
    for (auto& [id, nb] : adj) std::sort(nb.begin(), nb.end());

    std::unordered_map<long long, char> used;
    std::vector<std::pair<std::vector<Point2>, bool>> out;
    auto walk = [&](long long start) {
        std::vector<long long> chain{start};
        used[start] = 1;
        long long prev = -1, cur = start;
        bool closed = false;
        for (;;) {
            long long next = -1;
            for (auto nb : adj[cur])
                if (nb != prev && !used[nb]) {
                    next = nb;
                    break;
                }
            if (next < 0) {
                for (auto nb : adj[cur])
                    if (nb == start && nb != prev && chain.size() > 2) closed = true;
                break;
            }
            used[next] = 1;
            chain.push_back(next);
            prev = cur;
            cur = next;
        }
        std::vector<Point2> pts;
        for (auto id : chain) {
            const auto p = points.at(id);
            if (!pts.empty() && std::hypot(p.row - pts.back().row, p.col - pts.back().col) < 1e-9) continue;
            pts.push_back(p);
        }
        out.emplace_back(std::move(pts), closed);
    };
    // Open chains start at endpoints, then remaining closed loops.
    for (auto id : ids)
        if (!used[id] && adj[id].size() == 1) walk(id);
    for (auto id : ids)
        if (!used[id]) walk(id);
    return out;
}

} // namespace detail

/// High-curvature points (above the per-contour 90th percentile) on iso-lines
/// at n_levels equally spaced interior levels.
/// Anchors on levels spaced over an explicit [lo, hi], so that two grids can
/// share contour levels.
inline std::vector<ContourAnchor> contour_anchors(const DemGrid& g, int n_levels, double lo, double hi) {
    if (n_levels < 1) fail("InvalidArgument", "n_levels must be >= 1");
    if (!(hi > lo)) fail("DegenerateRange", "contours need a non-constant elevation range");

    std::vector<ContourAnchor> anchors;
    int contour_id = 0;
    for (int k = 1; k <= n_levels; ++k) {
        const double level = lo + k * (hi - lo) / (n_levels + 1);
        for (auto& [pts, closed] : detail::trace_contours(g, level)) {
            const int id = contour_id++;
            const std::size_t m = pts.size();
            if (closed && m > 1 && std::hypot(pts.front().row - pts.back().row, pts.front().col - pts.back().col) < 1e-9)
                pts.pop_back();
            const std::size_t np = pts.size();
            if (np < 3) continue;
            std::vector<double> curv(np, -1.0);
            for (std::size_t i = 0; i < np; ++i) {
                if (!closed && (i == 0 || i + 1 == np)) continue;
                const auto& a = pts[(i + np - 1) % np];
                const auto& b = pts[i];
                const auto& c = pts[(i + 1) % np];
                const double e1r = b.row - a.row, e1c = b.col - a.col;
                const double e2r = c.row - b.row, e2c = c.col - b.col;
                const double l1 = std::hypot(e1r, e1c), l2 = std::hypot(e2r, e2c);
                if (l1 <= 0 || l2 <= 0) continue;
                const double turn = std::atan2(e1r * e2c - e1c * e2r, e1r * e2r + e1c * e2c);
                curv[i] = std::abs(turn) / (0.5 * (l1 + l2));
            }
            std::vector<double> defined;
            for (double v : curv)
                if (v >= 0) defined.push_back(v);
            if (defined.empty()) continue;
            std::sort(defined.begin(), defined.end());
            const double p90 = defined[static_cast<std::size_t>(0.9 * static_cast<double>(defined.size() - 1))];
            for (std::size_t i = 0; i < np; ++i)
                if (curv[i] > p90 && curv[i] > kMinAnchorCurvature)
                    anchors.push_back({pts[i].row, pts[i].col, level, id, curv[i]});
        }
    }
    return anchors;
}

inline std::vector<ContourAnchor> contour_anchors(const DemGrid& g, int n_levels) {
    if (n_levels < 1) fail("InvalidArgument", "n_levels must be >= 1");
    const auto range = valid_range(g);
    if (!range || range->first == range->second)
        fail("DegenerateRange", "contours need a non-constant elevation range");
    return contour_anchors(g, n_levels, range->first, range->second);
}

} // namespace demreg
