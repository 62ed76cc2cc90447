#pragma once

/**
 * @file register.hpp
 * @brief Similarity-transform estimation, bilinear resampling and the full
 *        DEM-to-DEM registration pipeline.
 *
 * Coordinates are (row, col) in cells. A transform maps candidate
 * coordinates to reference coordinates: p_ref = s R(theta) p_cand + t.
 */

#include "demreg/dem_io.hpp"
#include "demreg/graph_match.hpp"
#include "demreg/knowledge_base.hpp"
#include "demreg/landmarks.hpp"
#include "demreg/metrics.hpp"
#include "demreg/segmentation.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace demreg {

struct Point {
    double row = 0;
    double col = 0;
    friend bool operator==(const Point&, const Point&) = default;
};

inline double distance(Point a, Point b) { return std::hypot(a.row - b.row, a.col - b.col); }

/// Angle wrapped to (-pi, pi].
inline double wrap_angle(double a) {
    a = std::remainder(a, 2 * std::numbers::pi);
    if (a <= -std::numbers::pi) a += 2 * std::numbers::pi;
    return a;
}

struct SimilarityTransform {
    double theta = 0;
    double scale = 1;
    double t_row = 0;
    double t_col = 0;

    static SimilarityTransform identity() { return {}; }
    static SimilarityTransform scaling(double s) { return {0, s, 0, 0}; }
    static SimilarityTransform translation(double tr, double tc) { return {0, 1, tr, tc}; }

    Point apply(Point p) const {
        const double c = std::cos(theta), s = std::sin(theta);
        return {scale * (c * p.row - s * p.col) + t_row, scale * (s * p.row + c * p.col) + t_col};
    }

    SimilarityTransform inverse() const {
        if (!(scale > 0)) fail("DegenerateConfiguration", "transform scale must be positive");
        SimilarityTransform inv;
        inv.theta = wrap_angle(-theta);
        inv.scale = 1.0 / scale;
        const double c = std::cos(-theta), s = std::sin(-theta);
        inv.t_row = -inv.scale * (c * t_row - s * t_col);
        inv.t_col = -inv.scale * (s * t_row + c * t_col);
        return inv;
    }

    /// (*this) after `inner`: p -> this(inner(p)).
    SimilarityTransform compose(const SimilarityTransform& inner) const {
        SimilarityTransform out;
        out.theta = wrap_angle(theta + inner.theta);
        out.scale = scale * inner.scale;
        const Point t = apply({inner.t_row, inner.t_col});
        out.t_row = t.row;
        out.t_col = t.col;
        return out;
    }

    double theta_deg() const { return theta * 180.0 / std::numbers::pi; }
    friend bool operator==(const SimilarityTransform&, const SimilarityTransform&) = default;
};

struct PointPair {
    Point ref;
    Point cand;
};

/// Closed-form least-squares similarity minimising sum |ref - (s R cand + t)|^2.
inline SimilarityTransform estimate_transform(const std::vector<PointPair>& pairs) {
    if (pairs.size() < 3)
        fail("InsufficientPairs", "need at least 3 point pairs, got " + std::to_string(pairs.size()));
    const double n = static_cast<double>(pairs.size());
    Point mr, mc;
    for (const auto& p : pairs) {
        mr.row += p.ref.row;
        mr.col += p.ref.col;
        mc.row += p.cand.row;
        mc.col += p.cand.col;
    }
    mr = {mr.row / n, mr.col / n};
    mc = {mc.row / n, mc.col / n};
    double dot = 0, cross = 0, scc = 0, srr = 0;
    for (const auto& p : pairs) {
        const double ur = p.ref.row - mr.row, uc = p.ref.col - mr.col;
        const double vr = p.cand.row - mc.row, vc = p.cand.col - mc.col;
        dot += vr * ur + vc * uc;
        cross += vr * uc - vc * ur;
        scc += vr * vr + vc * vc;
        srr += ur * ur + uc * uc;
    }
    const double spread = std::max(1.0, std::max(std::abs(mr.row) + std::abs(mr.col), std::abs(mc.row) + std::abs(mc.col)));
    if (scc <= 1e-24 * spread * spread * n || srr <= 1e-24 * spread * spread * n)
        fail("DegenerateConfiguration", "point set collapses to a single location");
    SimilarityTransform t;
    t.theta = std::atan2(cross, dot);
    t.scale = std::hypot(dot, cross) / scc;
    if (!(t.scale > 0)) fail("DegenerateConfiguration", "estimated scale is not positive");
    const Point rc = SimilarityTransform{t.theta, t.scale, 0, 0}.apply(mc);
    t.t_row = mr.row - rc.row;
    t.t_col = mr.col - rc.col;
    return t;
}

inline double rms_residual(const SimilarityTransform& t, const std::vector<PointPair>& pairs) {
    if (pairs.empty()) return 0;
    double s = 0;
    for (const auto& p : pairs) {
        const Point q = t.apply(p.cand);
        s += (q.row - p.ref.row) * (q.row - p.ref.row) + (q.col - p.ref.col) * (q.col - p.ref.col);
    }
    return std::sqrt(s / static_cast<double>(pairs.size()));
}

/// Candidate resampled onto the reference frame by inverse mapping and
/// bilinear interpolation. A sample touching nodata or leaving the grid is
/// nodata; neighbours with zero weight are not consulted.
inline DemGrid resample(const DemGrid& cand, const SimilarityTransform& transform, const DemGrid& ref_frame) {
    const auto inv = transform.inverse();
    DemGrid out(ref_frame.nrows, ref_frame.ncols, 0.0, ref_frame.cellsize);
    out.xll = ref_frame.xll;
    out.yll = ref_frame.yll;
    out.nodata = ref_frame.nodata;
    const double c = std::cos(inv.theta), s = std::sin(inv.theta);
    for (int r = 0; r < out.nrows; ++r)
        for (int col = 0; col < out.ncols; ++col) {
            const double y = inv.scale * (c * r - s * col) + inv.t_row;
            const double x = inv.scale * (s * r + c * col) + inv.t_col;
            double& dst = out.at(r, col);
            dst = out.nodata;
            if (!std::isfinite(y) || !std::isfinite(x)) continue;
            const double fr = std::floor(y), fc = std::floor(x);
            const double wy = y - fr, wx = x - fc;
            const int r0 = static_cast<int>(fr), c0 = static_cast<int>(fc);
            double acc = 0;
            bool ok = true;
            for (int dy = 0; dy < 2 && ok; ++dy) {
                const double w_row = dy ? wy : 1 - wy;
                if (w_row == 0) continue;
                for (int dx = 0; dx < 2; ++dx) {
                    const double w = w_row * (dx ? wx : 1 - wx);
                    if (w == 0) continue;
                    const int rr = r0 + dy, cc = c0 + dx;
                    if (!cand.in_bounds(rr, cc) || !cand.valid(rr, cc)) {
                        ok = false;
                        break;
                    }
                    acc += w * cand.at(rr, cc);
                }
            }
            if (ok) dst = acc;
        }
    return out;
}

/// True exactly where both grids carry valid data.
inline Mask overlap_mask(const DemGrid& ref, const DemGrid& registered) { return valid_mask(ref, registered); }

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

struct RegisterConfig {
    std::optional<Thresholds> thresholds; ///< default: scale-relative defaults per grid
    double smoothing_sigma = 1.0;         ///< preprocessing; 0 disables
    int segmentation_levels = 4;
    MatchParams match{};
    /// Dummy penalty of a second matching pass, in cells; it keeps only
    /// geometrically consistent subsets when the scenes overlap partially.
    /// 0 disables the pass.
    double tight_penalty = 4.0;
    double inlier_tolerance = 2.0; ///< cells
    int contour_levels = 8;
    int bins = kDefaultBins;
    double min_overlap = 0.6;
    bool strict = false;                ///< low-confidence results raise RegistrationFailed
    KnowledgeBase* kb = nullptr;        ///< consulted and updated when set
};

enum class RegistrationMethod { Landmarks, Contours };

struct RegistrationResult {
    SimilarityTransform transform;
    std::optional<LandmarkClass> class_used; ///< empty for the contour fallback
    RegistrationMethod method = RegistrationMethod::Landmarks;
    DemGrid registered;
    Mask overlap;
    double overlap_fraction = 0;
    double rms_residual = 0;
    int inlier_count = 0;
    std::map<LandmarkClass, int> matched_counts;
    MetricsReport metrics;
    bool low_confidence = false;
    std::vector<std::string> notes;
    int detections_run = 0; ///< grids for which landmarks were computed rather than read from the knowledge base
    int matchings_run = 0;  ///< graph matchings computed rather than read from the knowledge base
};

namespace detail {

struct Prepared {
    DemGrid work;
    std::vector<Landmark> landmarks;
    std::map<LandmarkClass, LandmarkGraph> graphs;
    bool insufficient = false;
    bool from_kb = false;
};

inline DemGrid rescale_grid(const DemGrid& g, double factor) {
    // Cell (r, c) of the output lies at (r, c) / factor in the input.
    DemGrid frame(static_cast<int>(std::floor((g.nrows - 1) * factor + 1e-9)) + 1,
                  static_cast<int>(std::floor((g.ncols - 1) * factor + 1e-9)) + 1, 0.0, g.cellsize / factor);
    frame.nodata = g.nodata;
    frame.xll = g.xll;
    frame.yll = g.yll;
    return resample(g, SimilarityTransform::scaling(factor), frame);
}

inline Prepared prepare(const DemGrid& work, const RegisterConfig& cfg, int& detections_run) {
    Prepared p;
    p.work = work;
    const Thresholds th0 = cfg.thresholds.value_or(default_thresholds(work));
    if (cfg.kb) {
        if (auto hit = cfg.kb->get(work)) {
            p.landmarks = hit->landmarks;
            p.graphs = hit->graphs;
            p.insufficient = hit->relaxation_rounds > kMaxRelaxationRounds;
            p.from_kb = true;
            return p;
        }
    }
    ++detections_run;
    const auto hierarchy = p_model_segment(work, std::max(1, cfg.segmentation_levels));
    const auto& segments = hierarchy.levels.back();
    DetectionResult det;
    try {
        det = detect_landmarks(work, th0, &segments);
    } catch (const InsufficientLandmarks& e) {
        det = e.partial();
        p.insufficient = true;
    }
    p.landmarks = det.landmarks;
    for (auto k : kAllClasses) p.graphs[k] = build_graph(p.landmarks, k);
    if (cfg.kb) {
        KbEntry e;
        e.thresholds = det.thresholds;
        e.landmarks = p.landmarks;
        e.graphs = p.graphs;
        // Rounds beyond the maximum mark a partial (insufficient) result.
        e.relaxation_rounds = p.insufficient ? kMaxRelaxationRounds + 1 : det.relaxation_rounds;
        e.segment_count = segments.region_count;
        cfg.kb->put(work, std::move(e));
    }
    return p;
}

struct Consensus {
    SimilarityTransform transform;
    std::vector<PointPair> inliers;
};

/// Mutual nearest neighbours between transformed candidate points and
/// reference points, within `tol`.
inline std::vector<std::pair<int, int>> mutual_nearest(const std::vector<Point>& ref, const std::vector<Point>& cand,
                                                       const SimilarityTransform& t, double tol) {
    std::vector<Point> mapped;
    mapped.reserve(cand.size());
    for (const auto& c : cand) mapped.push_back(t.apply(c));
    std::vector<int> best_c(ref.size(), -1), best_r(cand.size(), -1);
    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<double> dr(ref.size(), inf), dc(cand.size(), inf);
    for (std::size_t i = 0; i < ref.size(); ++i)
        for (std::size_t j = 0; j < cand.size(); ++j) {
            const double d = distance(ref[i], mapped[j]);
            if (d < dr[i]) {
                dr[i] = d;
                best_c[i] = static_cast<int>(j);
            }
            if (d < dc[j]) {
                dc[j] = d;
                best_r[j] = static_cast<int>(i);
            }
        }
    std::vector<std::pair<int, int>> out;
    for (std::size_t i = 0; i < ref.size(); ++i)
        if (best_c[i] >= 0 && best_r[best_c[i]] == static_cast<int>(i) && dr[i] <= tol)
            out.emplace_back(static_cast<int>(i), best_c[i]);
    return out;
}

/// Points of one class from a landmark list.
inline std::vector<Point> class_points(const std::vector<Landmark>& lms, LandmarkClass k) {
    std::vector<Point> pts;
    for (const auto& lm : lms)
        if (lm.cls == k) pts.push_back({lm.row, lm.col});
    return pts;
}

/// Union of mutual-nearest pairs over several classes, then least-squares refit.
inline Consensus guided_refine(const std::vector<Landmark>& ref, const std::vector<Landmark>& cand,
                               const std::vector<LandmarkClass>& classes, SimilarityTransform t, double tol,
                               int iterations) {
    Consensus best{t, {}};
    for (int it = 0; it < iterations; ++it) {
        std::vector<PointPair> pairs;
        for (auto k : classes) {
            const auto rp = class_points(ref, k), cp = class_points(cand, k);
            for (auto [i, j] : mutual_nearest(rp, cp, t, tol)) pairs.push_back({rp[i], cp[j]});
        }
        if (pairs.size() < 3) break;
        t = estimate_transform(pairs);
        best = {t, pairs};
    }
    return best;
}

/// Inlier consensus over a matching: every pair of correspondences proposes a
/// similarity; the one with most inliers (then lowest residual) is refitted.
inline std::optional<Consensus> verify_matching(const LandmarkGraph& ref, const LandmarkGraph& cand,
                                                const Matching& m, double tol) {
    std::vector<PointPair> pairs;
    for (auto [i, j] : m.pairs)
        pairs.push_back({{ref.nodes[i].row, ref.nodes[i].col}, {cand.nodes[j].row, cand.nodes[j].col}});
    if (pairs.size() < 3) return std::nullopt;

    std::vector<char> best_mask;
    std::size_t best_count = 0;
    double best_res = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < pairs.size(); ++a)
        for (std::size_t b = a + 1; b < pairs.size(); ++b) {
            auto s = similarity_from_segments(GraphNode{pairs[a].cand.row, pairs[a].cand.col, 0, false},
                                              GraphNode{pairs[b].cand.row, pairs[b].cand.col, 0, false},
                                              GraphNode{pairs[a].ref.row, pairs[a].ref.col, 0, false},
                                              GraphNode{pairs[b].ref.row, pairs[b].ref.col, 0, false});
            if (!s) continue;
            std::vector<char> mask(pairs.size(), 0);
            std::size_t count = 0;
            double res = 0;
            for (std::size_t k = 0; k < pairs.size(); ++k) {
                const auto [r, c] = s->apply(pairs[k].cand.row, pairs[k].cand.col);
                const double d = std::hypot(r - pairs[k].ref.row, c - pairs[k].ref.col);
                if (d <= tol) {
                    mask[k] = 1;
                    ++count;
                    res += d * d;
                }
            }
            if (count > best_count || (count == best_count && res < best_res)) {
                best_count = count;
                best_res = res;
                best_mask = std::move(mask);
            }
        }
    if (best_count < 3) return std::nullopt;
    std::vector<PointPair> inl;
    for (std::size_t k = 0; k < pairs.size(); ++k)
        if (best_mask[k]) inl.push_back(pairs[k]);
    Consensus c{estimate_transform(inl), inl};
    // One re-selection pass under the refitted transform.
    std::vector<PointPair> again;
    for (const auto& p : pairs)
        if (distance(c.transform.apply(p.cand), p.ref) <= tol) again.push_back(p);
    if (again.size() >= 3) c = {estimate_transform(again), again};
    return c;
}

/// Anchors on shared contour levels, away from the grid border, paired by
/// nearest neighbour within a level after centroid alignment, then one
/// closest-point re-estimation.
inline std::optional<Consensus> contour_fallback(const DemGrid& ref, const DemGrid& cand, int levels,
                                                 double edge_margin = 3) {
    const auto rr = valid_range(ref), rc = valid_range(cand);
    if (!rr || !rc) return std::nullopt;
    const double lo = std::min(rr->first, rc->first), hi = std::max(rr->second, rc->second);
    // Smoothing leaves rounding ripple on flat input; that is not relief.
    if (!(hi - lo > 1e-9 * std::max({1.0, std::abs(lo), std::abs(hi)}))) return std::nullopt;
    auto interior = [edge_margin](const DemGrid& g, std::vector<ContourAnchor> in) {
        std::erase_if(in, [&](const ContourAnchor& a) {
            return a.row < edge_margin || a.col < edge_margin || a.row > g.nrows - 1 - edge_margin ||
                   a.col > g.ncols - 1 - edge_margin;
        });
        return in;
    };
    const auto ar = interior(ref, contour_anchors(ref, levels, lo, hi));
    const auto ac = interior(cand, contour_anchors(cand, levels, lo, hi));
    if (ar.size() < 3 || ac.size() < 3) return std::nullopt;
    Point cr, cc;
    for (const auto& a : ar) {
        cr.row += a.row;
        cr.col += a.col;
    }
    for (const auto& a : ac) {
        cc.row += a.row;
        cc.col += a.col;
    }
    cr = {cr.row / ar.size(), cr.col / ar.size()};
    cc = {cc.row / ac.size(), cc.col / ac.size()};
    auto pair_up = [&](const SimilarityTransform& t) {
        std::vector<PointPair> pairs;
        for (const auto& a : ac) {
            const Point p = t.apply({a.row, a.col});
            double best = std::numeric_limits<double>::infinity();
            const ContourAnchor* nn = nullptr;
            for (const auto& b : ar) {
                if (b.level != a.level) continue;
                const double d = distance(p, {b.row, b.col});
                if (d < best) {
                    best = d;
                    nn = &b;
                }
            }
            if (nn) pairs.push_back({{nn->row, nn->col}, {a.row, a.col}});
        }
        return pairs;
    };
    const auto t0 = SimilarityTransform::translation(cr.row - cc.row, cr.col - cc.col);
    auto pairs = pair_up(t0);
    SimilarityTransform t1;
    try {
        t1 = estimate_transform(pairs);
        pairs = pair_up(t1);
        t1 = estimate_transform(pairs);
    } catch (const Error& e) {
        if (e.code() != "DegenerateConfiguration" && e.code() != "InsufficientPairs") throw;
        return std::nullopt;
    }
    return Consensus{t1, pairs};
}

} // namespace detail

/// Steps: unify resolution, smooth, segment, detect landmarks (or read them
/// from the knowledge base), match per-class graphs, verify and select a
/// class, refine the transform, resample and score.
inline RegistrationResult register_dems(const DemGrid& ref, const DemGrid& cand, const RegisterConfig& cfg = {}) {
    validate(ref);
    validate(cand);
    if (count_valid(ref) == 0 || count_valid(cand) == 0) fail("RegistrationFailed", "input grid has no valid cells");
    RegistrationResult res;

    // Resolution unification: the coarser grid is resampled to the finer cellsize.
    SimilarityTransform ref_to_work, cand_to_work;
    DemGrid ref_work = ref, cand_work = cand;
    if (ref.cellsize != cand.cellsize) {
        if (cand.cellsize > ref.cellsize) {
            const double f = cand.cellsize / ref.cellsize;
            cand_work = detail::rescale_grid(cand, f);
            cand_to_work = SimilarityTransform::scaling(f);
        } else {
            const double f = ref.cellsize / cand.cellsize;
            ref_work = detail::rescale_grid(ref, f);
            ref_to_work = SimilarityTransform::scaling(f);
        }
        res.notes.push_back("resolution unified to cellsize " +
                            detail::format_double(std::min(ref.cellsize, cand.cellsize)));
    }
    if (cfg.smoothing_sigma > 0) {
        ref_work = smooth_gaussian(ref_work, cfg.smoothing_sigma);
        cand_work = smooth_gaussian(cand_work, cfg.smoothing_sigma);
    }

    const auto pr = detail::prepare(ref_work, cfg, res.detections_run);
    const auto pc = detail::prepare(cand_work, cfg, res.detections_run);
    if (pr.insufficient || pc.insufficient) res.notes.push_back("landmark relaxation exhausted; using partial landmarks");

    std::optional<detail::Consensus> chosen;
    std::optional<LandmarkClass> chosen_class;
    {
        std::map<LandmarkClass, Matching> verified;
        std::map<LandmarkClass, detail::Consensus> consensus;
        for (auto k : kAllClasses) {
            const auto& gr = pr.graphs.at(k);
            const auto& gc = pc.graphs.at(k);
            if (gr.real_count() < kMinUsableMatches || gc.real_count() < kMinUsableMatches) continue;
            const int n = gr.size() + gc.size();
            const auto ref_g = pad_dummy(gr, n), cand_g = pad_dummy(gc, n);
            auto match = [&](const MatchParams& params) {
                std::string key;
                if (cfg.kb) {
                    key = matching_key(ref_g, cand_g, params);
                    if (auto hit = cfg.kb->get_matching(key)) return *hit;
                }
                ++res.matchings_run;
                auto out = match_graphs(ref_g, cand_g, params);
                if (cfg.kb) cfg.kb->put_matching(key, out);
                return out;
            };
            const auto m = match(cfg.match);
            res.matched_counts[k] = m.matched_count;
            auto c = detail::verify_matching(ref_g, cand_g, m, cfg.inlier_tolerance);
            if (cfg.tight_penalty > 0 && !cfg.match.dummy_penalty) {
                MatchParams tight = cfg.match;
                tight.dummy_penalty = cfg.tight_penalty;
                const auto mt = match(tight);
                auto ct = detail::verify_matching(ref_g, cand_g, mt, cfg.inlier_tolerance);
                if (ct && (!c || ct->inliers.size() > c->inliers.size())) {
                    c = std::move(ct);
                    res.matched_counts[k] = mt.matched_count;
                }
            }
            if (!c) continue;
            Matching v;
            v.matched_count = static_cast<int>(c->inliers.size());
            for (std::size_t a = 0; a < c->inliers.size(); ++a)
                for (std::size_t b = a + 1; b < c->inliers.size(); ++b)
                    v.distortion += std::abs(distance(c->inliers[a].ref, c->inliers[b].ref) -
                                             distance(c->inliers[a].cand, c->inliers[b].cand));
            verified[k] = v;
            consensus[k] = *c;
        }
        try {
            chosen_class = select_class(verified);
            chosen = consensus.at(*chosen_class);
        } catch (const Error& e) {
            if (e.code() != "NoUsableClass") throw;
        }
    }

    SimilarityTransform work_t;
    if (chosen) {
        std::vector<LandmarkClass> classes{LandmarkClass::Peak, LandmarkClass::Valley};
        if (std::find(classes.begin(), classes.end(), *chosen_class) == classes.end()) classes.push_back(*chosen_class);
        auto refined = detail::guided_refine(pr.landmarks, pc.landmarks, classes, chosen->transform,
                                             cfg.inlier_tolerance, 3);
        if (refined.inliers.size() < chosen->inliers.size()) refined = *chosen;
        work_t = refined.transform;
        res.class_used = chosen_class;
        res.method = RegistrationMethod::Landmarks;
        res.inlier_count = static_cast<int>(refined.inliers.size());
        res.rms_residual = rms_residual(work_t, refined.inliers);
    } else {
        auto fb = detail::contour_fallback(ref_work, cand_work, cfg.contour_levels);
        if (!fb) fail("RegistrationFailed", "no landmark class is usable and the contour fallback is degenerate");
        work_t = fb->transform;
        res.method = RegistrationMethod::Contours;
        res.inlier_count = static_cast<int>(fb->inliers.size());
        res.rms_residual = rms_residual(work_t, fb->inliers);
        res.notes.push_back("contour-anchor fallback");
    }

    // Back to the original frames: cand -> cand_work -> ref_work -> ref.
    res.transform = ref_to_work.inverse().compose(work_t.compose(cand_to_work));
    res.registered = resample(cand, res.transform, ref);
    res.overlap = overlap_mask(ref, res.registered);
    const auto ref_valid = count_valid(ref);
    res.overlap_fraction = static_cast<double>(mask_count(res.overlap)) / static_cast<double>(ref_valid);
    res.metrics = compute_metrics(ref, res.registered, res.overlap, cfg.bins);

    res.low_confidence = res.overlap_fraction < cfg.min_overlap || res.inlier_count < kMinUsableMatches ||
                         res.rms_residual > cfg.inlier_tolerance || res.method == RegistrationMethod::Contours;
    if (res.low_confidence && cfg.strict) {
        std::string why = "low-confidence registration (overlap " + detail::format_double(res.overlap_fraction) +
                          ", inliers " + std::to_string(res.inlier_count) + ")";
        fail("RegistrationFailed", why);
    }
    return res;
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

namespace detail {
inline nlohmann::json number_or_inf(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    if (std::isnan(v)) return nullptr;
    return v;
}
} // namespace detail

inline nlohmann::json to_json(const MetricsReport& m) {
    nlohmann::json j;
    j["cc"] = m.cc ? nlohmann::json(*m.cc) : nlohmann::json(nullptr);
    j["mi"] = m.mi;
    j["kld"] = detail::number_or_inf(m.kld);
    j["nmi"] = m.nmi ? nlohmann::json(*m.nmi) : nlohmann::json(nullptr);
    j["n_cells"] = m.n_cells;
    j["bins"] = m.bins;
    return j;
}

inline nlohmann::json to_json(const SimilarityTransform& t) {
    return {{"theta_deg", t.theta_deg()}, {"scale", t.scale}, {"t_row", t.t_row}, {"t_col", t.t_col}};
}

inline nlohmann::json to_json(const RegistrationResult& r) {
    nlohmann::json counts = nlohmann::json::object();
    for (const auto& [k, n] : r.matched_counts) counts[std::string(to_string(k))] = n;
    return {{"transform", to_json(r.transform)},
            {"class_used", r.class_used ? nlohmann::json(std::string(to_string(*r.class_used)))
                                        : nlohmann::json(nullptr)},
            {"method", r.method == RegistrationMethod::Landmarks ? "landmarks" : "contours"},
            {"overlap_fraction", r.overlap_fraction},
            {"rms_residual", r.rms_residual},
            {"inlier_count", r.inlier_count},
            {"matched_counts", counts},
            {"low_confidence", r.low_confidence},
            {"metrics", to_json(r.metrics)},
            {"notes", r.notes}};
}

} // namespace demreg
