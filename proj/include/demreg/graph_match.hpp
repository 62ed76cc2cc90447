#pragma once

/**
 * @file graph_match.hpp
 * @brief Position-attributed landmark graphs and inexact matching with dummy
 *        nodes.
 *
 * Matching cost is a function of pairwise distances only, so it is invariant
 * under rigid motions of either graph.
 */

#include "demreg/error.hpp"
#include "demreg/landmarks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <utility>
#include <vector>

namespace demreg {

struct GraphNode {
    double row = 0;
    double col = 0;
    double prominence = 0;
    bool is_dummy = false;

    friend bool operator==(const GraphNode&, const GraphNode&) = default;
};

struct GraphEdge {
    int i = 0;
    int j = 0;
    double length = 0;

    friend bool operator==(const GraphEdge&, const GraphEdge&) = default;
};

struct LandmarkGraph {
    LandmarkClass cls = LandmarkClass::Peak;
    std::vector<GraphNode> nodes;
    std::vector<GraphEdge> edges;

    int size() const { return static_cast<int>(nodes.size()); }
    int real_count() const {
        return static_cast<int>(std::count_if(nodes.begin(), nodes.end(), [](const auto& n) { return !n.is_dummy; }));
    }
    friend bool operator==(const LandmarkGraph&, const LandmarkGraph&) = default;
};

inline constexpr int kMaxGraphNodes = 32;

inline double node_distance(const GraphNode& a, const GraphNode& b) { return std::hypot(a.row - b.row, a.col - b.col); }

/// Complete graph over the class's landmarks: majors first, then by
/// descending prominence, capped at kMaxGraphNodes.
inline LandmarkGraph build_graph(const std::vector<Landmark>& landmarks, LandmarkClass cls) {
    std::vector<Landmark> sel;
    for (const auto& lm : landmarks)
        if (lm.cls == cls) sel.push_back(lm);
    std::stable_sort(sel.begin(), sel.end(), [](const Landmark& a, const Landmark& b) {
        if (a.is_major != b.is_major) return a.is_major;
        if (a.prominence != b.prominence) return a.prominence > b.prominence;
        if (a.row != b.row) return a.row < b.row;
        return a.col < b.col;
    });
    if (sel.size() > static_cast<std::size_t>(kMaxGraphNodes)) sel.resize(kMaxGraphNodes);

    LandmarkGraph g;
    g.cls = cls;
    for (const auto& lm : sel) g.nodes.push_back({lm.row, lm.col, lm.prominence, false});
    for (int i = 0; i < g.size(); ++i)
        for (int j = i + 1; j < g.size(); ++j) g.edges.push_back({i, j, node_distance(g.nodes[i], g.nodes[j])});
    return g;
}

inline LandmarkGraph pad_dummy(LandmarkGraph g, int target_size) {
    if (target_size < g.size())
        fail("PreconditionViolation", "pad target " + std::to_string(target_size) + " is below graph size " +
                                          std::to_string(g.size()));
    while (g.size() < target_size) g.nodes.push_back({0, 0, 0, true});
    return g;
}

struct Matching {
    std::vector<std::pair<int, int>> pairs; ///< (ref node, cand node), sorted by ref index
    double distortion = 0;
    int matched_count = 0;
    double cost = 0;
    bool exact = true; ///< false when the search budget ran out before optimality was proven

    double mean_distortion() const { return matched_count > 0 ? distortion / matched_count : 0.0; }
    friend bool operator==(const Matching&, const Matching&) = default;
};

struct MatchParams {
    std::optional<double> dummy_penalty; ///< default: 3 x median reference edge length
    double distortion_tolerance = 1.0;   ///< cells; geometric seeding inlier scale
    std::size_t node_budget = 200'000;  ///< branch-and-bound expansions for large graphs
};

/// Nodes per side up to which the search is a plain exhaustive enumeration.
inline constexpr int kExhaustiveLimit = 6;

inline double default_dummy_penalty(const LandmarkGraph& ref) {
    std::vector<double> lengths;
    for (const auto& e : ref.edges)
        if (!ref.nodes[e.i].is_dummy && !ref.nodes[e.j].is_dummy) lengths.push_back(e.length);
    if (lengths.empty()) return 1.0;
    std::sort(lengths.begin(), lengths.end());
    const std::size_t n = lengths.size();
    const double median = n % 2 ? lengths[n / 2] : 0.5 * (lengths[n / 2 - 1] + lengths[n / 2]);
    return 3.0 * median;
}

/// Distortion of a set of real pairs sorted by ref index: sum over a < b of
/// |len_ref - len_cand|, accumulated with a as the outer index.
inline double matching_distortion(const LandmarkGraph& ref, const LandmarkGraph& cand,
                                  const std::vector<std::pair<int, int>>& pairs) {
    double d = 0;
    for (std::size_t a = 0; a < pairs.size(); ++a)
        for (std::size_t b = a + 1; b < pairs.size(); ++b) {
            const double lr = node_distance(ref.nodes[pairs[a].first], ref.nodes[pairs[b].first]);
            const double lc = node_distance(cand.nodes[pairs[a].second], cand.nodes[pairs[b].second]);
            d += std::abs(lr - lc);
        }
    return d;
}

/// Real nodes left unmatched on either side end up paired with dummies.
inline double matching_cost(const LandmarkGraph& ref, const LandmarkGraph& cand,
                            const std::vector<std::pair<int, int>>& pairs, double penalty) {
    const auto m = static_cast<int>(pairs.size());
    const int unmatched = (ref.real_count() - m) + (cand.real_count() - m);
    return matching_distortion(ref, cand, pairs) + penalty * unmatched;
}

namespace detail {

struct Similarity2 {
    double a = 1, b = 0, tr = 0, tc = 0; // p' = [[a, -b], [b, a]] p + t
    std::pair<double, double> apply(double r, double c) const { return {a * r - b * c + tr, b * r + a * c + tc}; }
};

/// Similarity taking segment (p0, p1) onto (q0, q1).
inline std::optional<Similarity2> similarity_from_segments(const GraphNode& p0, const GraphNode& p1,
                                                           const GraphNode& q0, const GraphNode& q1) {
    const double pr = p1.row - p0.row, pc = p1.col - p0.col;
    const double qr = q1.row - q0.row, qc = q1.col - q0.col;
    const double den = pr * pr + pc * pc;
    if (den <= 0) return std::nullopt;
    Similarity2 s;
    // complex ratio q / p
    s.a = (qr * pr + qc * pc) / den;
    s.b = (qc * pr - qr * pc) / den;
    s.tr = q0.row - (s.a * p0.row - s.b * p0.col);
    s.tc = q0.col - (s.b * p0.row + s.a * p0.col);
    return s;
}

class Matcher {
public:
    Matcher(const LandmarkGraph& ref, const LandmarkGraph& cand, double penalty, std::size_t budget)
        : ref_(ref), cand_(cand), penalty_(penalty), budget_(budget) {
        for (int i = 0; i < ref.size(); ++i)
            if (!ref.nodes[i].is_dummy) rreal_.push_back(i);
        for (int j = 0; j < cand.size(); ++j)
            if (!cand.nodes[j].is_dummy) creal_.push_back(j);
        r_ = static_cast<int>(rreal_.size());
        c_ = static_cast<int>(creal_.size());
        min_matched_ = std::max(0, r_ + c_ - ref.size());
        dref_.assign(static_cast<std::size_t>(r_ * r_), 0);
        dcand_.assign(static_cast<std::size_t>(c_ * c_), 0);
        for (int a = 0; a < r_; ++a)
            for (int b = 0; b < r_; ++b) dref_[a * r_ + b] = node_distance(ref.nodes[rreal_[a]], ref.nodes[rreal_[b]]);
        for (int a = 0; a < c_; ++a)
            for (int b = 0; b < c_; ++b)
                dcand_[a * c_ + b] = node_distance(cand.nodes[creal_[a]], cand.nodes[creal_[b]]);
        assign_.assign(static_cast<std::size_t>(r_), -1);
        used_.assign(static_cast<std::size_t>(c_), 0);
        inc_.assign(static_cast<std::size_t>(r_ + 1) * r_ * c_, 0.0);
    }

    int min_matched() const { return min_matched_; }

    /// Offers a complete assignment (ref real -> cand real or -1) as incumbent.
    void offer(const std::vector<int>& assign) {
        int m = 0;
        for (int v : assign) m += v >= 0;
        if (m < min_matched_) return;
        const double cost = canonical_cost(assign);
        if (cost < best_cost_) {
            best_cost_ = cost;
            best_ = assign;
        }
    }

    /// Depth-first branch and bound. Returns true when the search space was exhausted.
    bool search() {
        expansions_ = 0;
        aborted_ = false;
        dfs(0, 0, 0.0);
        return !aborted_;
    }

    Matching result() const {
        Matching out;
        if (best_.empty() && r_ > 0) return out;
        for (int a = 0; a < r_; ++a)
            if (best_[a] >= 0) out.pairs.emplace_back(rreal_[a], creal_[best_[a]]);
        out.matched_count = static_cast<int>(out.pairs.size());
        out.distortion = matching_distortion(ref_, cand_, out.pairs);
        out.cost = best_cost_;
        return out;
    }

    bool has_incumbent() const { return best_cost_ < std::numeric_limits<double>::infinity(); }

    int r() const { return r_; }
    int c() const { return c_; }
    const std::vector<int>& rreal() const { return rreal_; }
    const std::vector<int>& creal() const { return creal_; }

private:
    double canonical_cost(const std::vector<int>& assign) const {
        std::vector<std::pair<int, int>> pairs;
        for (int a = 0; a < r_; ++a)
            if (assign[a] >= 0) pairs.emplace_back(rreal_[a], creal_[assign[a]]);
        return matching_cost(ref_, cand_, pairs, penalty_);
    }

    // inc_[depth] holds, for every later ref node k and cand node j, the
    // distortion k -> j would add against the assignments made so far.
    double* inc_row(int depth, int k) { return &inc_[(static_cast<std::size_t>(depth) * r_ + k) * c_]; }

    void dfs(int depth, int matched, double partial) {
        if (aborted_) return;
        if (++expansions_ > budget_) {
            aborted_ = true;
            return;
        }
        const int remaining = r_ - depth;
        if (matched + remaining < min_matched_) return;
        // Each remaining ref node costs at least its cheapest extension or a dummy.
        double future = 0;
        for (int k = depth; k < r_; ++k) {
            const double* row = inc_row(depth, k);
            double best = penalty_;
            for (int j = 0; j < c_; ++j)
                if (!used_[j] && row[j] < best) best = row[j];
            future += best;
        }
        const int cand_unmatched_lb = std::max(0, c_ - matched - remaining);
        const double lb = partial + future + penalty_ * (depth - matched + cand_unmatched_lb);
        if (lb > best_cost_ + slack()) return;
        if (depth == r_) {
            offer(assign_);
            return;
        }

        // Children ordered by incremental distortion; the dummy branch last.
        std::vector<std::pair<double, int>> options;
        options.reserve(static_cast<std::size_t>(c_));
        const double* own = inc_row(depth, depth);
        for (int j = 0; j < c_; ++j)
            if (!used_[j]) options.emplace_back(own[j], j);
        std::stable_sort(options.begin(), options.end());
        const int cand_unmatched_after = std::max(0, c_ - (matched + 1) - (remaining - 1));
        for (auto [inc, j] : options) {
            // Sorted ascending: once one child is bounded out, all later ones are.
            if (partial + inc + penalty_ * (depth - matched + cand_unmatched_after) > best_cost_ + slack()) break;
            for (int k = depth + 1; k < r_; ++k) {
                const double* src = inc_row(depth, k);
                double* dst = inc_row(depth + 1, k);
                const double dr = dref_[depth * r_ + k];
                const double* dc = &dcand_[static_cast<std::size_t>(j) * c_];
                for (int jj = 0; jj < c_; ++jj) dst[jj] = src[jj] + std::abs(dr - dc[jj]);
            }
            assign_[depth] = j;
            used_[j] = 1;
            dfs(depth + 1, matched + 1, partial + inc);
            used_[j] = 0;
            assign_[depth] = -1;
            if (aborted_) return;
        }
        for (int k = depth + 1; k < r_; ++k) std::copy_n(inc_row(depth, k), c_, inc_row(depth + 1, k));
        dfs(depth + 1, matched, partial);
    }

    double slack() const { return 1e-9 * (1.0 + std::abs(best_cost_ < 1e300 ? best_cost_ : 0.0)); }

    const LandmarkGraph& ref_;
    const LandmarkGraph& cand_;
    double penalty_;
    std::size_t budget_;
    std::vector<int> rreal_, creal_;
    int r_ = 0, c_ = 0, min_matched_ = 0;
    std::vector<double> dref_, dcand_;
    std::vector<int> assign_;
    std::vector<char> used_;
    std::vector<double> inc_;
    std::vector<int> best_;
    double best_cost_ = std::numeric_limits<double>::infinity();
    std::size_t expansions_ = 0;
    bool aborted_ = false;
};

/// Incumbents from similarity hypotheses: a pair of top reference nodes mapped
/// onto every candidate pair of compatible length, scored by mutual-nearest
/// inliers.
inline void geometric_seed(Matcher& m, const LandmarkGraph& ref, const LandmarkGraph& cand, double tolerance) {
    const auto& rr = m.rreal();
    const auto& cr = m.creal();
    const int top = std::min<int>(m.r(), 6);
    for (int a = 0; a < top; ++a)
        for (int b = a + 1; b < top; ++b) {
            const auto& p0 = ref.nodes[rr[a]];
            const auto& p1 = ref.nodes[rr[b]];
            const double len = node_distance(p0, p1);
            for (int x = 0; x < m.c(); ++x)
                for (int y = 0; y < m.c(); ++y) {
                    if (x == y) continue;
                    const auto& q0 = cand.nodes[cr[x]];
                    const auto& q1 = cand.nodes[cr[y]];
                    if (std::abs(node_distance(q0, q1) - len) > tolerance + 0.02 * len) continue;
                    // Map candidate into the reference frame.
                    auto s = similarity_from_segments(q0, q1, p0, p1);
                    if (!s) continue;
                    std::vector<std::pair<double, double>> mapped;
                    for (int j = 0; j < m.c(); ++j) mapped.push_back(s->apply(cand.nodes[cr[j]].row, cand.nodes[cr[j]].col));
                    const double radius = 3.0 * tolerance;
                    std::vector<int> nn_ref(static_cast<std::size_t>(m.r()), -1), nn_cand(static_cast<std::size_t>(m.c()), -1);
                    std::vector<double> dn_ref(static_cast<std::size_t>(m.r()), std::numeric_limits<double>::infinity());
                    std::vector<double> dn_cand(static_cast<std::size_t>(m.c()), std::numeric_limits<double>::infinity());
                    for (int i = 0; i < m.r(); ++i)
                        for (int j = 0; j < m.c(); ++j) {
                            const double d = std::hypot(ref.nodes[rr[i]].row - mapped[j].first,
                                                        ref.nodes[rr[i]].col - mapped[j].second);
                            if (d < dn_ref[i]) {
                                dn_ref[i] = d;
                                nn_ref[i] = j;
                            }
                            if (d < dn_cand[j]) {
                                dn_cand[j] = d;
                                nn_cand[j] = i;
                            }
                        }
                    std::vector<int> assign(static_cast<std::size_t>(m.r()), -1);
                    for (int i = 0; i < m.r(); ++i)
                        if (nn_ref[i] >= 0 && nn_cand[nn_ref[i]] == i && dn_ref[i] <= radius) assign[i] = nn_ref[i];
                    m.offer(assign);
                }
        }
}

} // namespace detail

/// Minimum-cost inexact matching between two equally padded graphs.
inline Matching match_graphs(const LandmarkGraph& ref, const LandmarkGraph& cand, const MatchParams& params = {}) {
    if (ref.cls != cand.cls)
        fail("ClassMismatch", std::string("cannot match ") + std::string(to_string(ref.cls)) + " against " +
                                  std::string(to_string(cand.cls)));
    if (ref.size() != cand.size())
        fail("SizeMismatch", "graphs must be padded to equal size (" + std::to_string(ref.size()) + " vs " +
                                 std::to_string(cand.size()) + ")");
    const double penalty = params.dummy_penalty.value_or(default_dummy_penalty(ref));
    if (!(penalty >= 0)) fail("InvalidArgument", "dummy_penalty must be >= 0");

    const bool exhaustive = ref.real_count() <= kExhaustiveLimit && cand.real_count() <= kExhaustiveLimit;
    if (exhaustive) {
        detail::Matcher full(ref, cand, penalty, std::numeric_limits<std::size_t>::max());
        full.search();
        return full.result();
    }
    detail::Matcher m(ref, cand, penalty, params.node_budget);
    if (m.min_matched() == 0) m.offer(std::vector<int>(static_cast<std::size_t>(m.r()), -1));
    detail::geometric_seed(m, ref, cand, std::max(params.distortion_tolerance, 1e-6));
    const bool complete = m.search();
    Matching out = m.result();
    out.exact = complete;
    return out;
}

inline constexpr int kMinUsableMatches = 3;

/// Class with the most matched pairs; ties by lower mean distortion, then enum order.
inline LandmarkClass select_class(const std::map<LandmarkClass, Matching>& per_class) {
    std::optional<LandmarkClass> best;
    for (const auto& [k, m] : per_class) {
        if (m.matched_count < kMinUsableMatches) continue;
        if (!best) {
            best = k;
            continue;
        }
        const auto& b = per_class.at(*best);
        if (m.matched_count > b.matched_count ||
            (m.matched_count == b.matched_count && m.mean_distortion() < b.mean_distortion()))
            best = k;
    }
    if (!best) fail("NoUsableClass", "no landmark class has 3 or more matched pairs");
    return *best;
}

} // namespace demreg
