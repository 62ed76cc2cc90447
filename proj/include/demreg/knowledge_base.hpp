#pragma once

/**
 * @file knowledge_base.hpp
 * @brief Landmark knowledge base keyed by a SHA-256 digest of grid content,
 *        persisted as one JSON document.
 *
 * Single-writer contract: concurrent readers of a const KnowledgeBase are
 * safe; mutation must be serialized by the caller.
 */

#include "demreg/dem_io.hpp"
#include "demreg/graph_match.hpp"
#include "demreg/landmarks.hpp"

#include <json.hpp>
#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace demreg {

namespace detail {

template <class T>
void append_le(std::vector<unsigned char>& buf, T v) {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    buf.insert(buf.end(), bytes, bytes + sizeof(T));
}

} // namespace detail

namespace detail {

class Sha256 {
public:
    Sha256() : ctx_(EVP_MD_CTX_new(), &EVP_MD_CTX_free) {
        if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_sha256(), nullptr) != 1)
            fail("DigestFailure", "cannot initialise SHA-256");
    }
    void update(const void* data, std::size_t n) {
        if (EVP_DigestUpdate(ctx_.get(), data, n) != 1) fail("DigestFailure", "SHA-256 update failed");
    }
    std::string hex() {
        unsigned char md[EVP_MAX_MD_SIZE];
        unsigned int len = 0;
        if (EVP_DigestFinal_ex(ctx_.get(), md, &len) != 1) fail("DigestFailure", "SHA-256 finalisation failed");
        static constexpr char digits[] = "0123456789abcdef";
        std::string out;
        for (unsigned int i = 0; i < len; ++i) {
            out.push_back(digits[md[i] >> 4]);
            out.push_back(digits[md[i] & 15]);
        }
        return out;
    }

private:
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx_;
};

} // namespace detail

/// Hex SHA-256 over dims, cellsize, nodata sentinel and every cell value.
inline std::string grid_digest(const DemGrid& g) {
    std::vector<unsigned char> head;
    const char tag[] = "demreg-grid-v1";
    head.insert(head.end(), tag, tag + sizeof tag - 1);
    detail::append_le<std::int32_t>(head, g.nrows);
    detail::append_le<std::int32_t>(head, g.ncols);
    detail::append_le<double>(head, g.cellsize);
    detail::append_le<double>(head, g.nodata);

    detail::Sha256 sha;
    sha.update(head.data(), head.size());
    std::vector<unsigned char> chunk;
    chunk.reserve(8 * 4096);
    for (std::size_t i = 0; i < g.cells.size(); ++i) {
        double v = g.cells[i];
        if (v == 0.0) v = 0.0; // fold -0.0
        detail::append_le<double>(chunk, v);
        if (chunk.size() >= 8 * 4096) {
            sha.update(chunk.data(), chunk.size());
            chunk.clear();
        }
    }
    if (!chunk.empty()) sha.update(chunk.data(), chunk.size());
    return sha.hex();
}

struct KbEntry {
    std::string digest;
    Thresholds thresholds;
    std::vector<Landmark> landmarks;
    std::map<LandmarkClass, LandmarkGraph> graphs;
    int relaxation_rounds = 0;
    std::int32_t segment_count = 0;

    friend bool operator==(const KbEntry&, const KbEntry&) = default;
};

// ---------------------------------------------------------------------------
// JSON mapping
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const Thresholds& th) {
    return {{"t_flat", th.t_flat},
            {"t_peak", th.t_peak},
            {"t_valley", th.t_valley},
            {"t_ripple_relief", th.t_ripple_relief},
            {"min_alternations", th.min_alternations},
            {"cluster_radius", th.cluster_radius}};
}

/// Missing keys keep the values already in `base`.
inline Thresholds thresholds_from_json(const nlohmann::json& j, Thresholds base = {}) {
    auto take = [&](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    take("t_flat", base.t_flat);
    take("t_peak", base.t_peak);
    take("t_valley", base.t_valley);
    take("t_ripple_relief", base.t_ripple_relief);
    take("min_alternations", base.min_alternations);
    take("cluster_radius", base.cluster_radius);
    validate(base);
    return base;
}

inline nlohmann::json to_json(const PyramidSignature& sig) {
    nlohmann::json levels = nlohmann::json::array();
    for (const auto& lv : sig.levels)
        levels.push_back({{"size", lv.size},
                          {"mean", lv.mean},
                          {"relief", lv.relief},
                          {"center_minus_ring", lv.center_minus_ring},
                          {"mean_gradient", lv.mean_gradient}});
    return {{"levels", levels}, {"alternations", sig.alternations}};
}

inline PyramidSignature signature_from_json(const nlohmann::json& j) {
    PyramidSignature sig;
    const auto& levels = j.at("levels");
    if (levels.size() != sig.levels.size()) fail("KnowledgeBaseCorrupt", "signature must have 4 levels");
    for (std::size_t k = 0; k < sig.levels.size(); ++k) {
        const auto& l = levels.at(k);
        sig.levels[k] = {l.at("size").get<int>(), l.at("mean").get<double>(), l.at("relief").get<double>(),
                         l.at("center_minus_ring").get<double>(), l.at("mean_gradient").get<double>()};
    }
    sig.alternations = j.at("alternations").get<int>();
    return sig;
}

inline nlohmann::json to_json(const Landmark& lm) {
    return {{"class", std::string(to_string(lm.cls))},
            {"row", lm.row},
            {"col", lm.col},
            {"prominence", lm.prominence},
            {"support_radius", lm.support_radius},
            {"is_major", lm.is_major},
            {"segment", lm.segment},
            {"signature", to_json(lm.signature)}};
}

inline Landmark landmark_from_json(const nlohmann::json& j) {
    Landmark lm;
    lm.cls = landmark_class_from_string(j.at("class").get<std::string>());
    lm.row = j.at("row").get<double>();
    lm.col = j.at("col").get<double>();
    lm.prominence = j.at("prominence").get<double>();
    lm.support_radius = j.at("support_radius").get<double>();
    lm.is_major = j.at("is_major").get<bool>();
    if (j.contains("segment")) lm.segment = j.at("segment").get<std::int32_t>();
    if (j.contains("signature")) lm.signature = signature_from_json(j.at("signature"));
    return lm;
}

inline nlohmann::json to_json(const LandmarkGraph& g) {
    nlohmann::json nodes = nlohmann::json::array(), edges = nlohmann::json::array();
    for (const auto& n : g.nodes)
        nodes.push_back({{"row", n.row}, {"col", n.col}, {"prominence", n.prominence}, {"is_dummy", n.is_dummy}});
    for (const auto& e : g.edges) edges.push_back({e.i, e.j, e.length});
    return {{"class", std::string(to_string(g.cls))}, {"nodes", nodes}, {"edges", edges}};
}

inline LandmarkGraph graph_from_json(const nlohmann::json& j) {
    LandmarkGraph g;
    g.cls = landmark_class_from_string(j.at("class").get<std::string>());
    for (const auto& n : j.at("nodes"))
        g.nodes.push_back({n.at("row").get<double>(), n.at("col").get<double>(), n.at("prominence").get<double>(),
                           n.at("is_dummy").get<bool>()});
    for (const auto& e : j.at("edges")) {
        GraphEdge edge{e.at(0).get<int>(), e.at(1).get<int>(), e.at(2).get<double>()};
        if (edge.i < 0 || edge.j < 0 || edge.i >= g.size() || edge.j >= g.size() || edge.i == edge.j)
            fail("KnowledgeBaseCorrupt", "graph edge references an invalid node");
        g.edges.push_back(edge);
    }
    return g;
}

inline nlohmann::json to_json(const KbEntry& e) {
    nlohmann::json lms = nlohmann::json::array(), graphs = nlohmann::json::object();
    for (const auto& lm : e.landmarks) lms.push_back(to_json(lm));
    for (const auto& [k, g] : e.graphs) graphs[std::string(to_string(k))] = to_json(g);
    return {{"thresholds", to_json(e.thresholds)},
            {"landmarks", lms},
            {"graphs", graphs},
            {"relaxation_rounds", e.relaxation_rounds},
            {"segment_count", e.segment_count}};
}

inline KbEntry entry_from_json(const std::string& digest, const nlohmann::json& j) {
    KbEntry e;
    e.digest = digest;
    e.thresholds = thresholds_from_json(j.at("thresholds"));
    for (const auto& lm : j.at("landmarks")) e.landmarks.push_back(landmark_from_json(lm));
    for (const auto& [name, g] : j.at("graphs").items()) e.graphs[landmark_class_from_string(name)] = graph_from_json(g);
    e.relaxation_rounds = j.value("relaxation_rounds", 0);
    e.segment_count = j.value("segment_count", 0);
    return e;
}

inline nlohmann::json to_json(const Matching& m) {
    nlohmann::json pairs = nlohmann::json::array();
    for (auto [i, j] : m.pairs) pairs.push_back({i, j});
    return {{"pairs", pairs},
            {"distortion", m.distortion},
            {"matched_count", m.matched_count},
            {"cost", m.cost},
            {"exact", m.exact}};
}

inline Matching matching_from_json(const nlohmann::json& j) {
    Matching m;
    for (const auto& p : j.at("pairs")) m.pairs.emplace_back(p.at(0).get<int>(), p.at(1).get<int>());
    m.distortion = j.at("distortion").get<double>();
    m.matched_count = j.at("matched_count").get<int>();
    m.cost = j.at("cost").get<double>();
    m.exact = j.at("exact").get<bool>();
    if (m.matched_count != static_cast<int>(m.pairs.size())) fail("KnowledgeBaseCorrupt", "matched_count disagrees with pairs");
    return m;
}

/// Digest identifying one match_graphs call: both graphs and the parameters.
inline std::string matching_key(const LandmarkGraph& ref, const LandmarkGraph& cand, const MatchParams& p) {
    const nlohmann::json j = {{"ref", to_json(ref)},
                              {"cand", to_json(cand)},
                              {"dummy_penalty", p.dummy_penalty ? nlohmann::json(*p.dummy_penalty) : nlohmann::json()},
                              {"distortion_tolerance", p.distortion_tolerance},
                              {"node_budget", p.node_budget}};
    const std::string text = "demreg-match-v1" + j.dump();
    detail::Sha256 sha;
    sha.update(text.data(), text.size());
    return sha.hex();
}

// ---------------------------------------------------------------------------

class KnowledgeBase {
public:
    static constexpr int kVersion = 1;

    /// Stores (or replaces) the entry for `grid`; the entry's digest is overwritten.
    void put(const DemGrid& grid, KbEntry entry) {
        entry.digest = grid_digest(grid);
        auto key = entry.digest;
        entries_[key] = std::move(entry);
    }

    std::optional<KbEntry> get(const DemGrid& grid) const { return get_by_digest(grid_digest(grid)); }

    std::optional<KbEntry> get_by_digest(const std::string& digest) const {
        auto it = entries_.find(digest);
        if (it == entries_.end() || it->second.digest != digest) return std::nullopt;
        return it->second;
    }

    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }

    /// Memoized graph matchings, keyed by matching_key().
    void put_matching(const std::string& key, const Matching& m) { matchings_[key] = m; }
    std::optional<Matching> get_matching(const std::string& key) const {
        auto it = matchings_.find(key);
        if (it == matchings_.end()) return std::nullopt;
        return it->second;
    }
    std::size_t matching_count() const { return matchings_.size(); }

    nlohmann::json to_json() const {
        nlohmann::json entries = nlohmann::json::object(), matchings = nlohmann::json::object();
        for (const auto& [d, e] : entries_) entries[d] = demreg::to_json(e);
        for (const auto& [k, m] : matchings_) matchings[k] = demreg::to_json(m);
        return {{"version", kVersion}, {"entries", entries}, {"matchings", matchings}};
    }

    static KnowledgeBase from_json(const nlohmann::json& j) {
        KnowledgeBase kb;
        try {
            if (j.at("version").get<int>() != kVersion) fail("KnowledgeBaseCorrupt", "unsupported version");
            for (const auto& [d, e] : j.at("entries").items()) kb.entries_[d] = entry_from_json(d, e);
            if (j.contains("matchings"))
                for (const auto& [k, m] : j.at("matchings").items()) kb.matchings_[k] = matching_from_json(m);
        } catch (const nlohmann::json::exception& ex) {
            fail("KnowledgeBaseCorrupt", ex.what());
        }
        return kb;
    }

    /// A missing file yields an empty knowledge base.
    static KnowledgeBase load(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) return {};
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& ex) {
            fail("KnowledgeBaseCorrupt", path.string() + ": " + ex.what());
        }
        return from_json(j);
    }

    /// Writes through a temporary file renamed into place.
    void save(const std::filesystem::path& path) const {
        auto tmp = path;
        tmp += ".tmp";
        {
            std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
            if (!out) fail("IoError", "cannot write " + tmp.string());
            out << to_json().dump(1) << '\n';
            if (!out) fail("IoError", "write failed for " + tmp.string());
        }
        std::filesystem::rename(tmp, path);
    }

private:
    std::map<std::string, KbEntry> entries_;
    std::map<std::string, Matching> matchings_;
};

inline KnowledgeBase kb_put(KnowledgeBase kb, const DemGrid& grid, const std::vector<Landmark>& landmarks,
                            const std::map<LandmarkClass, LandmarkGraph>& graphs, const Thresholds& thresholds = {}) {
    KbEntry e;
    e.thresholds = thresholds;
    e.landmarks = landmarks;
    e.graphs = graphs;
    kb.put(grid, std::move(e));
    return kb;
}

inline std::optional<KbEntry> kb_get(const KnowledgeBase& kb, const DemGrid& grid) { return kb.get(grid); }

} // namespace demreg
