#pragma once

/**
 * @file cli.hpp
 * @brief The `demreg` command line: argument grammar, file plumbing and
 *        exit codes (0 success, 1 domain error, 2 usage error).
 */

#include "demreg/evaluation.hpp"
#include "demreg/fractal_codec.hpp"
#include "demreg/knowledge_base.hpp"
#include "demreg/segmentation.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

namespace demreg::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitDomain = 1;
inline constexpr int kExitUsage = 2;

namespace detail {

namespace fs = std::filesystem;

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("IoError", "cannot read " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline nlohmann::json read_json(const std::string& path) {
    try {
        return nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        fail("InvalidJson", path + ": " + e.what());
    }
}

inline DemGrid read_grid(const std::string& path) { return parse_ascii_grid(read_file(path)); }

/// Writes next to the target and renames, so a failed run leaves no partial file.
inline void write_atomic(const std::string& path, const std::string& data) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) fail("IoError", "cannot write " + path);
        out.write(data.data(), static_cast<std::streamsize>(data.size()));
        if (!out) {
            out.close();
            fs::remove(tmp);
            fail("IoError", "write failed for " + path);
        }
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp);
        fail("IoError", "cannot rename into " + path + ": " + ec.message());
    }
}

/// Outputs are staged and committed together once every computation succeeded.
struct Outputs {
    std::vector<std::pair<std::string, std::string>> files;
    void add(std::string path, std::string data) { files.emplace_back(std::move(path), std::move(data)); }
    void commit() const {
        for (const auto& [p, d] : files) write_atomic(p, d);
    }
};

inline std::string one_line(std::string s) {
    std::replace(s.begin(), s.end(), '\n', ' ');
    return s;
}

template <class T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
    return j.contains(key) ? j.at(key).get<T>() : fallback;
}

inline Feature feature_from_json(const nlohmann::json& f) {
    const auto type = f.at("type").get<std::string>();
    if (type == "peak" || type == "pit") {
        const double row = f.at("row").get<double>(), col = f.at("col").get<double>();
        const double amp = f.at("amplitude").get<double>(), sigma = f.at("sigma").get<double>();
        if (type == "peak") return GaussianPeak{row, col, amp, sigma};
        return GaussianPit{row, col, amp, sigma};
    }
    if (type == "plane") return Plane{get_or(f, "grad_row", 0.0), get_or(f, "grad_col", 0.0)};
    if (type == "ripple")
        return Ripple{get_or(f, "k_row", 0.0), get_or(f, "k_col", 0.0), f.at("amplitude").get<double>(),
                      get_or(f, "phase", 0.0)};
    fail("InvalidSpec", "unknown feature type '" + type + "'");
}

/// Either explicit features or a seeded random scene:
/// {"nrows", "ncols", "base", "cellsize", "seed", "jitter", "features": [...]} or
/// {"scene": {"seed", "rows", "cols"}}.
inline SynthSpec synth_spec_from_json(const nlohmann::json& j) {
    try {
        if (j.contains("scene")) {
            const auto& s = j.at("scene");
            SceneOptions o;
            o.rows = get_or(s, "rows", o.rows);
            o.cols = get_or(s, "cols", o.cols);
            o.base = get_or(s, "base", o.base);
            auto spec = random_scene(s.at("seed").get<std::uint64_t>(), o);
            spec.cellsize = get_or(j, "cellsize", spec.cellsize);
            return spec;
        }
        SynthSpec spec;
        spec.nrows = j.at("nrows").get<int>();
        spec.ncols = j.at("ncols").get<int>();
        spec.base = get_or(j, "base", spec.base);
        spec.cellsize = get_or(j, "cellsize", spec.cellsize);
        spec.seed = get_or(j, "seed", spec.seed);
        spec.jitter = get_or(j, "jitter", spec.jitter);
        if (j.contains("features"))
            for (const auto& f : j.at("features")) spec.features.push_back(feature_from_json(f));
        return spec;
    } catch (const nlohmann::json::exception& e) {
        fail("InvalidSpec", e.what());
    }
}

inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
    std::string out = sweep_csv_header() + "\n";
    for (const auto& r : rows) out += to_csv(r) + "\n";
    return out;
}

inline DemGrid labels_as_grid(const SegmentLabels& l, const DemGrid& like) {
    DemGrid g = like;
    for (std::size_t i = 0; i < g.cells.size(); ++i)
        g.cells[i] = l.labels[i] == kBackgroundLabel ? g.nodata : static_cast<double>(l.labels[i]);
    return g;
}

/// Runs the batteries described by a suite file:
/// {"bins": N, "overlap_sweeps": [{"id", "scene_seed", "n", "levels"}],
///  "noise": [{"id", "scene_seed", "shift_seed", "angle_deg", "overlap", "half_range", "seed"}]}.
inline std::vector<SweepRow> run_suite(const nlohmann::json& suite, std::uint64_t default_seed) {
    std::vector<SweepRow> rows;
    try {
        RegisterConfig cfg;
        cfg.bins = get_or(suite, "bins", cfg.bins);
        if (suite.contains("overlap_sweeps"))
            for (const auto& s : suite.at("overlap_sweeps")) {
                const int n = get_or(s, "n", 128);
                const auto world = random_scene(s.at("scene_seed").get<std::uint64_t>(), {.rows = n, .cols = 2 * n});
                const auto levels = get_or(s, "levels", std::vector<double>{50, 70, 80, 90});
                const auto part = overlap_sweep(world, n, levels, s.at("id").get<std::string>(), cfg);
                rows.insert(rows.end(), part.begin(), part.end());
            }
        if (suite.contains("noise"))
            for (const auto& s : suite.at("noise")) {
                const auto id = s.at("id").get<std::string>();
                const double overlap = get_or(s, "overlap", 0.8);
                const auto pair = transform_case(s.at("scene_seed").get<std::uint64_t>(), get_or(s, "shift_seed", 0ull),
                                                 get_or(s, "angle_deg", 15.0), overlap);
                SweepRow clean, noisy;
                clean.set_id = id + "/clean";
                noisy.set_id = id + "/noisy";
                clean.overlap_pct = noisy.overlap_pct = std::round(overlap * 100);
                try {
                    const auto r = robustness_eval(pair.ref, pair.cand, get_or(s, "half_range", 10.0),
                                                   get_or(s, "seed", default_seed), cfg);
                    clean.cc = r.cc_clean;
                    clean.mi = r.mi_clean;
                    clean.kld = r.kld_clean;
                    clean.overlap_fraction = r.overlap_clean;
                    noisy.cc = r.cc_noisy;
                    noisy.mi = r.mi_noisy;
                    noisy.kld = r.kld_noisy;
                    noisy.overlap_fraction = r.overlap_noisy;
                    noisy.low_confidence = r.noisy_low_confidence;
                } catch (const Error& e) {
                    if (e.code() != "RegistrationFailed") throw;
                    clean.failed = noisy.failed = true;
                }
                rows.push_back(clean);
                rows.push_back(noisy);
            }
    } catch (const nlohmann::json::exception& e) {
        fail("InvalidSpec", e.what());
    }
    return rows;
}

inline CLI::Validator non_empty() {
    return CLI::Validator([](std::string& s) { return s.empty() ? std::string("path must be non-empty") : std::string(); },
                          "PATH");
}

} // namespace detail

/// Parses `args` (without the program name) and runs one subcommand.
inline int run(std::vector<std::string> args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"DEM registration, metrics and fractal coding", "demreg"};
    app.require_subcommand(1, 1);
    const auto path = detail::non_empty();

    std::string a, b, output, report, kb_path, thresholds_path, spec_path, suite_path, csv_path, set_id = "metrics";
    int bins = kDefaultBins, levels = 4, level = -1, max_iterations = 30;
    bool strict = false, gradient = false;
    double noise = 0, epsilon = 1e-6;
    std::uint64_t seed = 0;
    FractalParams fp;
    int search_radius = -1;

    auto* reg = app.add_subcommand("register", "register <cand> onto <ref> and write the resampled candidate");
    reg->add_option("ref", a, "reference DEM (ESRI ASCII)")->required()->check(path);
    reg->add_option("cand", b, "candidate DEM (ESRI ASCII)")->required()->check(path);
    reg->add_option("-o,--output", output, "registered DEM")->required()->check(path);
    reg->add_option("--report", report, "JSON report")->check(path);
    reg->add_option("--kb", kb_path, "knowledge-base file, read and updated")->check(path);
    reg->add_option("--thresholds", thresholds_path, "JSON threshold overrides")->check(path);
    reg->add_option("--bins", bins, "histogram bins")->check(CLI::PositiveNumber);
    reg->add_flag("--strict", strict, "fail instead of flagging low confidence");

    auto* lm = app.add_subcommand("landmarks", "detect and classify landmarks");
    lm->add_option("dem", a, "DEM (ESRI ASCII)")->required()->check(path);
    lm->add_option("--thresholds", thresholds_path, "JSON threshold overrides")->check(path);
    lm->add_option("-o,--output", output, "landmark JSON")->required()->check(path);

    auto* met = app.add_subcommand("metrics", "CC, MI and KLD between two aligned DEMs");
    met->add_option("a", a, "first DEM")->required()->check(path);
    met->add_option("b", b, "second DEM")->required()->check(path);
    met->add_option("--bins", bins, "histogram bins")->check(CLI::PositiveNumber);
    met->add_option("--csv", csv_path, "CSV output; standard output when absent")->check(path);
    met->add_option("--set-id", set_id, "set_id column value");

    auto* comp = app.add_subcommand("compress", "fractal-code a DEM");
    comp->add_option("dem", a, "DEM (ESRI ASCII)")->required()->check(path);
    comp->add_option("-o,--output", output, ".fdem output")->required()->check(path);
    comp->add_option("--range-size", fp.range_size, "range block edge")->check(CLI::PositiveNumber);
    comp->add_option("--scale-bits", fp.scale_bits, "contrast bits")->check(CLI::Range(2, 8));
    comp->add_option("--offset-bits", fp.offset_bits, "offset bits")->check(CLI::Range(1, 16));
    comp->add_option("--search-radius", search_radius, "domain search radius in cells; whole pool when absent")
        ->check(CLI::NonNegativeNumber);

    auto* dec = app.add_subcommand("decompress", "decode a .fdem file");
    dec->add_option("code", a, ".fdem input")->required()->check(path);
    dec->add_option("-o,--output", output, "DEM output (ESRI ASCII)")->required()->check(path);
    dec->add_option("--max-iterations", max_iterations, "iteration cap")->check(CLI::PositiveNumber);
    dec->add_option("--epsilon", epsilon, "convergence threshold")->check(CLI::PositiveNumber);

    auto* syn = app.add_subcommand("synth", "generate a synthetic DEM from a JSON spec");
    syn->add_option("--spec", spec_path, "spec JSON")->required()->check(path);
    syn->add_option("-o,--output", output, "DEM output (ESRI ASCII)")->required()->check(path);
    syn->add_option("--noise", noise, "truncated-Gaussian noise half range")->check(CLI::NonNegativeNumber);
    syn->add_option("--seed", seed, "noise seed");

    auto* ev = app.add_subcommand("eval", "run overlap-sweep and noise batteries");
    ev->add_option("--suite", suite_path, "suite JSON")->required()->check(path);
    ev->add_option("--csv", csv_path, "CSV output")->required()->check(path);
    ev->add_option("--seed", seed, "noise seed for entries without one");

    auto* seg = app.add_subcommand("segment", "watershed hierarchy; writes one level as an integer grid");
    seg->add_option("dem", a, "DEM (ESRI ASCII)")->required()->check(path);
    seg->add_option("-o,--output", output, "label grid (ESRI ASCII)")->required()->check(path);
    seg->add_option("--levels", levels, "hierarchy depth")->check(CLI::PositiveNumber);
    seg->add_option("--level", level, "level to export; the coarsest when absent")->check(CLI::NonNegativeNumber);
    seg->add_flag("--gradient", gradient, "flood the gradient magnitude instead of elevation");

    std::reverse(args.begin(), args.end());
    try {
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        detail::Outputs files;
        if (reg->parsed()) {
            const auto ref = detail::read_grid(a), cand = detail::read_grid(b);
            RegisterConfig cfg;
            cfg.bins = bins;
            cfg.strict = strict;
            if (!thresholds_path.empty())
                cfg.thresholds = thresholds_from_json(detail::read_json(thresholds_path), default_thresholds(ref));
            KnowledgeBase kb;
            if (!kb_path.empty()) {
                kb = KnowledgeBase::load(kb_path);
                cfg.kb = &kb;
            }
            const auto res = register_dems(ref, cand, cfg);
            files.add(output, write_ascii_grid(res.registered));
            if (!report.empty()) files.add(report, to_json(res).dump(2) + "\n");
            files.commit();
            if (!kb_path.empty()) kb.save(kb_path);
            out << "theta_deg " << demreg::detail::format_double(res.transform.theta_deg()) << " scale "
                << demreg::detail::format_double(res.transform.scale) << " t " << demreg::detail::format_double(res.transform.t_row)
                << " " << demreg::detail::format_double(res.transform.t_col) << (res.low_confidence ? " low_confidence" : "")
                << "\n";
        } else if (lm->parsed()) {
            const auto g = detail::read_grid(a);
            auto th = default_thresholds(g);
            if (!thresholds_path.empty()) th = thresholds_from_json(detail::read_json(thresholds_path), th);
            const auto det = detect_landmarks(g, th);
            nlohmann::json j = {{"thresholds", to_json(det.thresholds)},
                                {"relaxation_rounds", det.relaxation_rounds},
                                {"landmarks", nlohmann::json::array()}};
            for (const auto& l : det.landmarks) j["landmarks"].push_back(to_json(l));
            files.add(output, j.dump(2) + "\n");
            files.commit();
            out << det.landmarks.size() << " landmarks\n";
        } else if (met->parsed()) {
            const auto ga = detail::read_grid(a), gb = detail::read_grid(b);
            const auto mask = valid_mask(ga, gb);
            const auto rep = compute_metrics(ga, gb, mask, bins);
            SweepRow row;
            row.set_id = set_id;
            row.overlap_pct = 100.0 * static_cast<double>(rep.n_cells) / static_cast<double>(ga.size());
            row.cc = rep.cc;
            row.mi = rep.mi;
            row.kld = rep.kld;
            const auto text = detail::sweep_csv({row});
            if (csv_path.empty()) out << text;
            else {
                files.add(csv_path, text);
                files.commit();
            }
        } else if (comp->parsed()) {
            if (search_radius >= 0) fp.search_radius = search_radius;
            FractalCode code;
            const auto rep = compress_and_report(detail::read_grid(a), fp, &code);
            const auto bytes = serialize(code);
            files.add(output, std::string(bytes.begin(), bytes.end()));
            files.commit();
            out << "ratio " << demreg::detail::format_double(rep.compression_ratio) << " psnr_db "
                << demreg::detail::format_double(rep.psnr_db) << " iterations " << rep.decode_iterations << "\n";
        } else if (dec->parsed()) {
            const auto raw = detail::read_file(a);
            const auto code = deserialize(std::vector<std::uint8_t>(raw.begin(), raw.end()));
            files.add(output, write_ascii_grid(decode(code, max_iterations, epsilon)));
            files.commit();
        } else if (syn->parsed()) {
            auto g = generate_synthetic(detail::synth_spec_from_json(detail::read_json(spec_path)));
            if (noise > 0) g = add_noise(g, noise, seed);
            files.add(output, write_ascii_grid(g));
            files.commit();
        } else if (ev->parsed()) {
            const auto rows = detail::run_suite(detail::read_json(suite_path), seed);
            files.add(csv_path, detail::sweep_csv(rows));
            files.commit();
            out << rows.size() << " rows\n";
        } else if (seg->parsed()) {
            const auto g = detail::read_grid(a);
            const auto h = p_model_segment(g, levels, gradient ? FloodSurface::GradientMagnitude : FloodSurface::Elevation);
            const int k = level < 0 ? static_cast<int>(h.levels.size()) - 1 : level;
            if (k >= static_cast<int>(h.levels.size()))
                fail("InvalidArgument", "level " + std::to_string(k) + " not built; hierarchy has " +
                                            std::to_string(h.levels.size()) + " levels");
            files.add(output, write_ascii_grid(detail::labels_as_grid(h.levels[static_cast<std::size_t>(k)], g)));
            files.commit();
            out << h.levels[static_cast<std::size_t>(k)].region_count << " regions\n";
        }
    } catch (const Error& e) {
        err << e.code() << ": " << detail::one_line(e.what()) << "\n";
        return kExitDomain;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "IoError: " << detail::one_line(e.what()) << "\n";
        return kExitDomain;
    }
    return kExitOk;
}

inline int run(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    return run(std::vector<std::string>(argv + 1, argv + argc), out, err);
}

} // namespace demreg::cli
