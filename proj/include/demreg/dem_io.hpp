#pragma once

/**
 * @file dem_io.hpp
 * @brief Elevation grid type, ESRI ASCII Grid reader/writer, synthetic terrain
 *        generation and noise perturbation.
 */

#include "demreg/error.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <iterator>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace demreg {

/// Georeferenced elevation raster, row-major, top row first.
struct DemGrid {
    int nrows = 0;
    int ncols = 0;
    double cellsize = 1.0;
    double xll = 0.0;
    double yll = 0.0;
    double nodata = -9999.0;
    std::vector<double> cells;

    DemGrid() = default;
    DemGrid(int rows, int cols, double fill = 0.0, double cell = 1.0)
        : nrows(rows), ncols(cols), cellsize(cell),
          cells(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols), fill) {}

    std::size_t size() const noexcept { return cells.size(); }
    std::size_t index(int r, int c) const noexcept {
        return static_cast<std::size_t>(r) * static_cast<std::size_t>(ncols) +
               static_cast<std::size_t>(c);
    }
    bool in_bounds(int r, int c) const noexcept {
        return r >= 0 && c >= 0 && r < nrows && c < ncols;
    }
    double& at(int r, int c) { return cells[index(r, c)]; }
    double at(int r, int c) const { return cells[index(r, c)]; }
    bool is_nodata(double v) const noexcept { return v == nodata; }
    bool valid(int r, int c) const { return !is_nodata(at(r, c)); }

    bool same_frame(const DemGrid& o) const noexcept {
        return nrows == o.nrows && ncols == o.ncols;
    }

    friend bool operator==(const DemGrid&, const DemGrid&) = default;
};

/// Throws unless the grid satisfies every DemGrid invariant.
inline void validate(const DemGrid& g) {
    if (g.nrows <= 0 || g.ncols <= 0)
        fail("InvalidGrid", "grid dimensions must be positive");
    if (!(g.cellsize > 0.0) || !std::isfinite(g.cellsize))
        fail("InvalidGrid", "cellsize must be positive");
    if (g.cells.size() != static_cast<std::size_t>(g.nrows) * static_cast<std::size_t>(g.ncols))
        fail("InvalidGrid", "cell count does not match dimensions");
    for (double v : g.cells)
        if (!std::isfinite(v) && v != g.nodata)
            fail("InvalidGrid", "non-finite cell value");
}

inline std::size_t count_valid(const DemGrid& g) {
    return static_cast<std::size_t>(
        std::count_if(g.cells.begin(), g.cells.end(), [&](double v) { return !g.is_nodata(v); }));
}

/// (min, max) over non-nodata cells; nullopt when every cell is nodata.
inline std::optional<std::pair<double, double>> valid_range(const DemGrid& g) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    bool any = false;
    for (double v : g.cells) {
        if (g.is_nodata(v)) continue;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
        any = true;
    }
    if (!any) return std::nullopt;
    return std::pair{lo, hi};
}

// ---------------------------------------------------------------------------
// ESRI ASCII Grid
// ---------------------------------------------------------------------------

namespace detail {

struct Token {
    std::string_view text;
    int line;
};

inline std::vector<Token> tokenize(std::string_view text) {
    std::vector<Token> out;
    int line = 1;
    std::size_t i = 0;
    while (i < text.size()) {
        char ch = text[i];
        if (ch == '\n') {
            ++line;
            ++i;
            continue;
        }
        if (std::isspace(static_cast<unsigned char>(ch))) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
        out.push_back({text.substr(i, j - i), line});
        i = j;
    }
    return out;
}

inline std::optional<double> to_double(std::string_view s) {
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

inline std::string lower(std::string_view s) {
    std::string out(s);
    for (auto& ch : out) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    return out;
}

inline std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    (void)ec;
    return std::string(buf, ptr);
}

inline bool looks_like_key(std::string_view s) {
    return !s.empty() && std::isalpha(static_cast<unsigned char>(s.front())) &&
           !to_double(s).has_value();
}

} // namespace detail

/// Parses an ESRI ASCII Grid. Header keys are case-insensitive.
inline DemGrid parse_ascii_grid(std::string_view text) {
    auto tokens = detail::tokenize(text);
    std::size_t pos = 0;

    std::optional<double> ncols, nrows, xll, yll, xllc, yllc, cellsize, nodata;
    while (pos + 1 < tokens.size() && detail::looks_like_key(tokens[pos].text)) {
        const auto key = detail::lower(tokens[pos].text);
        const auto& vt = tokens[pos + 1];
        auto v = detail::to_double(vt.text);
        if (!v)
            fail("MissingHeaderField", "header value '" + std::string(vt.text) + "' for key '" +
                                           std::string(tokens[pos].text) + "' on line " +
                                           std::to_string(vt.line) + " is not numeric");
        if (key == "ncols") ncols = v;
        else if (key == "nrows") nrows = v;
        else if (key == "xllcorner") xll = v;
        else if (key == "yllcorner") yll = v;
        else if (key == "xllcenter") xllc = v;
        else if (key == "yllcenter") yllc = v;
        else if (key == "cellsize") cellsize = v;
        else if (key == "nodata_value") nodata = v;
        else
            fail("MissingHeaderField", "unknown header key '" + std::string(tokens[pos].text) +
                                           "' on line " + std::to_string(tokens[pos].line));
        pos += 2;
    }

    const int header_end_line = pos < tokens.size() ? tokens[pos].line : (tokens.empty() ? 1 : tokens.back().line);
    auto missing = [&](const char* name) {
        fail("MissingHeaderField", std::string("header field '") + name +
                                       "' missing before line " + std::to_string(header_end_line));
    };
    if (!ncols) missing("ncols");
    if (!nrows) missing("nrows");
    if (!cellsize) missing("cellsize");
    if (!xll && !xllc) missing("xllcorner");
    if (!yll && !yllc) missing("yllcorner");
    if (!nodata) missing("NODATA_value");

    if (*ncols < 1 || *nrows < 1 || *ncols != std::floor(*ncols) || *nrows != std::floor(*nrows))
        fail("MissingHeaderField", "ncols/nrows must be positive integers");
    if (!(*cellsize > 0.0)) fail("MissingHeaderField", "cellsize must be positive");

    DemGrid g(static_cast<int>(*nrows), static_cast<int>(*ncols), 0.0, *cellsize);
    g.nodata = *nodata;
    g.xll = xll ? *xll : *xllc - 0.5 * *cellsize;
    g.yll = yll ? *yll : *yllc - 0.5 * *cellsize;

    const std::size_t expected = g.size();
    const std::size_t available = tokens.size() - pos;
    if (available != expected) {
        if (available > expected) {
            const auto& extra = tokens[pos + expected];
            fail("CellCountMismatch", "expected " + std::to_string(expected) + " cells, found extra token '" +
                                          std::string(extra.text) + "' on line " +
                                          std::to_string(extra.line));
        }
        const int last_line = tokens.empty() ? 1 : tokens.back().line;
        const std::string last = available > 0 ? std::string(tokens.back().text) : std::string("<none>");
        fail("CellCountMismatch", "expected " + std::to_string(expected) + " cells, found " +
                                      std::to_string(available) + " (last token '" + last +
                                      "' on line " + std::to_string(last_line) + ")");
    }

    for (std::size_t k = 0; k < expected; ++k) {
        const auto& t = tokens[pos + k];
        auto v = detail::to_double(t.text);
        if (!v || (!std::isfinite(*v) && *v != g.nodata))
            fail("NonNumericCell", "non-numeric cell '" + std::string(t.text) + "' on line " +
                                       std::to_string(t.line));
        g.cells[k] = *v;
    }
    return g;
}

inline DemGrid parse_ascii_grid(std::istream& in) {
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_ascii_grid(std::string_view(text));
}

/// Writes the grid using the shortest representation that round-trips exactly.
inline void write_ascii_grid(const DemGrid& g, std::ostream& out) {
    out << "ncols         " << g.ncols << '\n'
        << "nrows         " << g.nrows << '\n'
        << "xllcorner     " << detail::format_double(g.xll) << '\n'
        << "yllcorner     " << detail::format_double(g.yll) << '\n'
        << "cellsize      " << detail::format_double(g.cellsize) << '\n'
        << "NODATA_value  " << detail::format_double(g.nodata) << '\n';
    std::string line;
    for (int r = 0; r < g.nrows; ++r) {
        line.clear();
        for (int c = 0; c < g.ncols; ++c) {
            if (c) line.push_back(' ');
            line += detail::format_double(g.at(r, c));
        }
        line.push_back('\n');
        out << line;
    }
}

inline std::string write_ascii_grid(const DemGrid& g) {
    std::ostringstream os;
    write_ascii_grid(g, os);
    return os.str();
}

// ---------------------------------------------------------------------------
// Synthetic terrain
// ---------------------------------------------------------------------------

struct GaussianPeak {
    double row = 0, col = 0;
    double amplitude = 1;
    double sigma = 1;
};

struct GaussianPit {
    double row = 0, col = 0;
    double amplitude = 1;
    double sigma = 1;
};

/// z += grad_row * row + grad_col * col
struct Plane {
    double grad_row = 0, grad_col = 0;
};

/// z += amplitude * sin(k_row * row + k_col * col + phase); wavevector in radians per cell.
struct Ripple {
    double k_row = 0, k_col = 0;
    double amplitude = 1;
    double phase = 0;
};

using Feature = std::variant<GaussianPeak, GaussianPit, Plane, Ripple>;

struct SynthSpec {
    int nrows = 64;
    int ncols = 64;
    double base = 0.0;
    double cellsize = 1.0;
    std::vector<Feature> features;
    std::uint64_t seed = 0;
    /// Half-width of uniform per-cell jitter drawn from `seed`; 0 disables it.
    double jitter = 0.0;
};

inline void validate(const SynthSpec& s) {
    if (s.nrows <= 0 || s.ncols <= 0) fail("InvalidSpec", "dims must be positive");
    if (!(s.cellsize > 0.0)) fail("InvalidSpec", "cellsize must be positive");
    if (s.jitter < 0.0 || !std::isfinite(s.jitter)) fail("InvalidSpec", "jitter must be >= 0");
    auto check_blob = [&](double row, double col, double amp, double sigma, const char* kind) {
        if (!(row >= 0 && col >= 0 && row <= s.nrows - 1 && col <= s.ncols - 1))
            fail("FeatureOutOfBounds", std::string(kind) + " center (" + detail::format_double(row) + ", " +
                                           detail::format_double(col) + ") outside grid");
        if (!(sigma > 0.0) || !std::isfinite(sigma))
            fail("InvalidSpec", std::string(kind) + " sigma must be > 0");
        if (!(amp > 0.0) || !std::isfinite(amp))
            fail("InvalidSpec", std::string(kind) + " amplitude must be finite and > 0");
    };
    for (const auto& f : s.features) {
        std::visit(
            [&](const auto& ft) {
                using T = std::decay_t<decltype(ft)>;
                if constexpr (std::is_same_v<T, GaussianPeak>)
                    check_blob(ft.row, ft.col, ft.amplitude, ft.sigma, "peak");
                else if constexpr (std::is_same_v<T, GaussianPit>)
                    check_blob(ft.row, ft.col, ft.amplitude, ft.sigma, "pit");
                else if constexpr (std::is_same_v<T, Ripple>) {
                    if (!std::isfinite(ft.amplitude)) fail("InvalidSpec", "ripple amplitude must be finite");
                }
            },
            f);
    }
}

/// Noise-free terrain value at a continuous (row, col) position; jitter is not included.
inline double synth_elevation(const SynthSpec& s, double row, double col) {
    double z = s.base;
    for (const auto& f : s.features) {
        std::visit(
            [&](const auto& ft) {
                using T = std::decay_t<decltype(ft)>;
                if constexpr (std::is_same_v<T, GaussianPeak> || std::is_same_v<T, GaussianPit>) {
                    const double dr = row - ft.row, dc = col - ft.col;
                    const double g = ft.amplitude * std::exp(-(dr * dr + dc * dc) / (2.0 * ft.sigma * ft.sigma));
                    z += std::is_same_v<T, GaussianPeak> ? g : -g;
                } else if constexpr (std::is_same_v<T, Plane>) {
                    z += ft.grad_row * row + ft.grad_col * col;
                } else {
                    z += ft.amplitude * std::sin(ft.k_row * row + ft.k_col * col + ft.phase);
                }
            },
            f);
    }
    return z;
}

inline DemGrid generate_synthetic(const SynthSpec& s) {
    validate(s);
    DemGrid g(s.nrows, s.ncols, 0.0, s.cellsize);
    std::mt19937_64 rng(s.seed);
    std::uniform_real_distribution<double> jit(-s.jitter, s.jitter);
    for (int r = 0; r < s.nrows; ++r)
        for (int c = 0; c < s.ncols; ++c) {
            double z = synth_elevation(s, r, c);
            if (s.jitter > 0.0) z += jit(rng);
            g.at(r, c) = z;
        }
    return g;
}

/// Samples the synthetic terrain at `to_spec(row, col)` for every cell of an
/// nrows x ncols grid; used to build transformed views of the same terrain.
template <class Mapping>
DemGrid sample_synthetic(const SynthSpec& s, int nrows, int ncols, Mapping&& to_spec) {
    validate(s);
    DemGrid g(nrows, ncols, 0.0, s.cellsize);
    for (int r = 0; r < nrows; ++r)
        for (int c = 0; c < ncols; ++c) {
            auto [sr, sc] = to_spec(static_cast<double>(r), static_cast<double>(c));
            g.at(r, c) = synth_elevation(s, sr, sc);
        }
    return g;
}

/// Adds zero-mean truncated-Gaussian noise (sigma = half_range/3, support
/// [-half_range, half_range]) to every valid cell.
inline DemGrid add_noise(const DemGrid& g, double half_range, std::uint64_t seed) {
    if (!(half_range >= 0.0) || !std::isfinite(half_range))
        fail("InvalidArgument", "half_range must be >= 0");
    DemGrid out = g;
    if (half_range == 0.0) return out;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, half_range / 3.0);
    for (auto& v : out.cells) {
        if (out.is_nodata(v)) continue;
        double e;
        do {
            e = normal(rng);
        } while (std::abs(e) > half_range);
        v += e;
    }
    return out;
}

/// Nodata-aware separable Gaussian smoothing; weights renormalised over valid cells.
inline DemGrid smooth_gaussian(const DemGrid& g, double sigma) {
    if (!(sigma > 0.0)) return g;
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> kernel(2 * radius + 1);
    for (int k = -radius; k <= radius; ++k)
        kernel[k + radius] = std::exp(-(k * k) / (2.0 * sigma * sigma));

    const std::size_t n = g.size();
    std::vector<double> sum(n, 0.0), wsum(n, 0.0);
    for (int r = 0; r < g.nrows; ++r)
        for (int c = 0; c < g.ncols; ++c) {
            double s = 0, w = 0;
            for (int k = -radius; k <= radius; ++k) {
                int cc = c + k;
                if (cc < 0 || cc >= g.ncols || !g.valid(r, cc)) continue;
                s += kernel[k + radius] * g.at(r, cc);
                w += kernel[k + radius];
            }
            sum[g.index(r, c)] = s;
            wsum[g.index(r, c)] = w;
        }
    DemGrid out = g;
    for (int r = 0; r < g.nrows; ++r)
        for (int c = 0; c < g.ncols; ++c) {
            if (!g.valid(r, c)) continue;
            double s = 0, w = 0;
            for (int k = -radius; k <= radius; ++k) {
                int rr = r + k;
                if (rr < 0 || rr >= g.nrows) continue;
                const auto idx = g.index(rr, c);
                if (wsum[idx] == 0.0) continue;
                s += kernel[k + radius] * sum[idx];
                w += kernel[k + radius] * wsum[idx];
            }
            out.at(r, c) = w > 0 ? s / w : g.at(r, c);
        }
    return out;
}

} // namespace demreg
