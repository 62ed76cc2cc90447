#pragma once

/**
 * @file fractal_codec.hpp
 * @brief Partitioned IFS coder for elevation grids.
 *
 * Elevations are quantized to 16 bits. Each R x R range block is coded as
 * r = s (D - mean D) + o, where D is a 2R x 2R domain block averaged 2:1 and
 * transformed by one of the 8 square isometries, and o is the range mean.
 * Domains sit on a lattice aligned with the range partition, which makes the
 * decoder converge in a few iterations to a unique fixed point.
 */

#include "demreg/dem_io.hpp"
#include "demreg/metrics.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <optional>
#include <string>
#include <vector>

namespace demreg {

struct FractalParams {
    int range_size = 4;
    int domain_step = 4;
    int scale_bits = 5;
    /// Bits of the quantized block offset. 16 keeps the offset at the
    /// resolution of the 16-bit elevations; 7 gives the compact 29-bit record.
    int offset_bits = 16;
    /// Limits the domain search to domains whose origin lies within this many
    /// cells of the range block; empty searches the whole pool.
    std::optional<int> search_radius;

    friend bool operator==(const FractalParams&, const FractalParams&) = default;
};

struct FractalBlock {
    std::uint32_t domain_index = 0;
    std::uint8_t isometry = 0;
    std::int8_t s_q = 0; ///< contrast s = s_q / 16
    std::uint32_t o_q = 0;

    friend bool operator==(const FractalBlock&, const FractalBlock&) = default;
};

struct FractalCode {
    int nrows = 0;
    int ncols = 0;
    double cellsize = 1;
    double xll = 0;
    double yll = 0;
    double nodata = -9999;
    double z_min = 0;
    double z_max = 0;
    FractalParams params;
    std::vector<FractalBlock> blocks; ///< row-major over range blocks
    std::vector<std::uint8_t> valid;  ///< 1 where the source cell held data

    int padded_rows() const { return (nrows + params.range_size - 1) / params.range_size * params.range_size; }
    int padded_cols() const { return (ncols + params.range_size - 1) / params.range_size * params.range_size; }
    int block_rows() const { return padded_rows() / params.range_size; }
    int block_cols() const { return padded_cols() / params.range_size; }
    int domain_rows() const { return (padded_rows() - 2 * params.range_size) / params.domain_step + 1; }
    int domain_cols() const { return (padded_cols() - 2 * params.range_size) / params.domain_step + 1; }
    int domain_bits() const {
        const auto pool = static_cast<std::uint32_t>(domain_rows() * domain_cols());
        return pool <= 1 ? 0 : static_cast<int>(std::bit_width(pool - 1));
    }
    int record_bits() const { return domain_bits() + 3 + params.scale_bits + params.offset_bits; }

    friend bool operator==(const FractalCode&, const FractalCode&) = default;
};

inline constexpr double kQuantMax = 65535.0;
/// Scale quantization step: s = s_q / kScaleDenominator.
inline constexpr double kScaleDenominator = 16.0;

namespace detail {

inline int max_scale_q(int scale_bits) {
    // |s| <= 0.9 and s_q must fit in a signed field of scale_bits.
    const int by_bits = (1 << (scale_bits - 1)) - 1;
    return std::min(by_bits, static_cast<int>(std::floor(0.9 * kScaleDenominator)));
}

inline void validate_params(const FractalParams& p) {
    if (p.range_size < 1 || p.range_size > 64) fail("InvalidArgument", "range_size must be in [1, 64]");
    if (p.domain_step < 1) fail("InvalidArgument", "domain_step must be >= 1");
    if (p.scale_bits < 2 || p.scale_bits > 8) fail("InvalidArgument", "scale_bits must be in [2, 8]");
    if (p.offset_bits < 1 || p.offset_bits > 24) fail("InvalidArgument", "offset_bits must be in [1, 24]");
    if (p.search_radius && *p.search_radius < 0) fail("InvalidArgument", "search_radius must be >= 0");
}

/// Source offset within an n x n block for isometry k at output (i, j).
inline std::pair<int, int> isometry_source(int k, int i, int j, int n) {
    const int m = n - 1;
    switch (k) {
    case 0: return {i, j};
    case 1: return {j, m - i};     // rotate 90
    case 2: return {m - i, m - j}; // rotate 180
    case 3: return {m - j, i};     // rotate 270
    case 4: return {i, m - j};     // mirror columns
    case 5: return {m - i, j};     // mirror rows
    case 6: return {j, i};         // transpose
    default: return {m - j, m - i}; // anti-transpose
    }
}

/// Nodata cells filled with the mean of already-known 8-neighbours, layer by layer.
inline std::vector<double> fill_nodata(const DemGrid& g) {
    std::vector<double> z = g.cells;
    std::vector<char> known(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) known[i] = !g.is_nodata(g.cells[i]);
    bool any_unknown = std::find(known.begin(), known.end(), 0) != known.end();
    while (any_unknown) {
        any_unknown = false;
        std::vector<std::pair<std::size_t, double>> updates;
        for (int r = 0; r < g.nrows; ++r)
            for (int c = 0; c < g.ncols; ++c) {
                const auto i = g.index(r, c);
                if (known[i]) continue;
                double s = 0;
                int n = 0;
                for (int dr = -1; dr <= 1; ++dr)
                    for (int dc = -1; dc <= 1; ++dc) {
                        if (!g.in_bounds(r + dr, c + dc)) continue;
                        const auto j = g.index(r + dr, c + dc);
                        if (!known[j]) continue;
                        s += z[j];
                        ++n;
                    }
                if (n) updates.emplace_back(i, s / n);
                else any_unknown = true;
            }
        if (updates.empty() && any_unknown) fail("AllNoData", "grid has no valid cells to encode");
        for (auto [i, v] : updates) {
            z[i] = v;
            known[i] = 1;
        }
    }
    return z;
}

/// Applies one round of the block maps to `x` (padded, quantized units).
inline void apply_blocks(const FractalCode& code, const std::vector<double>& x, std::vector<double>& out) {
    const int R = code.params.range_size;
    const int W = code.padded_cols();
    const int dc = code.domain_cols();
    const double o_scale = kQuantMax / static_cast<double>((1u << code.params.offset_bits) - 1u);
    std::vector<double> dom(static_cast<std::size_t>(R * R));
    for (int br = 0; br < code.block_rows(); ++br)
        for (int bc = 0; bc < code.block_cols(); ++bc) {
            const auto& b = code.blocks[static_cast<std::size_t>(br * code.block_cols() + bc)];
            const int dr0 = static_cast<int>(b.domain_index) / dc * code.params.domain_step;
            const int dc0 = static_cast<int>(b.domain_index) % dc * code.params.domain_step;
            double mean = 0;
            for (int i = 0; i < R; ++i)
                for (int j = 0; j < R; ++j) {
                    const int y = dr0 + 2 * i, xx = dc0 + 2 * j;
                    const double v = 0.25 * (x[static_cast<std::size_t>(y * W + xx)] + x[static_cast<std::size_t>(y * W + xx + 1)] +
                                             x[static_cast<std::size_t>((y + 1) * W + xx)] +
                                             x[static_cast<std::size_t>((y + 1) * W + xx + 1)]);
                    dom[static_cast<std::size_t>(i * R + j)] = v;
                    mean += v;
                }
            mean /= R * R;
            const double s = b.s_q / kScaleDenominator;
            const double o = b.o_q * o_scale;
            for (int i = 0; i < R; ++i)
                for (int j = 0; j < R; ++j) {
                    const auto [si, sj] = isometry_source(b.isometry, i, j, R);
                    out[static_cast<std::size_t>((br * R + i) * W + bc * R + j)] =
                        s * (dom[static_cast<std::size_t>(si * R + sj)] - mean) + o;
                }
        }
}

} // namespace detail

/// Quantized (16-bit, as doubles) padded image the encoder works on.
inline std::vector<double> quantize_for_coding(const DemGrid& g, const FractalParams& p, double& z_min, double& z_max) {
    const auto range = valid_range(g);
    if (!range) fail("AllNoData", "grid has no valid cells to encode");
    z_min = range->first;
    z_max = range->second;
    const auto filled = detail::fill_nodata(g);
    const int R = p.range_size;
    const int H = (g.nrows + R - 1) / R * R, W = (g.ncols + R - 1) / R * R;
    std::vector<double> q(static_cast<std::size_t>(H * W));
    const double span = z_max - z_min;
    for (int r = 0; r < H; ++r)
        for (int c = 0; c < W; ++c) {
            const double z = filled[g.index(std::min(r, g.nrows - 1), std::min(c, g.ncols - 1))];
            q[static_cast<std::size_t>(r * W + c)] =
                span > 0 ? std::clamp(std::round((z - z_min) / span * kQuantMax), 0.0, kQuantMax) : 0.0;
        }
    return q;
}

inline FractalCode encode(const DemGrid& grid, const FractalParams& params = {}) {
    detail::validate_params(params);
    const int R = params.range_size;
    if (grid.nrows < 2 * R || grid.ncols < 2 * R)
        fail("GridTooSmall", "fractal coding needs at least " + std::to_string(2 * R) + " cells per side");

    FractalCode code;
    code.nrows = grid.nrows;
    code.ncols = grid.ncols;
    code.cellsize = grid.cellsize;
    code.xll = grid.xll;
    code.yll = grid.yll;
    code.nodata = grid.nodata;
    code.params = params;
    code.valid.resize(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) code.valid[i] = !grid.is_nodata(grid.cells[i]);

    const auto img = quantize_for_coding(grid, params, code.z_min, code.z_max);
    const int W = code.padded_cols();
    const int n = R * R;
    const int drows = code.domain_rows(), dcols = code.domain_cols();
    const std::size_t pool = static_cast<std::size_t>(drows) * static_cast<std::size_t>(dcols);

    // Mean-removed, 2:1 averaged domains in all 8 isometries: [domain][iso][n].
    std::vector<double> doms(pool * 8 * static_cast<std::size_t>(n));
    std::vector<double> dom_energy(pool);
    std::vector<double> base(static_cast<std::size_t>(n));
    for (int di = 0; di < drows; ++di)
        for (int dj = 0; dj < dcols; ++dj) {
            const int y0 = di * params.domain_step, x0 = dj * params.domain_step;
            double mean = 0;
            for (int i = 0; i < R; ++i)
                for (int j = 0; j < R; ++j) {
                    const int y = y0 + 2 * i, x = x0 + 2 * j;
                    const double v = 0.25 * (img[static_cast<std::size_t>(y * W + x)] + img[static_cast<std::size_t>(y * W + x + 1)] +
                                             img[static_cast<std::size_t>((y + 1) * W + x)] +
                                             img[static_cast<std::size_t>((y + 1) * W + x + 1)]);
                    base[static_cast<std::size_t>(i * R + j)] = v;
                    mean += v;
                }
            mean /= n;
            const std::size_t d = static_cast<std::size_t>(di * dcols + dj);
            double e = 0;
            for (auto& v : base) {
                v -= mean;
                e += v * v;
            }
            dom_energy[d] = e;
            for (int k = 0; k < 8; ++k) {
                double* out = &doms[(d * 8 + static_cast<std::size_t>(k)) * static_cast<std::size_t>(n)];
                for (int i = 0; i < R; ++i)
                    for (int j = 0; j < R; ++j) {
                        const auto [si, sj] = detail::isometry_source(k, i, j, R);
                        out[i * R + j] = base[static_cast<std::size_t>(si * R + sj)];
                    }
            }
        }

    const int qmax = detail::max_scale_q(params.scale_bits);
    const auto olevels = static_cast<double>((1u << params.offset_bits) - 1u);
    std::vector<double> rblock(static_cast<std::size_t>(n));
    code.blocks.resize(static_cast<std::size_t>(code.block_rows() * code.block_cols()));
    for (int br = 0; br < code.block_rows(); ++br)
        for (int bc = 0; bc < code.block_cols(); ++bc) {
            double mean = 0;
            for (int i = 0; i < R; ++i)
                for (int j = 0; j < R; ++j) {
                    const double v = img[static_cast<std::size_t>((br * R + i) * W + bc * R + j)];
                    rblock[static_cast<std::size_t>(i * R + j)] = v;
                    mean += v;
                }
            mean /= n;
            double rr = 0;
            for (auto& v : rblock) {
                v -= mean;
                rr += v * v;
            }
            FractalBlock best;
            best.o_q = static_cast<std::uint32_t>(std::lround(mean / kQuantMax * olevels));
            double best_err = rr; // s = 0 with any domain
            if (rr > 0) {
                for (int di = 0; di < drows && best_err > 0; ++di) {
                    if (params.search_radius && std::abs(di * params.domain_step - br * R) > *params.search_radius)
                        continue;
                    for (int dj = 0; dj < dcols && best_err > 0; ++dj) {
                        if (params.search_radius && std::abs(dj * params.domain_step - bc * R) > *params.search_radius)
                            continue;
                        const std::size_t d = static_cast<std::size_t>(di * dcols + dj);
                        const double dd = dom_energy[d];
                        if (dd <= 0) continue;
                        for (int k = 0; k < 8; ++k) {
                            const double* dv = &doms[(d * 8 + static_cast<std::size_t>(k)) * static_cast<std::size_t>(n)];
                            double dot = 0;
                            for (int t = 0; t < n; ++t) dot += rblock[static_cast<std::size_t>(t)] * dv[t];
                            const int q = std::clamp(static_cast<int>(std::lround(dot / dd * kScaleDenominator)), -qmax, qmax);
                            const double s = q / kScaleDenominator;
                            const double err = rr - 2 * s * dot + s * s * dd;
                            if (err < best_err) {
                                best_err = err;
                                best.domain_index = static_cast<std::uint32_t>(d);
                                best.isometry = static_cast<std::uint8_t>(k);
                                best.s_q = static_cast<std::int8_t>(q);
                            }
                        }
                    }
                }
            }
            code.blocks[static_cast<std::size_t>(br * code.block_cols() + bc)] = best;
        }
    return code;
}

struct DecodeResult {
    DemGrid grid;
    int iterations = 0;
    std::vector<double> deltas; ///< max-abs change per iteration, quantized units
    std::vector<double> quantized; ///< fixed point in 16-bit units, unpadded, row-major
};

struct DecodeOptions {
    int max_iterations = 30;
    double epsilon = 1e-6;       ///< quantized units
    double initial_value = 32767.5; ///< mid-gray start
    const std::vector<double>* initial = nullptr; ///< optional full padded start image
};

inline DecodeResult decode_detailed(const FractalCode& code, const DecodeOptions& opt = {}) {
    detail::validate_params(code.params);
    const std::size_t padded = static_cast<std::size_t>(code.padded_rows()) * static_cast<std::size_t>(code.padded_cols());
    if (code.blocks.size() != static_cast<std::size_t>(code.block_rows() * code.block_cols()))
        fail("CorruptCode", "block count does not match grid dimensions");
    if (code.valid.size() != static_cast<std::size_t>(code.nrows) * static_cast<std::size_t>(code.ncols))
        fail("CorruptCode", "mask size does not match grid dimensions");
    std::vector<double> x(padded, opt.initial_value), next(padded);
    if (opt.initial) {
        if (opt.initial->size() != padded) fail("DimsMismatch", "initial image has the wrong size");
        x = *opt.initial;
    }
    DecodeResult res;
    for (int it = 0; it < opt.max_iterations; ++it) {
        detail::apply_blocks(code, x, next);
        double delta = 0;
        for (std::size_t i = 0; i < padded; ++i) delta = std::max(delta, std::abs(next[i] - x[i]));
        x.swap(next);
        res.deltas.push_back(delta);
        res.iterations = it + 1;
        if (delta < opt.epsilon) break;
    }
    DemGrid g(code.nrows, code.ncols, 0.0, code.cellsize);
    g.xll = code.xll;
    g.yll = code.yll;
    g.nodata = code.nodata;
    res.quantized.resize(g.size());
    const int W = code.padded_cols();
    const double span = code.z_max - code.z_min;
    for (int r = 0; r < g.nrows; ++r)
        for (int c = 0; c < g.ncols; ++c) {
            const double q = std::clamp(x[static_cast<std::size_t>(r * W + c)], 0.0, kQuantMax);
            res.quantized[g.index(r, c)] = q;
            g.at(r, c) = code.valid[g.index(r, c)] ? code.z_min + q / kQuantMax * span : g.nodata;
        }
    res.grid = std::move(g);
    return res;
}

inline DemGrid decode(const FractalCode& code, int max_iterations = 30, double epsilon = 1e-6) {
    DecodeOptions opt;
    opt.max_iterations = max_iterations;
    opt.epsilon = epsilon;
    return decode_detailed(code, opt).grid;
}

// ---------------------------------------------------------------------------
// Serialized form
// ---------------------------------------------------------------------------

namespace detail {

class BitWriter {
public:
    void put(std::uint32_t value, int bits) {
        for (int b = bits - 1; b >= 0; --b) {
            cur_ = static_cast<std::uint8_t>((cur_ << 1) | ((value >> b) & 1u));
            if (++n_ == 8) flush_byte();
        }
    }
    void align() {
        if (n_ == 0) return;
        cur_ = static_cast<std::uint8_t>(cur_ << (8 - n_));
        flush_byte();
    }
    std::vector<std::uint8_t>& bytes() { return out_; }

private:
    void flush_byte() {
        out_.push_back(cur_);
        cur_ = 0;
        n_ = 0;
    }
    std::vector<std::uint8_t> out_;
    std::uint8_t cur_ = 0;
    int n_ = 0;
};

class BitReader {
public:
    BitReader(const std::vector<std::uint8_t>& data, std::size_t pos) : data_(data), pos_(pos) {}
    std::uint32_t get(int bits) {
        std::uint32_t v = 0;
        for (int b = 0; b < bits; ++b) {
            if (pos_ >= data_.size()) fail("CorruptCode", "block records truncated");
            const int bit = (data_[pos_] >> (7 - n_)) & 1;
            v = (v << 1) | static_cast<std::uint32_t>(bit);
            if (++n_ == 8) {
                n_ = 0;
                ++pos_;
            }
        }
        return v;
    }
    void align() {
        if (n_ != 0) {
            n_ = 0;
            ++pos_;
        }
    }
    std::size_t pos() const { return pos_; }

private:
    const std::vector<std::uint8_t>& data_;
    std::size_t pos_;
    int n_ = 0;
};

template <class T>
void put_le(std::vector<std::uint8_t>& out, T v) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
    out.insert(out.end(), b, b + sizeof(T));
}

template <class T>
T get_le(const std::vector<std::uint8_t>& in, std::size_t& pos) {
    if (pos + sizeof(T) > in.size()) fail("CorruptCode", "header truncated");
    unsigned char b[sizeof(T)];
    std::memcpy(b, in.data() + pos, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
    pos += sizeof(T);
    T v;
    std::memcpy(&v, b, sizeof(T));
    return v;
}

inline constexpr char kMagic[5] = {'F', 'D', 'E', 'M', '1'};

} // namespace detail

/// Magic "FDEM1", little-endian header, packed block records (MSB first,
/// byte-aligned per block row), then the run-length coded validity mask
/// (u32 run count, u32 runs alternating valid/nodata starting with valid).
inline std::vector<std::uint8_t> serialize(const FractalCode& code) {
    std::vector<std::uint8_t> out(detail::kMagic, detail::kMagic + 5);
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(code.nrows));
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(code.ncols));
    detail::put_le<double>(out, code.cellsize);
    detail::put_le<double>(out, code.xll);
    detail::put_le<double>(out, code.yll);
    detail::put_le<double>(out, code.nodata);
    detail::put_le<double>(out, code.z_min);
    detail::put_le<double>(out, code.z_max);
    out.push_back(static_cast<std::uint8_t>(code.params.range_size));
    out.push_back(static_cast<std::uint8_t>(code.params.domain_step));
    out.push_back(static_cast<std::uint8_t>(code.params.scale_bits));
    out.push_back(static_cast<std::uint8_t>(code.params.offset_bits));

    detail::BitWriter bw;
    const int dbits = code.domain_bits();
    const auto s_bias = static_cast<std::uint32_t>(1u << (code.params.scale_bits - 1));
    for (int br = 0; br < code.block_rows(); ++br) {
        for (int bc = 0; bc < code.block_cols(); ++bc) {
            const auto& b = code.blocks[static_cast<std::size_t>(br * code.block_cols() + bc)];
            bw.put(b.domain_index, dbits);
            bw.put(b.isometry, 3);
            bw.put(static_cast<std::uint32_t>(b.s_q + static_cast<int>(s_bias)), code.params.scale_bits);
            bw.put(b.o_q, code.params.offset_bits);
        }
        bw.align();
    }
    out.insert(out.end(), bw.bytes().begin(), bw.bytes().end());

    std::vector<std::uint32_t> runs;
    std::uint8_t state = 1;
    std::uint32_t len = 0;
    for (auto v : code.valid) {
        const std::uint8_t b = v ? 1 : 0;
        if (b == state) {
            ++len;
        } else {
            runs.push_back(len);
            state = b;
            len = 1;
        }
    }
    runs.push_back(len);
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(runs.size()));
    for (auto r : runs) detail::put_le<std::uint32_t>(out, r);
    return out;
}

inline FractalCode deserialize(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 5 || !std::equal(detail::kMagic, detail::kMagic + 5, bytes.begin()))
        fail("CorruptCode", "missing FDEM1 magic");
    std::size_t pos = 5;
    FractalCode code;
    code.nrows = static_cast<int>(detail::get_le<std::uint32_t>(bytes, pos));
    code.ncols = static_cast<int>(detail::get_le<std::uint32_t>(bytes, pos));
    code.cellsize = detail::get_le<double>(bytes, pos);
    code.xll = detail::get_le<double>(bytes, pos);
    code.yll = detail::get_le<double>(bytes, pos);
    code.nodata = detail::get_le<double>(bytes, pos);
    code.z_min = detail::get_le<double>(bytes, pos);
    code.z_max = detail::get_le<double>(bytes, pos);
    if (pos + 4 > bytes.size()) fail("CorruptCode", "header truncated");
    code.params.range_size = bytes[pos++];
    code.params.domain_step = bytes[pos++];
    code.params.scale_bits = bytes[pos++];
    code.params.offset_bits = bytes[pos++];
    detail::validate_params(code.params);
    if (code.nrows < 2 * code.params.range_size || code.ncols < 2 * code.params.range_size)
        fail("CorruptCode", "implausible grid dimensions");

    detail::BitReader br(bytes, pos);
    const int dbits = code.domain_bits();
    const int s_bias = 1 << (code.params.scale_bits - 1);
    const auto pool = static_cast<std::uint32_t>(code.domain_rows() * code.domain_cols());
    for (int r = 0; r < code.block_rows(); ++r) {
        for (int c = 0; c < code.block_cols(); ++c) {
            FractalBlock b;
            b.domain_index = br.get(dbits);
            b.isometry = static_cast<std::uint8_t>(br.get(3));
            b.s_q = static_cast<std::int8_t>(static_cast<int>(br.get(code.params.scale_bits)) - s_bias);
            b.o_q = br.get(code.params.offset_bits);
            if (b.domain_index >= pool) fail("CorruptCode", "domain index out of range");
            code.blocks.push_back(b);
        }
        br.align();
    }
    pos = br.pos();
    const auto nruns = detail::get_le<std::uint32_t>(bytes, pos);
    const std::size_t cells = static_cast<std::size_t>(code.nrows) * static_cast<std::size_t>(code.ncols);
    std::uint8_t state = 1;
    for (std::uint32_t k = 0; k < nruns; ++k) {
        const auto len = detail::get_le<std::uint32_t>(bytes, pos);
        if (code.valid.size() + len > cells) fail("CorruptCode", "mask runs exceed grid size");
        code.valid.insert(code.valid.end(), len, state);
        state ^= 1;
    }
    if (code.valid.size() != cells) fail("CorruptCode", "mask runs do not cover the grid");
    if (pos != bytes.size()) fail("CorruptCode", "trailing bytes after mask");
    return code;
}

struct CodecReport {
    double compression_ratio = 0;
    double psnr_db = 0; ///< +infinity when the reconstruction is exact
    double encode_seconds = 0;
    int decode_iterations = 0;
    std::size_t encoded_bytes = 0;
    std::size_t raw_bytes = 0;
};

/// Ratio from serialized size against raw 16-bit storage; PSNR (peak 65535)
/// of the decoded fixed point against the quantized source on valid cells.
inline CodecReport codec_report(const DemGrid& grid, const FractalCode& code, const DecodeResult& decoded) {
    CodecReport rep;
    rep.raw_bytes = grid.size() * 2;
    rep.encoded_bytes = serialize(code).size();
    rep.compression_ratio = static_cast<double>(rep.raw_bytes) / static_cast<double>(rep.encoded_bytes);
    rep.decode_iterations = decoded.iterations;

    double zmin = 0, zmax = 0;
    const auto q = quantize_for_coding(grid, code.params, zmin, zmax);
    const int W = code.padded_cols();
    DemGrid a(grid.nrows, grid.ncols), b(grid.nrows, grid.ncols);
    for (int r = 0; r < grid.nrows; ++r)
        for (int c = 0; c < grid.ncols; ++c) {
            const auto i = grid.index(r, c);
            const bool ok = !grid.is_nodata(grid.cells[i]);
            a.cells[i] = ok ? q[static_cast<std::size_t>(r * W + c)] : a.nodata;
            b.cells[i] = ok ? decoded.quantized[i] : b.nodata;
        }
    rep.psnr_db = psnr(a, b, kQuantMax);
    return rep;
}

/// Encode, decode and report in one call.
inline CodecReport compress_and_report(const DemGrid& grid, const FractalParams& params = {},
                                       FractalCode* code_out = nullptr) {
    const auto t0 = std::chrono::steady_clock::now();
    auto code = encode(grid, params);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    auto rep = codec_report(grid, code, decode_detailed(code));
    rep.encode_seconds = secs;
    if (code_out) *code_out = std::move(code);
    return rep;
}

} // namespace demreg
