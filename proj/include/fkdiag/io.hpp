#pragma once

// File formats. All binaries are little-endian with a 4-byte magic and a u32 version.
//
//   Complex block file ("FKMS" measurement, "FKZH" f-k coefficients):
//     magic, u32 version, u64 block_len, u64 F, f64 scalar, f64[F] freqs,
//     f64[block_len] axis, then block_len*F complex values as interleaved (re, im) f64,
//     frequency-major. For measurements block_len = L, axis = sensor ranges and
//     scalar = noise variance; for coefficients block_len = N, axis = grid wavenumbers
//     and scalar = 0.
//
//   Support bitmap ("FKSB"): magic, u32 version, u64 N, u64 F, f64 k_min, f64 k_max,
//     ceil(NF/8) bytes, bit i of the flat index stored at byte i/8, bit i%8 (LSB first).
//
//   Support dataset ("SUPP"): magic, u32 version, u64 count, u64 NF, u64 N, u64 F,
//     f64 k_min, f64 k_max, u64 provenance length + bytes, then count packed rows of
//     ceil(NF/8) bytes each (same bit order as FKSB).

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "fkdiag/binary_io.hpp"
#include "fkdiag/errors.hpp"
#include "fkdiag/grid.hpp"
#include "fkdiag/rbm.hpp"
#include "fkdiag/waveguide.hpp"

namespace fkdiag {

inline constexpr std::uint32_t kFileFormatVersion = 1;

/// Complex values laid out in F blocks of equal length, with the axis of each block.
struct ComplexBlockFile {
    Eigen::VectorXcd values;
    std::vector<double> freqs;
    std::vector<double> axis;
    double scalar = 0.0;
};

namespace detail {

inline void write_complex_blocks(const std::string& path, std::string_view magic, const ComplexBlockFile& f) {
    require_dim(static_cast<std::size_t>(f.values.size()) == f.axis.size() * f.freqs.size(),
                "complex block file: value count differs from axis length * frequency count");
    BinaryWriter out(path);
    out.magic(magic);
    out.u32(kFileFormatVersion);
    out.u64(f.axis.size());
    out.u64(f.freqs.size());
    out.f64(f.scalar);
    for (double v : f.freqs) out.f64(v);
    for (double v : f.axis) out.f64(v);
    for (Eigen::Index i = 0; i < f.values.size(); ++i) {
        out.f64(f.values[i].real());
        out.f64(f.values[i].imag());
    }
    out.finish();
}

inline ComplexBlockFile read_complex_blocks(const std::string& path, std::string_view magic) {
    BinaryReader in(path);
    in.expect_magic(magic);
    in.expect_version(kFileFormatVersion);
    const auto block = in.u64();
    const auto nf = in.u64();
    if (block == 0 || nf == 0 || block > (1u << 24) || nf > (1u << 24) || block * nf > (1u << 28)) {
        throw IoError(path + ": implausible header dimensions");
    }
    ComplexBlockFile f;
    f.scalar = in.f64();
    f.freqs.resize(nf);
    for (auto& v : f.freqs) v = in.f64();
    f.axis.resize(block);
    for (auto& v : f.axis) v = in.f64();
    f.values.resize(static_cast<Eigen::Index>(block * nf));
    for (Eigen::Index i = 0; i < f.values.size(); ++i) {
        const double re = in.f64();
        const double im = in.f64();
        f.values[i] = {re, im};
    }
    in.expect_end();
    return f;
}

inline std::vector<std::uint8_t> pack_bits(const std::vector<std::uint8_t>& bits) {
    std::vector<std::uint8_t> packed((bits.size() + 7) / 8, 0);
    for (std::size_t i = 0; i < bits.size(); ++i) {
        if (bits[i]) packed[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
    }
    return packed;
}

inline bool packed_bit(const std::vector<std::uint8_t>& packed, std::size_t i) {
    return (packed[i / 8] >> (i % 8)) & 1u;
}

/// 17 significant digits, enough for a lossless round trip.
inline void write_double(std::ostream& os, double v) {
    os << std::setprecision(17) << v;
}

}  // namespace detail

inline void save_measurement(const Measurement& m, const std::string& path) {
    detail::write_complex_blocks(path, "FKMS", {m.y, m.freqs, m.ranges, m.noise_variance});
}

inline Measurement load_measurement(const std::string& path) {
    auto f = detail::read_complex_blocks(path, "FKMS");
    Measurement m;
    m.y = std::move(f.values);
    m.freqs = std::move(f.freqs);
    m.ranges = std::move(f.axis);
    m.noise_variance = f.scalar;
    return m;
}

/// f-k coefficients (estimated or true) on a wavenumber grid.
struct FkField {
    Eigen::VectorXcd z;  // frequency-major, length N*F
    std::vector<double> freqs;
    WavenumberGrid grid;
};

inline void save_fk_field(const FkField& field, const std::string& path) {
    std::vector<double> axis(field.grid.points);
    for (std::size_t n = 0; n < axis.size(); ++n) axis[n] = field.grid.point(n);
    detail::write_complex_blocks(path, "FKZH", {field.z, field.freqs, axis, 0.0});
}

inline FkField load_fk_field(const std::string& path) {
    auto f = detail::read_complex_blocks(path, "FKZH");
    if (f.axis.size() < 2) throw IoError(path + ": wavenumber axis needs at least 2 points");
    FkField out;
    out.z = std::move(f.values);
    out.freqs = std::move(f.freqs);
    out.grid = {f.axis.front(), f.axis.back(), f.axis.size()};
    return out;
}

struct SupportFile {
    FkSupport support;
    WavenumberGrid grid;
};

inline void save_support(const FkSupport& s, const WavenumberGrid& grid, const std::string& path) {
    detail::require_dim(s.num_points() == grid.points, "support width differs from grid size");
    detail::BinaryWriter out(path);
    out.magic("FKSB");
    out.u32(kFileFormatVersion);
    out.u64(s.num_points());
    out.u64(s.num_freqs());
    out.f64(grid.k_min);
    out.f64(grid.k_max);
    const auto packed = detail::pack_bits(s.bits());
    out.bytes(packed.data(), packed.size());
    out.finish();
}

inline SupportFile load_support(const std::string& path) {
    detail::BinaryReader in(path);
    in.expect_magic("FKSB");
    in.expect_version(kFileFormatVersion);
    const auto n = in.u64();
    const auto f = in.u64();
    if (n < 2 || f == 0 || n * f > (1u << 28)) throw IoError(path + ": implausible support dimensions");
    SupportFile out;
    out.grid.points = n;
    out.grid.k_min = in.f64();
    out.grid.k_max = in.f64();
    std::vector<std::uint8_t> packed((n * f + 7) / 8);
    in.bytes(packed.data(), packed.size());
    in.expect_end();
    out.support = FkSupport(f, n);
    for (std::size_t i = 0; i < n * f; ++i) out.support.set(i / n, i % n, detail::packed_bit(packed, i));
    return out;
}

inline void save_dataset(const SupportDataset& d, const std::string& path) {
    detail::require_dim(d.num_points * d.num_freqs == static_cast<std::size_t>(d.visible()),
                        "dataset N*F differs from row width");
    detail::BinaryWriter out(path);
    out.magic("SUPP");
    out.u32(kFileFormatVersion);
    out.u64(static_cast<std::uint64_t>(d.count()));
    out.u64(static_cast<std::uint64_t>(d.visible()));
    out.u64(d.num_points);
    out.u64(d.num_freqs);
    out.f64(d.k_min);
    out.f64(d.k_max);
    out.string(d.provenance);
    std::vector<std::uint8_t> row(static_cast<std::size_t>(d.visible()));
    for (Eigen::Index r = 0; r < d.count(); ++r) {
        for (Eigen::Index c = 0; c < d.visible(); ++c) row[static_cast<std::size_t>(c)] = d.bits(r, c);
        const auto packed = detail::pack_bits(row);
        out.bytes(packed.data(), packed.size());
    }
    out.finish();
}

inline SupportDataset load_dataset(const std::string& path) {
    detail::BinaryReader in(path);
    in.expect_magic("SUPP");
    in.expect_version(kFileFormatVersion);
    const auto count = in.u64();
    const auto nf = in.u64();
    SupportDataset d;
    d.num_points = in.u64();
    d.num_freqs = in.u64();
    if (nf == 0 || d.num_points * d.num_freqs != nf || count > (1u << 26) || nf > (1u << 24)) {
        throw IoError(path + ": inconsistent dataset header");
    }
    d.k_min = in.f64();
    d.k_max = in.f64();
    d.provenance = in.string();
    d.bits.resize(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(nf));
    std::vector<std::uint8_t> packed((nf + 7) / 8);
    for (Eigen::Index r = 0; r < d.count(); ++r) {
        in.bytes(packed.data(), packed.size());
        for (std::size_t c = 0; c < nf; ++c) d.bits(r, static_cast<Eigen::Index>(c)) = detail::packed_bit(packed, c);
    }
    in.expect_end();
    return d;
}

// ---------------------------------------------------------------------------
// CSV exports

inline void write_measurement_csv(std::ostream& os, const Measurement& m) {
    os << "freq_index,freq_hz,sensor_index,range_m,re,im\n";
    const std::size_t L = m.sensors();
    for (std::size_t f = 0; f < m.num_freqs(); ++f) {
        for (std::size_t l = 0; l < L; ++l) {
            const auto v = m.y[static_cast<Eigen::Index>(f * L + l)];
            os << f << ',';
            detail::write_double(os, m.freqs[f]);
            os << ',' << l << ',';
            detail::write_double(os, m.ranges[l]);
            os << ',';
            detail::write_double(os, v.real());
            os << ',';
            detail::write_double(os, v.imag());
            os << '\n';
        }
    }
}

inline void write_fk_field_csv(std::ostream& os, const FkField& field) {
    os << "freq_index,freq_hz,k_index,k_rad_per_m,re,im,abs\n";
    const std::size_t N = field.grid.points;
    for (std::size_t f = 0; f < field.freqs.size(); ++f) {
        for (std::size_t n = 0; n < N; ++n) {
            const auto v = field.z[static_cast<Eigen::Index>(f * N + n)];
            os << f << ',';
            detail::write_double(os, field.freqs[f]);
            os << ',' << n << ',';
            detail::write_double(os, field.grid.point(n));
            os << ',';
            detail::write_double(os, v.real());
            os << ',';
            detail::write_double(os, v.imag());
            os << ',';
            detail::write_double(os, std::abs(v));
            os << '\n';
        }
    }
}

/// One row per frequency, N comma-separated 0/1 columns.
inline void write_support_csv(std::ostream& os, const FkSupport& s) {
    for (std::size_t f = 0; f < s.num_freqs(); ++f) {
        for (std::size_t n = 0; n < s.num_points(); ++n) os << (n ? "," : "") << (s(f, n) ? 1 : 0);
        os << '\n';
    }
}

/// One row per sample, NF comma-separated 0/1 columns (frequency-major).
inline void write_dataset_csv(std::ostream& os, const SupportDataset& d) {
    for (Eigen::Index r = 0; r < d.count(); ++r) {
        for (Eigen::Index c = 0; c < d.visible(); ++c) os << (c ? "," : "") << static_cast<int>(d.bits(r, c));
        os << '\n';
    }
}

inline void write_training_log_csv(std::ostream& os, const std::vector<EpochLog>& log) {
    os << "epoch,reconstruction_error,kl_exact_or_nan\n";
    for (const auto& e : log) {
        os << e.epoch << ',';
        detail::write_double(os, e.reconstruction_error);
        os << ',';
        if (std::isnan(e.kl_exact)) {
            os << "nan";
        } else {
            detail::write_double(os, e.kl_exact);
        }
        os << '\n';
    }
}

// ---------------------------------------------------------------------------
// Rendering

enum class RenderScale { Linear, Decibel };

/// 8-bit pixel levels for an F x N magnitude map (row = frequency ascending).
/// Linear: round(255 v / vmax). Decibel: round(255 (1 + 20 log10(v / vmax) / range_db)),
/// clipped to [0, 255]; zero magnitudes map to 0 in both modes.
inline std::vector<std::uint8_t> render_levels(const Eigen::MatrixXd& magnitude, RenderScale scale,
                                               double dynamic_range_db = 40.0) {
    if (!(dynamic_range_db > 0.0)) throw ConfigError("render dynamic range must be > 0 dB");
    const double vmax = magnitude.size() ? magnitude.maxCoeff() : 0.0;
    std::vector<std::uint8_t> px(static_cast<std::size_t>(magnitude.size()), 0);
    if (!(vmax > 0.0)) return px;
    for (Eigen::Index r = 0; r < magnitude.rows(); ++r) {
        for (Eigen::Index c = 0; c < magnitude.cols(); ++c) {
            const double v = magnitude(r, c);
            double level = 0.0;
            if (v > 0.0) {
                level = scale == RenderScale::Linear ? 255.0 * v / vmax
                                                     : 255.0 * (1.0 + 20.0 * std::log10(v / vmax) / dynamic_range_db);
            }
            px[static_cast<std::size_t>(r * magnitude.cols() + c)] =
                static_cast<std::uint8_t>(std::lround(std::clamp(level, 0.0, 255.0)));
        }
    }
    return px;
}

/// Binary portable graymap (P5), width = N, height = F.
inline void write_pgm(const std::string& path, const std::vector<std::uint8_t>& levels, std::size_t width,
                      std::size_t height) {
    detail::require_dim(levels.size() == width * height, "pgm: pixel count differs from width * height");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << "P5\n" << width << ' ' << height << "\n255\n";
    out.write(reinterpret_cast<const char*>(levels.data()), static_cast<std::streamsize>(levels.size()));
    if (!out) throw IoError("write failed: " + path);
}

inline void write_magnitude_csv(std::ostream& os, const Eigen::MatrixXd& magnitude) {
    for (Eigen::Index r = 0; r < magnitude.rows(); ++r) {
        for (Eigen::Index c = 0; c < magnitude.cols(); ++c) {
            if (c) os << ',';
            detail::write_double(os, magnitude(r, c));
        }
        os << '\n';
    }
}

}  // namespace fkdiag
