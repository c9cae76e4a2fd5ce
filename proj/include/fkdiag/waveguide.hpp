#pragma once

// Modal propagation in range-independent shallow-water waveguides.
//
// Two environments are supported: an ideal guide (pressure-release surface,
// rigid bottom) with closed-form wavenumbers, and the Pekeris guide (fluid
// layer over a fluid half-space) whose trapped modes are roots of a
// transcendental dispersion relation.

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fkdiag/errors.hpp"
#include "fkdiag/grid.hpp"
#include "fkdiag/random.hpp"

namespace fkdiag {

enum class WaveguideKind { Ideal, Pekeris };

struct EnvironmentSpec {
    WaveguideKind kind = WaveguideKind::Pekeris;
    double depth = 100.0;             // m
    double water_speed = 1500.0;      // m/s
    double bottom_speed = 1600.0;     // m/s, Pekeris only
    double water_density = 1000.0;    // kg/m^3
    double bottom_density = 1500.0;   // kg/m^3

    void validate() const {
        using detail::require_config;
        require_config(depth > 0.0 && std::isfinite(depth), "environment depth must be > 0");
        require_config(water_speed > 0.0 && std::isfinite(water_speed), "water sound speed must be > 0");
        require_config(water_density > 0.0 && bottom_density > 0.0, "densities must be > 0");
        if (kind == WaveguideKind::Pekeris) {
            std::ostringstream msg;
            msg << "Pekeris guide needs bottom_speed > water_speed for trapped modes (c1=" << water_speed
                << ", c2=" << bottom_speed << ")";
            require_config(bottom_speed > water_speed && std::isfinite(bottom_speed), msg.str());
        }
    }
};

struct SourceSpec {
    std::vector<std::complex<double>> spectrum;  // S(f), one entry per frequency
    double depth = 50.0;                         // m
    double scale = 1.0;                          // Q
};

struct ArrayGeometry {
    std::vector<double> ranges;  // m, strictly increasing
    double receiver_depth = 50.0;

    std::size_t sensors() const noexcept { return ranges.size(); }

    void validate() const {
        using detail::require_config;
        require_config(!ranges.empty(), "array needs at least one sensor");
        require_config(ranges.front() > 0.0, "sensor ranges must be > 0");
        for (std::size_t i = 1; i < ranges.size(); ++i) {
            require_config(ranges[i] > ranges[i - 1], "sensor ranges must be strictly increasing");
        }
    }

    static ArrayGeometry uniform(double first, double spacing, std::size_t count, double receiver_depth) {
        ArrayGeometry a;
        a.receiver_depth = receiver_depth;
        a.ranges.reserve(count);
        for (std::size_t l = 0; l < count; ++l) a.ranges.push_back(first + spacing * static_cast<double>(l));
        return a;
    }
};

struct Mode {
    double wavenumber = 0.0;  // rad/m
    std::complex<double> amplitude;
};

/// Modes per frequency; modes[f] is sorted by decreasing wavenumber.
using ModeSet = std::vector<std::vector<Mode>>;

/// Antenna measurement y, frequency-major blocks of length L.
struct Measurement {
    Eigen::VectorXcd y;
    std::vector<double> freqs;
    std::vector<double> ranges;
    double noise_variance = 0.0;

    std::size_t sensors() const noexcept { return ranges.size(); }
    std::size_t num_freqs() const noexcept { return freqs.size(); }
};

inline double acoustic_wavenumber(double f, double speed) noexcept {
    return 2.0 * std::numbers::pi * f / speed;
}

/// Closed-form wavenumbers of the ideal guide: k_rm = sqrt(k^2 - ((m - 1/2) pi / D)^2), descending.
inline std::vector<double> ideal_wavenumbers(const EnvironmentSpec& env, double f) {
    env.validate();
    if (!(f > 0.0)) throw DomainError("frequency must be > 0");
    const double k = acoustic_wavenumber(f, env.water_speed);
    std::vector<double> out;
    for (int m = 1;; ++m) {
        const double gamma = (m - 0.5) * std::numbers::pi / env.depth;
        if (!(gamma < k)) break;
        out.push_back(std::sqrt((k - gamma) * (k + gamma)));
    }
    return out;
}

/// Scaled Pekeris dispersion residual tan(g1 D) rho1 g2 + rho2 g1 at horizontal wavenumber kr.
inline double pekeris_residual(const EnvironmentSpec& env, double f, double kr) {
    const double k1 = acoustic_wavenumber(f, env.water_speed);
    const double k2 = acoustic_wavenumber(f, env.bottom_speed);
    const double g1 = std::sqrt(k1 * k1 - kr * kr);
    const double g2 = std::sqrt(kr * kr - k2 * k2);
    return std::tan(g1 * env.depth) * env.water_density * g2 + env.bottom_density * g1;
}

/// Trapped-mode wavenumbers of the Pekeris guide, descending.
///
/// With g = sqrt(k1^2 - kr^2) the function tan(gD) + rho2 g / (rho1 sqrt(gmax^2 - g^2)) is
/// increasing on every branch of tan and runs from -inf to +inf, so each branch
/// ((j - 1/2) pi / D, (j + 1/2) pi / D) clipped to (0, gmax), j >= 1, holds exactly one root.
/// Each root is bisected in g until the bracket cannot shrink further.
inline std::vector<double> pekeris_wavenumbers(const EnvironmentSpec& env, double f) {
    if (env.kind != WaveguideKind::Pekeris) throw ConfigError("pekeris_wavenumbers needs a Pekeris environment");
    env.validate();
    if (!(f > 0.0)) throw DomainError("frequency must be > 0");

    const double k1 = acoustic_wavenumber(f, env.water_speed);
    const double k2 = acoustic_wavenumber(f, env.bottom_speed);
    const double gmax_sq = (k1 - k2) * (k1 + k2);
    const double gmax = std::sqrt(gmax_sq);
    const double density_ratio = env.bottom_density / env.water_density;
    const double D = env.depth;

    auto branch_fn = [&](double g) {
        return std::tan(g * D) + density_ratio * g / std::sqrt(gmax_sq - g * g);
    };

    std::vector<double> out;
    for (int j = 1;; ++j) {
        const double lo = (j - 0.5) * std::numbers::pi / D;
        if (!(lo < gmax)) break;
        const double hi = std::min((j + 0.5) * std::numbers::pi / D, gmax);
        double a = lo;
        double b = hi;
        for (int iter = 0; iter < 2000; ++iter) {
            const double mid = 0.5 * (a + b);
            if (mid <= a || mid >= b) break;
            const double v = branch_fn(mid);
            if (v < 0.0) {
                a = mid;
            } else {
                b = mid;
            }
        }
        const double g = 0.5 * (a + b);
        const double kr = std::sqrt(k1 * k1 - g * g);
        // Bisection endpoints are open; reject a root that collapsed onto the bracket edge.
        if (kr > k2 && kr < k1) out.push_back(kr);
    }
    return out;
}

inline std::vector<double> modal_wavenumbers(const EnvironmentSpec& env, double f) {
    return env.kind == WaveguideKind::Ideal ? ideal_wavenumbers(env, f) : pekeris_wavenumbers(env, f);
}

/// A_m = sin(g_m zs) sin(g_m zr) / sqrt(k_rm), g_m the vertical wavenumber in the water layer.
inline std::vector<std::complex<double>> mode_amplitudes(const EnvironmentSpec& env, double f, double zs, double zr,
                                                         const std::vector<double>& mode_k) {
    if (!(zs > 0.0 && zs < env.depth && zr > 0.0 && zr < env.depth)) {
        throw DomainError("source and receiver depths must lie strictly inside the water column");
    }
    const double k1 = acoustic_wavenumber(f, env.water_speed);
    std::vector<std::complex<double>> out;
    out.reserve(mode_k.size());
    for (double kr : mode_k) {
        if (!(kr > 0.0)) throw DomainError("modal wavenumber must be > 0");
        const double g = std::sqrt(std::max(0.0, (k1 - kr) * (k1 + kr)));
        out.emplace_back(std::sin(g * zs) * std::sin(g * zr) / std::sqrt(kr), 0.0);
    }
    return out;
}

inline ModeSet compute_modes(const EnvironmentSpec& env, double source_depth, double receiver_depth,
                             const std::vector<double>& freqs) {
    ModeSet modes(freqs.size());
    for (std::size_t fi = 0; fi < freqs.size(); ++fi) {
        const auto ks = modal_wavenumbers(env, freqs[fi]);
        const auto amps = mode_amplitudes(env, freqs[fi], source_depth, receiver_depth, ks);
        modes[fi].reserve(ks.size());
        for (std::size_t m = 0; m < ks.size(); ++m) modes[fi].push_back({ks[m], amps[m]});
    }
    return modes;
}

/// Q S(f) sum_m A_m exp(i r_l k_m) + w, with w ~ CN(0, noise_variance) drawn from stream (seed, 0).
inline Measurement synthesize_field(const ModeSet& modes, const SourceSpec& source, const ArrayGeometry& array,
                                    const std::vector<double>& freqs, double noise_variance, std::uint64_t seed) {
    array.validate();
    detail::require_dim(modes.size() == freqs.size(), "mode set and frequency axis differ in length");
    detail::require_dim(source.spectrum.size() == freqs.size(), "source spectrum length must equal frequency count");
    if (!(noise_variance >= 0.0)) throw DomainError("noise variance must be >= 0");

    const std::size_t L = array.sensors();
    const std::size_t F = freqs.size();
    Measurement out;
    out.freqs = freqs;
    out.ranges = array.ranges;
    out.noise_variance = noise_variance;
    out.y = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(L * F));

    for (std::size_t fi = 0; fi < F; ++fi) {
        const std::complex<double> gain = source.scale * source.spectrum[fi];
        for (std::size_t l = 0; l < L; ++l) {
            std::complex<double> acc = 0.0;
            for (const auto& mode : modes[fi]) {
                acc += mode.amplitude * std::polar(1.0, array.ranges[l] * mode.wavenumber);
            }
            out.y[static_cast<Eigen::Index>(fi * L + l)] = gain * acc;
        }
    }
    if (noise_variance > 0.0) {
        CounterRng rng(seed, 0);
        for (Eigen::Index i = 0; i < out.y.size(); ++i) out.y[i] += rng.complex_normal(noise_variance);
    }
    return out;
}

inline Measurement simulate_field(const EnvironmentSpec& env, const SourceSpec& source, const ArrayGeometry& array,
                                  const std::vector<double>& freqs, double noise_variance, std::uint64_t seed) {
    env.validate();
    if (!(source.depth > 0.0 && source.depth < env.depth)) throw ConfigError("source depth must lie in (0, D)");
    const auto modes = compute_modes(env, source.depth, array.receiver_depth, freqs);
    return synthesize_field(modes, source, array, freqs, noise_variance, seed);
}

/// Noise variance giving 10 log10(||y0||^2 / (L F sigma^2)) = snr_db.
inline double noise_variance_for_snr(const Eigen::VectorXcd& noiseless, double snr_db) {
    const double power = noiseless.squaredNorm() / static_cast<double>(noiseless.size());
    return power / std::pow(10.0, snr_db / 10.0);
}

inline FkSupport support_from_modes(const ModeSet& modes, const WavenumberGrid& grid,
                                    const std::vector<double>& freqs) {
    grid.validate();
    FkSupport s(modes.size(), grid.points);
    for (std::size_t fi = 0; fi < modes.size(); ++fi) {
        for (std::size_t m = 0; m < modes[fi].size(); ++m) {
            const auto bin = grid.nearest(modes[fi][m].wavenumber);
            if (!bin) {
                std::ostringstream msg;
                msg << "mode " << (m + 1) << " at f=" << freqs[fi] << " Hz (k=" << modes[fi][m].wavenumber
                    << " rad/m) lies outside the wavenumber grid [" << grid.k_min << ", " << grid.k_max << "]";
                throw ConfigError(msg.str());
            }
            s.set(fi, *bin);
        }
    }
    return s;
}

/// Entry (f, n) is set iff some modal wavenumber at f is nearest to grid point n.
inline FkSupport true_support(const EnvironmentSpec& env, const std::vector<double>& freqs,
                              const WavenumberGrid& grid) {
    ModeSet modes(freqs.size());
    for (std::size_t fi = 0; fi < freqs.size(); ++fi) {
        for (double k : modal_wavenumbers(env, freqs[fi])) modes[fi].push_back({k, {}});
    }
    return support_from_modes(modes, grid, freqs);
}

/// Grid coefficients z for the noiseless field: each mode's Q S(f) A_m added to its nearest bin.
inline Eigen::VectorXcd grid_coefficients(const ModeSet& modes, const SourceSpec& source, const WavenumberGrid& grid) {
    const std::size_t N = grid.points;
    Eigen::VectorXcd z = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(N * modes.size()));
    for (std::size_t fi = 0; fi < modes.size(); ++fi) {
        for (const auto& mode : modes[fi]) {
            const auto bin = grid.nearest(mode.wavenumber);
            if (!bin) throw ConfigError("mode outside wavenumber grid");
            z[static_cast<Eigen::Index>(fi * N + *bin)] += source.scale * source.spectrum[fi] * mode.amplitude;
        }
    }
    return z;
}

}  // namespace fkdiag
