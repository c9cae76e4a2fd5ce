#pragma once

// Block-diagonal Fourier dictionary mapping f-k coefficients to antenna data.
//
// Every frequency shares the same L x N block with entries exp(i r_l k_n), so
// the LF x NF operator is never formed. Flat coefficient index is
// f * N + n (frequency-major); flat measurement index is f * L + l.

#include <cmath>
#include <complex>
#include <numbers>
#include <sstream>
#include <vector>

#include <Eigen/Dense>

#include "fkdiag/errors.hpp"
#include "fkdiag/grid.hpp"
#include "fkdiag/waveguide.hpp"

namespace fkdiag {

/// How atom correlations d_n . r are formed. LiteralTranspose drops the conjugate.
enum class InnerProduct { Hermitian, LiteralTranspose };

class BlockDictionary {
public:
    static BlockDictionary build(const WavenumberGrid& grid, const ArrayGeometry& array, std::vector<double> freqs,
                                 InnerProduct inner = InnerProduct::Hermitian) {
        grid.validate();
        array.validate();
        detail::require_config(!freqs.empty(), "dictionary needs at least one frequency");
        check_aliasing(grid, array);

        BlockDictionary d;
        d.grid_ = grid;
        d.ranges_ = array.ranges;
        d.freqs_ = std::move(freqs);
        d.inner_ = inner;
        const auto L = static_cast<Eigen::Index>(array.sensors());
        const auto N = static_cast<Eigen::Index>(grid.points);
        d.block_.resize(L, N);
        for (Eigen::Index n = 0; n < N; ++n) {
            const double k = grid.point(static_cast<std::size_t>(n));
            for (Eigen::Index l = 0; l < L; ++l) {
                d.block_(l, n) = std::polar(1.0, array.ranges[static_cast<std::size_t>(l)] * k);
            }
        }
        return d;
    }

    const Eigen::MatrixXcd& block() const noexcept { return block_; }
    const WavenumberGrid& grid() const noexcept { return grid_; }
    const std::vector<double>& freqs() const noexcept { return freqs_; }
    const std::vector<double>& ranges() const noexcept { return ranges_; }
    InnerProduct inner_product() const noexcept { return inner_; }

    Eigen::Index sensors() const noexcept { return block_.rows(); }
    Eigen::Index points() const noexcept { return block_.cols(); }
    Eigen::Index num_freqs() const noexcept { return static_cast<Eigen::Index>(freqs_.size()); }
    Eigen::Index atoms() const noexcept { return points() * num_freqs(); }
    Eigen::Index measurement_size() const noexcept { return sensors() * num_freqs(); }

    Eigen::Index freq_index(Eigen::Index flat) const noexcept { return flat / points(); }
    Eigen::Index grid_index(Eigen::Index flat) const noexcept { return flat % points(); }
    Eigen::Index flat_index(Eigen::Index f, Eigen::Index n) const noexcept { return f * points() + n; }

    /// d_n^H d_n; identical for every atom since entries are unit modulus.
    double atom_norm_sq() const noexcept { return static_cast<double>(sensors()); }

    Eigen::VectorXcd apply(const Eigen::VectorXcd& z) const {
        detail::require_dim(z.size() == atoms(), "apply: coefficient vector length must be N*F");
        Eigen::VectorXcd y(measurement_size());
        const Eigen::Index L = sensors();
        const Eigen::Index N = points();
        for (Eigen::Index f = 0; f < num_freqs(); ++f) {
            y.segment(f * L, L).noalias() = block_ * z.segment(f * N, N);
        }
        return y;
    }

    Eigen::VectorXcd adjoint_apply(const Eigen::VectorXcd& y) const {
        detail::require_dim(y.size() == measurement_size(), "adjoint_apply: measurement length must be L*F");
        Eigen::VectorXcd z(atoms());
        const Eigen::Index L = sensors();
        const Eigen::Index N = points();
        for (Eigen::Index f = 0; f < num_freqs(); ++f) {
            z.segment(f * N, N).noalias() = block_.adjoint() * y.segment(f * L, L);
        }
        return z;
    }

    /// Correlation of atom `flat` with the matching frequency block of a measurement-sized vector.
    std::complex<double> correlate(Eigen::Index flat, const Eigen::VectorXcd& v) const {
        const auto col = block_.col(grid_index(flat));
        const auto seg = v.segment(freq_index(flat) * sensors(), sensors());
        if (inner_ == InnerProduct::Hermitian) return col.dot(seg);  // conjugates col
        return col.transpose() * seg;
    }

    /// v += coef * d_flat.
    void add_atom(Eigen::Index flat, std::complex<double> coef, Eigen::VectorXcd& v) const {
        v.segment(freq_index(flat) * sensors(), sensors()) += coef * block_.col(grid_index(flat));
    }

    /// Dense LF x NF matrix; only for small instances (tests and oracles).
    Eigen::MatrixXcd dense() const {
        Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(measurement_size(), atoms());
        for (Eigen::Index f = 0; f < num_freqs(); ++f) {
            m.block(f * sensors(), f * points(), sensors(), points()) = block_;
        }
        return m;
    }

private:
    static void check_aliasing(const WavenumberGrid& grid, const ArrayGeometry& array) {
        if (array.sensors() < 2) return;
        const double spacing = array.ranges[1] - array.ranges[0];
        for (std::size_t l = 2; l < array.sensors(); ++l) {
            const double d = array.ranges[l] - array.ranges[l - 1];
            if (std::abs(d - spacing) > 1e-9 * spacing) return;  // non-uniform: no periodic aliasing
        }
        const double limit = 2.0 * std::numbers::pi / spacing;
        const double span = grid.k_max - grid.k_min;
        if (span > limit * (1.0 + 1e-12)) {
            std::ostringstream msg;
            msg << "wavenumber grid span " << span << " rad/m exceeds 2*pi/dr = " << limit
                << " rad/m for sensor spacing dr = " << spacing << " m (aliasing)";
            throw ConfigError(msg.str());
        }
    }

    WavenumberGrid grid_;
    std::vector<double> ranges_;
    std::vector<double> freqs_;
    InnerProduct inner_ = InnerProduct::Hermitian;
    Eigen::MatrixXcd block_;
};

/// Largest normalized cross-correlation max_{n != n'} |d_n^H d_n'| / L within a block.
inline double coherence(const BlockDictionary& dict) {
    const Eigen::MatrixXcd gram = dict.block().adjoint() * dict.block();
    const double L = dict.atom_norm_sq();
    double best = 0.0;
    for (Eigen::Index i = 0; i < gram.rows(); ++i) {
        for (Eigen::Index j = i + 1; j < gram.cols(); ++j) best = std::max(best, std::abs(gram(i, j)) / L);
    }
    return std::min(best, 1.0);
}

}  // namespace fkdiag
