#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <sstream>
#include <vector>

#include <Eigen/Dense>

#include "fkdiag/errors.hpp"

namespace fkdiag {

/// Uniform horizontal-wavenumber grid k_n = k_min + n (k_max - k_min) / (N - 1), shared by all frequencies.
struct WavenumberGrid {
    double k_min = 0.0;
    double k_max = 1.0;
    std::size_t points = 2;

    void validate() const {
        std::ostringstream msg;
        if (!(std::isfinite(k_min) && std::isfinite(k_max) && k_min < k_max)) {
            msg << "wavenumber grid needs k_min < k_max (got " << k_min << ", " << k_max << ")";
            throw ConfigError(msg.str());
        }
        if (points < 2) throw ConfigError("wavenumber grid needs at least 2 points");
    }

    double step() const noexcept { return (k_max - k_min) / static_cast<double>(points - 1); }

    double point(std::size_t n) const noexcept {
        return k_min + static_cast<double>(n) * step();
    }

    /// Index of the nearest grid point, or nullopt when k lies more than half a step outside the grid.
    std::optional<std::size_t> nearest(double k) const noexcept {
        const double pos = (k - k_min) / step();
        if (!(pos >= -0.5 && pos <= static_cast<double>(points - 1) + 0.5)) return std::nullopt;
        const double rounded = std::round(pos);
        if (rounded < 0.0) return 0;
        if (rounded > static_cast<double>(points - 1)) return points - 1;
        return static_cast<std::size_t>(rounded);
    }
};

/// Binary F x N support map, stored frequency-major (flat index = f * N + n).
class FkSupport {
public:
    FkSupport() = default;
    FkSupport(std::size_t num_freqs, std::size_t num_points)
        : num_freqs_(num_freqs), num_points_(num_points), bits_(num_freqs * num_points, 0) {}

    static FkSupport from_vector(const Eigen::VectorXd& s, std::size_t num_freqs, std::size_t num_points) {
        detail::require_dim(static_cast<std::size_t>(s.size()) == num_freqs * num_points,
                            "support vector length does not match F*N");
        FkSupport out(num_freqs, num_points);
        for (Eigen::Index i = 0; i < s.size(); ++i) out.bits_[static_cast<std::size_t>(i)] = s[i] > 0.5 ? 1 : 0;
        return out;
    }

    std::size_t num_freqs() const noexcept { return num_freqs_; }
    std::size_t num_points() const noexcept { return num_points_; }
    std::size_t size() const noexcept { return bits_.size(); }

    bool operator()(std::size_t f, std::size_t n) const { return bits_[f * num_points_ + n] != 0; }
    void set(std::size_t f, std::size_t n, bool v = true) { bits_[f * num_points_ + n] = v ? 1 : 0; }

    bool flat(std::size_t i) const { return bits_[i] != 0; }

    std::size_t row_sum(std::size_t f) const {
        std::size_t total = 0;
        for (std::size_t n = 0; n < num_points_; ++n) total += bits_[f * num_points_ + n];
        return total;
    }

    std::size_t count() const {
        std::size_t total = 0;
        for (auto b : bits_) total += b;
        return total;
    }

    Eigen::VectorXd as_vector() const {
        Eigen::VectorXd v(static_cast<Eigen::Index>(bits_.size()));
        for (std::size_t i = 0; i < bits_.size(); ++i) v[static_cast<Eigen::Index>(i)] = bits_[i];
        return v;
    }

    const std::vector<std::uint8_t>& bits() const noexcept { return bits_; }

    friend bool operator==(const FkSupport&, const FkSupport&) = default;

private:
    std::size_t num_freqs_ = 0;
    std::size_t num_points_ = 0;
    std::vector<std::uint8_t> bits_;
};

}  // namespace fkdiag
