#pragma once

// Counter-based random streams.
//
// Every stochastic operation takes an explicit seed; a stream is addressed by
// (seed, stream id) and the n-th draw is a pure function of (seed, id, n).
// Distributions are implemented here rather than with <random> so that
// outputs are bit-identical across standard library implementations.

#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <utility>

namespace fkdiag {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

/// Mix any number of 64-bit words into one key.
template <typename... Words>
constexpr std::uint64_t mix_seed(std::uint64_t seed, Words... words) noexcept {
    std::uint64_t key = splitmix64(seed);
    ((key = splitmix64(key ^ static_cast<std::uint64_t>(words))), ...);
    return key;
}

/// Counter-based generator: draw n returns splitmix64(key + n * golden).
/// Satisfies UniformRandomBitGenerator.
class CounterRng {
public:
    using result_type = std::uint64_t;

    explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0) noexcept
        : key_(mix_seed(seed, stream)) {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept {
        return splitmix64(key_ + (counter_++) * 0xD1B54A32D192ED03ull);
    }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    /// Uniform in (0, 1]; safe as a log argument.
    double uniform_open0() noexcept { return 1.0 - uniform(); }

    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    bool bernoulli(double p) noexcept { return uniform() < p; }

    /// Uniform integer in [0, n), n > 0 (Lemire's multiply-shift with rejection).
    std::uint64_t below(std::uint64_t n) noexcept {
        const std::uint64_t threshold = (0 - n) % n;
        for (;;) {
            const unsigned __int128 prod = static_cast<unsigned __int128>((*this)()) * n;
            if (static_cast<std::uint64_t>(prod) >= threshold) {
                return static_cast<std::uint64_t>(prod >> 64);
            }
        }
    }

    /// Standard normal via Box-Muller (no cached second value, so draws stay counter-addressable).
    double normal() noexcept {
        const double u1 = uniform_open0();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    /// Circular complex Gaussian with total variance `variance` (each part variance/2).
    std::complex<double> complex_normal(double variance) noexcept {
        const double u1 = uniform_open0();
        const double u2 = uniform();
        const double radius = std::sqrt(-variance * std::log(u1));
        const double phase = 2.0 * std::numbers::pi * u2;
        return {radius * std::cos(phase), radius * std::sin(phase)};
    }

    std::uint64_t counter() const noexcept { return counter_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

/// Fisher-Yates shuffle with a platform-independent draw sequence.
template <typename T>
void shuffle(std::span<T> values, CounterRng& rng) {
    for (std::size_t i = values.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.below(i));
        using std::swap;
        swap(values[i - 1], values[j]);
    }
}

inline double logistic(double x) noexcept {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

/// log(1 + exp(x)) without overflow.
inline double softplus(double x) noexcept {
    if (x > 0.0) return x + std::log1p(std::exp(-x));
    return std::log1p(std::exp(x));
}

inline double logit(double p) noexcept { return std::log(p) - std::log1p(-p); }

}  // namespace fkdiag
