#pragma once

// Recovery metrics, the exhaustive MAP support oracle, training-set generation
// and run aggregation.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include <Eigen/Dense>

#include "fkdiag/dictionary.hpp"
#include "fkdiag/errors.hpp"
#include "fkdiag/grid.hpp"
#include "fkdiag/pursuit.hpp"
#include "fkdiag/random.hpp"
#include "fkdiag/rbm.hpp"
#include "fkdiag/waveguide.hpp"

namespace fkdiag {

struct RecoveryMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t hamming = 0;
    // ±1 bin (same frequency row) tolerant variants
    double tolerant_precision = 0.0;
    double tolerant_recall = 0.0;
    double tolerant_f1 = 0.0;
    double nmse = std::numeric_limits<double>::quiet_NaN();
    double wavenumber_error = std::numeric_limits<double>::quiet_NaN();  // rad/m, matched modes only
};

namespace detail {

inline double harmonic_f1(double p, double r) noexcept { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

/// Ratio with the convention 0/0 = 1 (nothing to find / nothing claimed).
inline double ratio_or_one(std::size_t num, std::size_t den) noexcept {
    return den == 0 ? 1.0 : static_cast<double>(num) / static_cast<double>(den);
}

inline bool has_neighbour(const FkSupport& s, std::size_t f, std::size_t n) {
    const std::size_t lo = n == 0 ? 0 : n - 1;
    const std::size_t hi = std::min(n + 1, s.num_points() - 1);
    for (std::size_t j = lo; j <= hi; ++j) {
        if (s(f, j)) return true;
    }
    return false;
}

}  // namespace detail

/// Confusion-matrix metrics of an estimated support against the truth.
/// With no estimated positives precision is 0 unless the truth is empty too.
inline RecoveryMetrics support_metrics(const FkSupport& estimate, const FkSupport& truth,
                                       const WavenumberGrid* grid = nullptr) {
    detail::require_dim(estimate.num_freqs() == truth.num_freqs() && estimate.num_points() == truth.num_points(),
                        "support_metrics: supports have different shapes");
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const bool e = estimate.flat(i);
        const bool t = truth.flat(i);
        tp += e && t;
        fp += e && !t;
        fn += !e && t;
    }
    RecoveryMetrics m;
    m.hamming = fp + fn;
    const std::size_t n_est = tp + fp;
    const std::size_t n_true = tp + fn;
    m.precision = n_est == 0 ? (n_true == 0 ? 1.0 : 0.0) : static_cast<double>(tp) / static_cast<double>(n_est);
    m.recall = detail::ratio_or_one(tp, n_true);
    m.f1 = n_est == 0 && n_true == 0 ? 1.0 : detail::harmonic_f1(m.precision, m.recall);

    std::size_t est_near = 0, true_near = 0;
    double k_err = 0.0;
    std::size_t matched = 0;
    for (std::size_t f = 0; f < truth.num_freqs(); ++f) {
        for (std::size_t n = 0; n < truth.num_points(); ++n) {
            if (estimate(f, n) && detail::has_neighbour(truth, f, n)) ++est_near;
            if (truth(f, n) && detail::has_neighbour(estimate, f, n)) {
                ++true_near;
                if (grid != nullptr) {
                    // nearest estimated bin, preferring the exact bin
                    std::size_t best = n;
                    if (!estimate(f, n)) best = (n > 0 && estimate(f, n - 1)) ? n - 1 : n + 1;
                    k_err += std::abs(grid->point(best) - grid->point(n));
                    ++matched;
                }
            }
        }
    }
    m.tolerant_precision =
        n_est == 0 ? (n_true == 0 ? 1.0 : 0.0) : static_cast<double>(est_near) / static_cast<double>(n_est);
    m.tolerant_recall = detail::ratio_or_one(true_near, n_true);
    m.tolerant_f1 = n_est == 0 && n_true == 0 ? 1.0 : detail::harmonic_f1(m.tolerant_precision, m.tolerant_recall);
    if (matched > 0) m.wavenumber_error = k_err / static_cast<double>(matched);
    return m;
}

/// ||z_hat - z||² / ||z||²; zero iff the vectors are equal, +inf when z = 0 but z_hat != 0.
inline double nmse(const Eigen::VectorXcd& z_hat, const Eigen::VectorXcd& z_true) {
    detail::require_dim(z_hat.size() == z_true.size(), "nmse: length mismatch");
    const double err = (z_hat - z_true).squaredNorm();
    const double ref = z_true.squaredNorm();
    if (ref == 0.0) return err == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    return err / ref;
}

// ---------------------------------------------------------------------------
// Exhaustive MAP oracle

/// log CN(y; 0, σ_w² I + σ_x² D_s D_s^H), one L x L block per frequency, via the
/// determinant lemma and Woodbury identity on the k x k Gram of active atoms.
inline double log_likelihood_blocked(const Eigen::VectorXcd& y, const BlockDictionary& dict,
                                     const Eigen::VectorXd& s, const ModelHyper& hyper) {
    const Eigen::Index L = dict.sensors();
    const Eigen::Index N = dict.points();
    const double sw = hyper.sigma_w_sq;
    const double sx = hyper.sigma_x_sq;
    double total = 0.0;
    std::vector<Eigen::Index> active;
    for (Eigen::Index f = 0; f < dict.num_freqs(); ++f) {
        const Eigen::VectorXcd yf = y.segment(f * L, L);
        active.clear();
        for (Eigen::Index n = 0; n < N; ++n) {
            if (s[f * N + n] > 0.5) active.push_back(n);
        }
        double quad = yf.squaredNorm() / sw;
        double logdet = static_cast<double>(L) * std::log(sw);
        if (!active.empty()) {
            const auto k = static_cast<Eigen::Index>(active.size());
            Eigen::MatrixXcd Da(L, k);
            for (Eigen::Index j = 0; j < k; ++j) Da.col(j) = dict.block().col(active[static_cast<std::size_t>(j)]);
            Eigen::MatrixXcd M = Da.adjoint() * Da;
            M.diagonal().array() += sw / sx;
            const Eigen::LLT<Eigen::MatrixXcd> chol(M);
            const Eigen::VectorXcd proj = Da.adjoint() * yf;
            quad -= proj.dot(chol.solve(proj)).real() / sw;
            const Eigen::MatrixXcd Lf = chol.matrixL();
            double ld = 0.0;
            for (Eigen::Index j = 0; j < k; ++j) ld += 2.0 * std::log(Lf(j, j).real());
            logdet += ld + static_cast<double>(k) * std::log(sx / sw);
        }
        total += -static_cast<double>(L) * std::log(std::numbers::pi) - logdet - quad;
    }
    return total;
}

/// Same likelihood from the full LF x LF covariance (test oracle).
inline double log_likelihood_dense(const Eigen::VectorXcd& y, const BlockDictionary& dict, const Eigen::VectorXd& s,
                                   const ModelHyper& hyper) {
    const Eigen::MatrixXcd D = dict.dense();
    Eigen::MatrixXcd Ds = D * s.cast<std::complex<double>>().asDiagonal();
    Eigen::MatrixXcd C = hyper.sigma_x_sq * Ds * Ds.adjoint();
    C.diagonal().array() += hyper.sigma_w_sq;
    const Eigen::LLT<Eigen::MatrixXcd> chol(C);
    const Eigen::MatrixXcd Lc = chol.matrixL();
    double logdet = 0.0;
    for (Eigen::Index i = 0; i < Lc.rows(); ++i) logdet += 2.0 * std::log(Lc(i, i).real());
    const double quad = y.dot(chol.solve(y)).real();
    return -static_cast<double>(y.size()) * std::log(std::numbers::pi) - logdet - quad;
}

/// log p(y | s) + log p(s) up to a constant independent of s.
inline double log_posterior_unnormalized(const Eigen::VectorXcd& y, const BlockDictionary& dict,
                                         const RbmParams& prior, const ModelHyper& hyper, const Eigen::VectorXd& s) {
    return log_likelihood_blocked(y, dict, s, hyper) + log_marginal_visible(prior, s);
}

struct MapResult {
    Eigen::VectorXd support;
    double log_posterior = -std::numeric_limits<double>::infinity();
};

inline constexpr Eigen::Index kMaxBruteForceVisible = 14;
inline constexpr Eigen::Index kMaxBruteForceHidden = 8;

/// argmax_s log p(s | y) by enumerating all 2^NF supports. Workers scan contiguous
/// mask ranges; ties resolve to the smallest mask, so the result is thread-count independent.
inline MapResult brute_force_map(const Eigen::VectorXcd& y, const BlockDictionary& dict, const RbmParams& prior,
                                 const ModelHyper& hyper, std::size_t threads = 1) {
    detail::check_inputs(y, dict, prior, hyper);
    if (prior.visible() > kMaxBruteForceVisible || prior.hidden() > kMaxBruteForceHidden) {
        throw DomainError("brute_force_map supports NF <= 14 and P <= 8");
    }
    const std::uint64_t total = std::uint64_t{1} << prior.visible();
    const std::uint64_t workers = std::clamp<std::uint64_t>(threads, 1, total);
    std::vector<std::pair<double, std::uint64_t>> best(workers, {-std::numeric_limits<double>::infinity(), 0});

    auto scan = [&](std::uint64_t w) {
        const std::uint64_t begin = total * w / workers;
        const std::uint64_t end = total * (w + 1) / workers;
        for (std::uint64_t mask = begin; mask < end; ++mask) {
            const double lp =
                log_posterior_unnormalized(y, dict, prior, hyper, detail::bits_of(mask, prior.visible()));
            if (lp > best[w].first) best[w] = {lp, mask};
        }
    };
    if (workers == 1) {
        scan(0);
    } else {
        std::vector<std::jthread> pool;
        for (std::uint64_t w = 0; w < workers; ++w) pool.emplace_back(scan, w);
    }

    auto winner = best.front();
    for (std::size_t w = 1; w < best.size(); ++w) {
        if (best[w].first > winner.first) winner = best[w];
    }
    return {detail::bits_of(winner.second, prior.visible()), winner.first};
}

// ---------------------------------------------------------------------------
// Training data

/// Uniform ranges for randomly drawn environments.
struct EnvironmentSampler {
    WaveguideKind kind = WaveguideKind::Pekeris;
    double depth_min = 90.0, depth_max = 110.0;
    double water_speed_min = 1500.0, water_speed_max = 1500.0;
    double bottom_speed_min = 1600.0, bottom_speed_max = 1800.0;
    double water_density = 1000.0;
    double bottom_density_min = 1500.0, bottom_density_max = 2000.0;

    EnvironmentSpec draw(CounterRng& rng) const {
        EnvironmentSpec env;
        env.kind = kind;
        env.depth = rng.uniform(depth_min, depth_max);
        env.water_speed = rng.uniform(water_speed_min, water_speed_max);
        env.bottom_speed = rng.uniform(bottom_speed_min, bottom_speed_max);
        env.water_density = water_density;
        env.bottom_density = rng.uniform(bottom_density_min, bottom_density_max);
        return env;
    }

    std::string describe() const {
        std::ostringstream os;
        os << (kind == WaveguideKind::Ideal ? "ideal" : "pekeris") << " depth=[" << depth_min << "," << depth_max
           << "] c1=[" << water_speed_min << "," << water_speed_max << "] c2=[" << bottom_speed_min << ","
           << bottom_speed_max << "] rho1=" << water_density << " rho2=[" << bottom_density_min << ","
           << bottom_density_max << "]";
        return os.str();
    }
};

inline constexpr int kMaxEnvironmentRedraws = 100;

/// Draw `count` environments and stack their true supports (frequency-major rows).
/// Draws whose modes leave the grid (or that are physically invalid) are redrawn.
inline SupportDataset gen_training_supports(const EnvironmentSampler& sampler, const std::vector<double>& freqs,
                                            const WavenumberGrid& grid, std::size_t count, std::uint64_t seed,
                                            std::vector<EnvironmentSpec>* drawn = nullptr) {
    if (count < 1) throw ConfigError("dataset count must be >= 1");
    grid.validate();
    SupportDataset data;
    data.num_points = grid.points;
    data.num_freqs = freqs.size();
    data.k_min = grid.k_min;
    data.k_max = grid.k_max;
    data.bits.resize(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(grid.points * freqs.size()));
    {
        std::ostringstream os;
        os << sampler.describe() << " count=" << count << " seed=" << seed;
        data.provenance = os.str();
    }
    if (drawn != nullptr) drawn->clear();

    CounterRng rng(seed, 0x5A3D);
    for (std::size_t i = 0; i < count; ++i) {
        std::string last_error;
        bool ok = false;
        for (int attempt = 0; attempt < kMaxEnvironmentRedraws && !ok; ++attempt) {
            const EnvironmentSpec env = sampler.draw(rng);
            try {
                const FkSupport s = true_support(env, freqs, grid);
                for (std::size_t j = 0; j < s.size(); ++j) {
                    data.bits(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = s.bits()[j];
                }
                if (drawn != nullptr) drawn->push_back(env);
                ok = true;
            } catch (const ConfigError& e) {
                last_error = e.what();
            }
        }
        if (!ok) {
            throw ConfigError("environment sampler failed " + std::to_string(kMaxEnvironmentRedraws) +
                              " times in a row; last error: " + last_error);
        }
    }
    return data;
}

// ---------------------------------------------------------------------------
// Aggregation

struct RunRecord {
    std::string method;
    double snr_db = 0.0;
    RecoveryMetrics metrics;
};

struct MetricSummary {
    double mean = 0.0;
    double std = 0.0;  // sample standard deviation, 0 for a single run
};

struct SummaryRow {
    std::string method;
    double snr_db = 0.0;
    std::size_t runs = 0;
    MetricSummary precision, recall, f1, hamming, tolerant_f1, nmse, wavenumber_error;
};

namespace detail {

inline MetricSummary summarize(const std::vector<double>& values) {
    MetricSummary s;
    std::vector<double> finite;
    for (double v : values) {
        if (std::isfinite(v)) finite.push_back(v);
    }
    if (finite.empty()) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
    double sum = 0.0;
    for (double v : finite) sum += v;
    s.mean = sum / static_cast<double>(finite.size());
    if (finite.size() > 1) {
        double acc = 0.0;
        for (double v : finite) acc += (v - s.mean) * (v - s.mean);
        s.std = std::sqrt(acc / static_cast<double>(finite.size() - 1));
    }
    return s;
}

}  // namespace detail

/// Mean and standard deviation of each metric per (method, SNR), sorted by method then SNR.
/// Non-finite values (e.g. NMSE without a truth amplitude file) are skipped.
inline std::vector<SummaryRow> compare_runs(const std::vector<RunRecord>& runs) {
    std::map<std::pair<std::string, double>, std::vector<const RecoveryMetrics*>> groups;
    for (const auto& r : runs) groups[{r.method, r.snr_db}].push_back(&r.metrics);

    std::vector<SummaryRow> out;
    for (const auto& [key, items] : groups) {
        auto collect = [&](auto field) {
            std::vector<double> v;
            for (const auto* m : items) v.push_back(static_cast<double>(field(*m)));
            return detail::summarize(v);
        };
        SummaryRow row;
        row.method = key.first;
        row.snr_db = key.second;
        row.runs = items.size();
        row.precision = collect([](const RecoveryMetrics& m) { return m.precision; });
        row.recall = collect([](const RecoveryMetrics& m) { return m.recall; });
        row.f1 = collect([](const RecoveryMetrics& m) { return m.f1; });
        row.hamming = collect([](const RecoveryMetrics& m) { return m.hamming; });
        row.tolerant_f1 = collect([](const RecoveryMetrics& m) { return m.tolerant_f1; });
        row.nmse = collect([](const RecoveryMetrics& m) { return m.nmse; });
        row.wavenumber_error = collect([](const RecoveryMetrics& m) { return m.wavenumber_error; });
        out.push_back(row);
    }
    return out;
}

inline void write_summary_csv(std::ostream& os, const std::vector<SummaryRow>& rows) {
    os << "method,snr_db,runs,precision_mean,precision_std,recall_mean,recall_std,f1_mean,f1_std,"
          "hamming_mean,hamming_std,tolerant_f1_mean,tolerant_f1_std,nmse_mean,nmse_std,"
          "wavenumber_error_mean,wavenumber_error_std\n";
    os.precision(17);
    for (const auto& r : rows) {
        os << r.method << ',' << r.snr_db << ',' << r.runs;
        for (const auto* m : {&r.precision, &r.recall, &r.f1, &r.hamming, &r.tolerant_f1, &r.nmse,
                              &r.wavenumber_error}) {
            os << ',' << m->mean << ',' << m->std;
        }
        os << '\n';
    }
}

}  // namespace fkdiag
