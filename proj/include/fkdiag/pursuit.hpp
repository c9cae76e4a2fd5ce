#pragma once

// Structured soft Bayesian pursuit: mean-field variational Bayes for the
// spike-and-slab model z = s ⊙ x with an RBM prior on the support s.
//
//   y = D z + w,  w ~ CN(0, σ_w² I),  x_n ~ CN(0, σ_x²),  s ~ RBM(a, b, W)
//
// The posterior is approximated by q(x, s, h) = Π_n q(x_n | s_n) q(s_n) Π_l q(h_l).
// Each coordinate update (x_n, s_n) uses the residual with every other
// coordinate's posterior mean removed; the hidden layer is refreshed after
// each full sweep over n. The Bernoulli-prior baseline is the same solver
// with an RBM that has no hidden units.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "fkdiag/dictionary.hpp"
#include "fkdiag/errors.hpp"
#include "fkdiag/random.hpp"
#include "fkdiag/rbm.hpp"

namespace fkdiag {

struct ModelHyper {
    double sigma_w_sq = 1.0;  // noise variance per complex component
    double sigma_x_sq = 1.0;  // amplitude prior variance

    void validate() const {
        if (!(sigma_w_sq > 0.0 && std::isfinite(sigma_w_sq) && sigma_x_sq > 0.0 && std::isfinite(sigma_x_sq))) {
            throw DomainError("sigma_w_sq and sigma_x_sq must be positive and finite");
        }
    }
};

/// Normalization of the q(s_n) update.
/// RealGaussian:    ρ(s) ∝ exp(s·prior) √Σ(s) exp(½ |m(s)|² / Σ(s))
/// CircularComplex: ρ(s) ∝ exp(s·prior)  Σ(s) exp(   |m(s)|² / Σ(s))   (exact for CN amplitudes)
enum class Normalization { RealGaussian, CircularComplex };

enum class UpdateOrder { Sequential, RandomPermutation };

struct SolverOptions {
    std::size_t max_sweeps = 200;
    double tol = 1e-6;
    double damping = 0.0;
    Normalization normalization = Normalization::CircularComplex;
    UpdateOrder order = UpdateOrder::Sequential;
    std::uint64_t order_seed = 0;
    double threshold = 0.5;
    bool record_trajectory = false;

    void validate() const {
        detail::require_config(max_sweeps >= 1, "max_sweeps must be >= 1");
        detail::require_config(tol > 0.0, "tol must be > 0");
        detail::require_config(damping >= 0.0 && damping < 1.0, "damping must lie in [0, 1)");
        detail::require_config(threshold >= 0.0 && threshold <= 1.0, "threshold must lie in [0, 1]");
    }
};

struct PosteriorState {
    Eigen::VectorXd qs;         // q(s_n = 1)
    Eigen::VectorXd qh;         // q(h_l = 1)
    Eigen::VectorXcd m1;        // m(s_n = 1)
    Eigen::VectorXd sigma1;     // Σ(s_n = 1)
    Eigen::VectorXcd residual;  // y - Σ_j qs_j m1_j d_j

    Eigen::VectorXcd posterior_mean() const { return qs.cast<std::complex<double>>().cwiseProduct(m1); }
};

struct EstimateResult {
    Eigen::VectorXd s_hat;  // 0/1
    Eigen::VectorXcd z_hat;
    Eigen::VectorXd qs;
    Eigen::VectorXd qh;
    std::size_t sweeps_used = 0;
    std::vector<double> free_energy_trace;  // [0] at initialization, [i] after sweep i
    bool converged = false;
    std::vector<Eigen::VectorXd> qs_trajectory;  // qs after each sweep, when requested
};

struct GaussianMoments {
    double sigma = 0.0;
    std::complex<double> mean;
};

/// Σ(s_n) and m(s_n) for s_n ∈ {0, 1}, given the residual with coordinate n removed.
inline GaussianMoments gaussian_moments(Eigen::Index n, int s_n, const Eigen::VectorXcd& residual_without_n,
                                        const ModelHyper& hyper, const BlockDictionary& dict) {
    if (s_n == 0) return {hyper.sigma_x_sq, 0.0};
    const double denom = hyper.sigma_w_sq + hyper.sigma_x_sq * dict.atom_norm_sq();
    return {hyper.sigma_x_sq * hyper.sigma_w_sq / denom,
            (hyper.sigma_x_sq / denom) * dict.correlate(n, residual_without_n)};
}

/// Log-odds log ρ(1) − log ρ(0) of the q(s_n) update.
inline double support_log_odds(double prior_field, const GaussianMoments& on, double sigma_off,
                               Normalization normalization) {
    const double c = normalization == Normalization::CircularComplex ? 1.0 : 0.5;
    return prior_field + c * (std::log(on.sigma) - std::log(sigma_off)) + c * std::norm(on.mean) / on.sigma;
}

struct CoordinateUpdate {
    double qs = 0.0;
    GaussianMoments on;
};

/// New q(s_n = 1) and m(s_n = 1) from the residual with coordinate n removed (damping applied).
inline CoordinateUpdate update_s(Eigen::Index n, const PosteriorState& state, const RbmParams& prior,
                                 const ModelHyper& hyper, const BlockDictionary& dict, const SolverOptions& opts,
                                 const Eigen::VectorXcd& residual_without_n) {
    const GaussianMoments on = gaussian_moments(n, 1, residual_without_n, hyper, dict);
    const double field = prior.b[n] + prior.W.row(n).dot(state.qh);
    const double fresh = logistic(support_log_odds(field, on, hyper.sigma_x_sq, opts.normalization));
    return {(1.0 - opts.damping) * fresh + opts.damping * state.qs[n], on};
}

inline double update_h(Eigen::Index l, const PosteriorState& state, const RbmParams& prior) {
    return logistic(prior.a[l] + prior.W.col(l).dot(state.qs));
}

/// Prior mean-field start: qh = logistic(a), qs = logistic(b + W qh), m1 = 0, residual = y.
inline PosteriorState initial_state(const Eigen::VectorXcd& y, const BlockDictionary& dict, const RbmParams& prior,
                                    const ModelHyper& hyper) {
    PosteriorState st;
    st.qh = prior.a.unaryExpr([](double x) { return logistic(x); });
    st.qs = (prior.b + prior.W * st.qh).unaryExpr([](double x) { return logistic(x); });
    st.m1 = Eigen::VectorXcd::Zero(dict.atoms());
    st.sigma1 = Eigen::VectorXd::Constant(dict.atoms(), gaussian_moments(0, 1, y, hyper, dict).sigma);
    st.residual = y;
    return st;
}

inline Eigen::VectorXcd recompute_residual(const PosteriorState& state, const Eigen::VectorXcd& y,
                                           const BlockDictionary& dict) {
    return y - dict.apply(state.posterior_mean());
}

/// One pass over all coordinates in `order`, then every hidden unit. Returns max |Δqs|.
inline double sweep(PosteriorState& state, const std::vector<Eigen::Index>& order, const BlockDictionary& dict,
                    const RbmParams& prior, const ModelHyper& hyper, const SolverOptions& opts) {
    double max_change = 0.0;
    for (Eigen::Index n : order) {
        dict.add_atom(n, state.qs[n] * state.m1[n], state.residual);  // ⟨r_n⟩
        const CoordinateUpdate u = update_s(n, state, prior, hyper, dict, opts, state.residual);
        max_change = std::max(max_change, std::abs(u.qs - state.qs[n]));
        state.qs[n] = u.qs;
        state.m1[n] = u.on.mean;
        state.sigma1[n] = u.on.sigma;
        dict.add_atom(n, -state.qs[n] * state.m1[n], state.residual);
    }
    for (Eigen::Index l = 0; l < state.qh.size(); ++l) state.qh[l] = update_h(l, state, prior);
    return max_change;
}

namespace detail {

inline double xlogx(double x) noexcept { return x > 0.0 ? x * std::log(x) : 0.0; }

inline void check_inputs(const Eigen::VectorXcd& y, const BlockDictionary& dict, const RbmParams& prior,
                         const ModelHyper& hyper) {
    require_dim(y.size() == dict.measurement_size(), "measurement length must equal L*F of the dictionary");
    require_dim(prior.visible() == dict.atoms(), "RBM visible size must equal N*F of the dictionary");
    prior.validate();
    hyper.validate();
    if (!y.allFinite()) throw DomainError("measurement contains non-finite entries");
}

}  // namespace detail

/// Variational free energy E_q[log q(x,s,h)] − E_q[log p̃(y,x,s,h)], p̃ the unnormalized joint.
inline double compute_free_energy(const PosteriorState& state, const Eigen::VectorXcd& y,
                                  const BlockDictionary& dict, const RbmParams& prior, const ModelHyper& hyper) {
    const double pi = std::numbers::pi;
    const double e = std::numbers::e;
    const double L = dict.atom_norm_sq();
    const double sw = hyper.sigma_w_sq;
    const double sx = hyper.sigma_x_sq;

    double neg_entropy = 0.0;
    double expected_energy = 0.0;
    double spread = 0.0;  // Σ_n Var(z_n) ||d_n||²
    for (Eigen::Index n = 0; n < state.qs.size(); ++n) {
        const double q = state.qs[n];
        const double m2 = std::norm(state.m1[n]);
        const double s1 = state.sigma1[n];
        neg_entropy += detail::xlogx(q) + detail::xlogx(1.0 - q);
        neg_entropy -= q * std::log(pi * e * s1) + (1.0 - q) * std::log(pi * e * sx);
        const double second = q * (m2 + s1);
        spread += (second - q * q * m2) * L;
        expected_energy += (second + (1.0 - q) * sx) / sx + std::log(pi * sx);
    }
    for (Eigen::Index l = 0; l < state.qh.size(); ++l) {
        neg_entropy += detail::xlogx(state.qh[l]) + detail::xlogx(1.0 - state.qh[l]);
    }
    const double fit = (y - dict.apply(state.posterior_mean())).squaredNorm() + spread;
    expected_energy += fit / sw + static_cast<double>(y.size()) * std::log(pi * sw);
    expected_energy -= prior.a.dot(state.qh) + prior.b.dot(state.qs) + state.qs.dot(prior.W * state.qh);
    return neg_entropy + expected_energy;
}

/// Iterate sweeps until max |Δqs| < tol or max_sweeps; threshold qs into the support estimate.
inline EstimateResult run(const Eigen::VectorXcd& y, const BlockDictionary& dict, const RbmParams& prior,
                          const ModelHyper& hyper, const SolverOptions& opts) {
    detail::check_inputs(y, dict, prior, hyper);
    opts.validate();

    PosteriorState state = initial_state(y, dict, prior, hyper);
    EstimateResult result;
    result.free_energy_trace.push_back(compute_free_energy(state, y, dict, prior, hyper));

    std::vector<Eigen::Index> order(static_cast<std::size_t>(dict.atoms()));
    std::iota(order.begin(), order.end(), Eigen::Index{0});

    for (std::size_t it = 1; it <= opts.max_sweeps; ++it) {
        if (opts.order == UpdateOrder::RandomPermutation) {
            std::iota(order.begin(), order.end(), Eigen::Index{0});
            CounterRng rng(opts.order_seed, it);
            shuffle(std::span<Eigen::Index>(order), rng);
        }
        const double change = sweep(state, order, dict, prior, hyper, opts);
        result.sweeps_used = it;
        result.free_energy_trace.push_back(compute_free_energy(state, y, dict, prior, hyper));
        if (opts.record_trajectory) result.qs_trajectory.push_back(state.qs);
        if (change < opts.tol) {
            result.converged = true;
            break;
        }
    }

    result.qs = state.qs;
    result.qh = state.qh;
    result.z_hat = state.posterior_mean();
    result.s_hat = state.qs.unaryExpr([&](double q) { return q > opts.threshold ? 1.0 : 0.0; });
    return result;
}

/// Bernoulli-prior baseline: the same solver with W = 0, a = 0, b_n = logit(p).
inline EstimateResult sobap_baseline(const Eigen::VectorXcd& y, const BlockDictionary& dict, double p_bernoulli,
                                     const ModelHyper& hyper, const SolverOptions& opts) {
    return run(y, dict, RbmParams::bernoulli(dict.atoms(), p_bernoulli), hyper, opts);
}

}  // namespace fkdiag
