#pragma once

// Binary restricted Boltzmann machine used as a structured prior over f-k supports.
//
//   p(s, h) ∝ exp(a^T h + b^T s + s^T W h),  s in {0,1}^NF, h in {0,1}^P
//
// Visible units follow the frequency-major flat layout of the dictionary.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "fkdiag/binary_io.hpp"
#include "fkdiag/errors.hpp"
#include "fkdiag/random.hpp"

namespace fkdiag {

using RowMatrixXd = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct RbmParams {
    Eigen::VectorXd a;  // hidden biases (P)
    Eigen::VectorXd b;  // visible biases (NF)
    Eigen::MatrixXd W;  // couplings (NF x P)

    static RbmParams zeros(Eigen::Index visible, Eigen::Index hidden) {
        return {Eigen::VectorXd::Zero(hidden), Eigen::VectorXd::Zero(visible), Eigen::MatrixXd::Zero(visible, hidden)};
    }

    /// Independent Bernoulli(p) prior: no hidden units, b_n = logit(p).
    static RbmParams bernoulli(Eigen::Index visible, double p) {
        if (!(p > 0.0 && p < 1.0)) throw DomainError("Bernoulli prior probability must lie in (0, 1)");
        return {Eigen::VectorXd::Zero(0), Eigen::VectorXd::Constant(visible, logit(p)),
                Eigen::MatrixXd::Zero(visible, 0)};
    }

    Eigen::Index visible() const noexcept { return b.size(); }
    Eigen::Index hidden() const noexcept { return a.size(); }

    void validate() const {
        detail::require_dim(W.rows() == b.size() && W.cols() == a.size(), "RBM parameter shapes disagree");
        if (!(a.allFinite() && b.allFinite() && W.allFinite())) throw DomainError("RBM parameters must be finite");
    }

    friend bool operator==(const RbmParams& x, const RbmParams& y) {
        return x.a.size() == y.a.size() && x.b.size() == y.b.size() && x.a == y.a && x.b == y.b && x.W == y.W;
    }
};

struct TrainingConfig {
    std::size_t cd_steps = 1;
    double learning_rate = 0.05;
    std::size_t epochs = 200;
    std::size_t minibatch_size = 32;
    double weight_decay = 1e-4;
    double momentum = 0.5;
    std::uint64_t seed = 0;
    double init_weight_std = 0.01;
    std::size_t threads = 1;  // gradient fan-out; results do not depend on it

    void validate() const {
        detail::require_config(cd_steps >= 1, "cd_steps must be >= 1");
        detail::require_config(minibatch_size >= 1, "minibatch_size must be >= 1");
        detail::require_config(learning_rate >= 0.0, "learning_rate must be >= 0");
        detail::require_config(weight_decay >= 0.0, "weight_decay must be >= 0");
        detail::require_config(momentum >= 0.0 && momentum < 1.0, "momentum must lie in [0, 1)");
    }
};

/// Binary training supports, one row per sample (frequency-major visible layout).
struct SupportDataset {
    Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> bits;
    std::size_t num_points = 0;  // N
    std::size_t num_freqs = 0;   // F
    double k_min = 0.0;
    double k_max = 0.0;
    std::string provenance;

    Eigen::Index count() const noexcept { return bits.rows(); }
    Eigen::Index visible() const noexcept { return bits.cols(); }

    RowMatrixXd rows_as_double(std::span<const Eigen::Index> rows) const {
        RowMatrixXd out(static_cast<Eigen::Index>(rows.size()), visible());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            out.row(static_cast<Eigen::Index>(i)) = bits.row(rows[i]).cast<double>();
        }
        return out;
    }

    RowMatrixXd as_double() const { return bits.cast<double>(); }
};

inline double energy(const RbmParams& p, const Eigen::VectorXd& s, const Eigen::VectorXd& h) {
    detail::require_dim(s.size() == p.visible() && h.size() == p.hidden(), "energy: state sizes disagree");
    return -(p.a.dot(h) + p.b.dot(s) + s.dot(p.W * h));
}

inline Eigen::VectorXd cond_h_given_s(const RbmParams& p, const Eigen::VectorXd& s) {
    detail::require_dim(s.size() == p.visible(), "cond_h_given_s: visible size mismatch");
    Eigen::VectorXd act = p.a + p.W.transpose() * s;
    return act.unaryExpr([](double x) { return logistic(x); });
}

inline Eigen::VectorXd cond_s_given_h(const RbmParams& p, const Eigen::VectorXd& h) {
    detail::require_dim(h.size() == p.hidden(), "cond_s_given_h: hidden size mismatch");
    Eigen::VectorXd act = p.b + p.W * h;
    return act.unaryExpr([](double x) { return logistic(x); });
}

/// log sum_h exp(-E(s, h)) = b^T s + sum_l softplus(a_l + (W^T s)_l).
inline double log_marginal_visible(const RbmParams& p, const Eigen::VectorXd& s) {
    const Eigen::VectorXd act = p.a + p.W.transpose() * s;
    double total = p.b.dot(s);
    for (Eigen::Index l = 0; l < act.size(); ++l) total += softplus(act[l]);
    return total;
}

inline double log_marginal_hidden(const RbmParams& p, const Eigen::VectorXd& h) {
    const Eigen::VectorXd act = p.b + p.W * h;
    double total = p.a.dot(h);
    for (Eigen::Index n = 0; n < act.size(); ++n) total += softplus(act[n]);
    return total;
}

namespace detail {

inline Eigen::VectorXd bits_of(std::uint64_t mask, Eigen::Index size) {
    Eigen::VectorXd v(size);
    for (Eigen::Index i = 0; i < size; ++i) v[i] = static_cast<double>((mask >> i) & 1u);
    return v;
}

inline double log_sum_exp(const std::vector<double>& terms) {
    const double hi = *std::max_element(terms.begin(), terms.end());
    double acc = 0.0;
    for (double t : terms) acc += std::exp(t - hi);
    return hi + std::log(acc);
}

inline void sample_bernoulli(Eigen::Ref<Eigen::VectorXd> probs_to_bits, CounterRng& rng) {
    for (Eigen::Index i = 0; i < probs_to_bits.size(); ++i) probs_to_bits[i] = rng.bernoulli(probs_to_bits[i]) ? 1.0 : 0.0;
}

}  // namespace detail

inline constexpr Eigen::Index kMaxEnumerationBits = 24;

/// Log partition by enumerating visible states (hidden layer summed analytically).
inline double log_partition_over_visible(const RbmParams& p) {
    if (p.visible() > kMaxEnumerationBits) throw DomainError("visible layer too large to enumerate");
    std::vector<double> terms;
    terms.reserve(std::size_t{1} << p.visible());
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << p.visible()); ++mask) {
        terms.push_back(log_marginal_visible(p, detail::bits_of(mask, p.visible())));
    }
    return detail::log_sum_exp(terms);
}

/// Log partition by enumerating hidden states (visible layer summed analytically).
inline double log_partition_over_hidden(const RbmParams& p) {
    if (p.hidden() > kMaxEnumerationBits) throw DomainError("hidden layer too large to enumerate");
    std::vector<double> terms;
    terms.reserve(std::size_t{1} << p.hidden());
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << p.hidden()); ++mask) {
        terms.push_back(log_marginal_hidden(p, detail::bits_of(mask, p.hidden())));
    }
    return detail::log_sum_exp(terms);
}

/// Exact log Z; enumerates the smaller layer. Requires NF + P <= 24.
inline double exact_log_partition(const RbmParams& p) {
    p.validate();
    if (p.visible() + p.hidden() > kMaxEnumerationBits) {
        throw DomainError("exact_log_partition needs NF + P <= 24 (got " + std::to_string(p.visible() + p.hidden()) + ")");
    }
    return p.visible() <= p.hidden() ? log_partition_over_visible(p) : log_partition_over_hidden(p);
}

/// Exact p(s) for all 2^NF states, indexed by bitmask (bit n = s_n).
inline std::vector<double> exact_visible_distribution(const RbmParams& p) {
    if (p.visible() > 20) throw DomainError("visible layer too large to enumerate");
    const double log_z = p.hidden() < p.visible() ? log_partition_over_hidden(p) : log_partition_over_visible(p);
    std::vector<double> probs(std::size_t{1} << p.visible());
    for (std::uint64_t mask = 0; mask < probs.size(); ++mask) {
        probs[mask] = std::exp(log_marginal_visible(p, detail::bits_of(mask, p.visible())) - log_z);
    }
    return probs;
}

/// KL(empirical data distribution || model), exact. Needs min(NF, P) enumerable.
inline double exact_kl(const RowMatrixXd& data, const RbmParams& p) {
    detail::require_dim(data.cols() == p.visible(), "exact_kl: data width differs from visible size");
    const double log_z = p.hidden() <= p.visible() ? log_partition_over_hidden(p) : log_partition_over_visible(p);
    // Group identical rows.
    std::vector<std::pair<std::vector<std::uint8_t>, double>> counts;
    for (Eigen::Index r = 0; r < data.rows(); ++r) {
        std::vector<std::uint8_t> key(static_cast<std::size_t>(data.cols()));
        for (Eigen::Index c = 0; c < data.cols(); ++c) key[static_cast<std::size_t>(c)] = data(r, c) > 0.5;
        auto it = std::find_if(counts.begin(), counts.end(), [&](const auto& e) { return e.first == key; });
        if (it == counts.end()) {
            counts.emplace_back(std::move(key), 1.0);
        } else {
            it->second += 1.0;
        }
    }
    const double total = static_cast<double>(data.rows());
    double kl = 0.0;
    for (const auto& [key, c] : counts) {
        Eigen::VectorXd s(p.visible());
        for (Eigen::Index i = 0; i < s.size(); ++i) s[i] = key[static_cast<std::size_t>(i)];
        const double pd = c / total;
        kl += pd * (std::log(pd) - (log_marginal_visible(p, s) - log_z));
    }
    return kl;
}

/// Block Gibbs chain over (h, s); one step draws h ~ p(h|s) then s ~ p(s|h).
class GibbsChain {
public:
    GibbsChain(const RbmParams& params, Eigen::VectorXd s0, std::uint64_t seed, std::uint64_t stream = 0)
        : params_(&params), s_(std::move(s0)), h_(params.hidden()), rng_(seed, stream) {
        detail::require_dim(s_.size() == params.visible(), "Gibbs start state has wrong size");
    }

    void step() {
        h_ = cond_h_given_s(*params_, s_);
        detail::sample_bernoulli(h_, rng_);
        s_ = cond_s_given_h(*params_, h_);
        detail::sample_bernoulli(s_, rng_);
    }

    const Eigen::VectorXd& visible() const noexcept { return s_; }
    const Eigen::VectorXd& hidden() const noexcept { return h_; }

private:
    const RbmParams* params_;
    Eigen::VectorXd s_;
    Eigen::VectorXd h_;
    CounterRng rng_;
};

inline Eigen::VectorXd gibbs_chain(const RbmParams& params, const Eigen::VectorXd& s0, std::size_t steps,
                                   std::uint64_t seed) {
    if (steps < 1) throw DomainError("gibbs_chain needs steps >= 1");
    GibbsChain chain(params, s0, seed);
    for (std::size_t i = 0; i < steps; ++i) chain.step();
    return chain.visible();
}

struct RbmGradient {
    Eigen::VectorXd da;
    Eigen::VectorXd db;
    Eigen::MatrixXd dW;
};

namespace detail {

inline constexpr Eigen::Index kCdChunk = 16;

inline RowMatrixXd logistic_rows(RowMatrixXd act) {
    return act.unaryExpr([](double x) { return logistic(x); });
}

/// Unnormalized CD-k statistics for rows [begin, end) of the batch.
inline RbmGradient cd_chunk(const RbmParams& p, const RowMatrixXd& batch, Eigen::Index begin, Eigen::Index end,
                            std::size_t k, std::uint64_t key) {
    const Eigen::Index rows = end - begin;
    const RowMatrixXd s_pos = batch.middleRows(begin, rows);
    const RowMatrixXd h_pos = logistic_rows((s_pos * p.W).rowwise() + p.a.transpose());

    RowMatrixXd s_neg(rows, p.visible());
    RowMatrixXd h_neg(rows, p.hidden());
    for (Eigen::Index r = 0; r < rows; ++r) {
        CounterRng rng(key, static_cast<std::uint64_t>(begin + r));
        Eigen::VectorXd h = h_pos.row(r).transpose();
        Eigen::VectorXd s;
        sample_bernoulli(h, rng);
        for (std::size_t step = 0; step < k; ++step) {
            s = cond_s_given_h(p, h);
            sample_bernoulli(s, rng);
            h = cond_h_given_s(p, s);
            if (step + 1 < k) sample_bernoulli(h, rng);
        }
        s_neg.row(r) = s.transpose();
        h_neg.row(r) = h.transpose();  // probabilities for the final hidden statistics
    }

    RbmGradient g;
    g.dW = s_pos.transpose() * h_pos - s_neg.transpose() * h_neg;
    g.db = (s_pos.colwise().sum() - s_neg.colwise().sum()).transpose();
    g.da = (h_pos.colwise().sum() - h_neg.colwise().sum()).transpose();
    return g;
}

}  // namespace detail

/// CD-k gradient estimate averaged over the minibatch. Chain r uses stream (key, r).
/// Work is split into fixed-size chunks reduced in order, so the result is independent of `threads`.
inline RbmGradient cd_gradient(const RbmParams& p, const RowMatrixXd& batch, std::size_t k, std::uint64_t key,
                               std::size_t threads = 1) {
    detail::require_dim(batch.cols() == p.visible(), "minibatch width differs from visible size");
    if (batch.rows() == 0) throw DomainError("cd_update needs a nonempty minibatch");
    if (k < 1) throw DomainError("CD order k must be >= 1");

    const Eigen::Index chunks = (batch.rows() + detail::kCdChunk - 1) / detail::kCdChunk;
    std::vector<RbmGradient> parts(static_cast<std::size_t>(chunks));
    auto work = [&](Eigen::Index c) {
        const Eigen::Index begin = c * detail::kCdChunk;
        const Eigen::Index end = std::min(batch.rows(), begin + detail::kCdChunk);
        parts[static_cast<std::size_t>(c)] = detail::cd_chunk(p, batch, begin, end, k, key);
    };
    const auto workers = static_cast<Eigen::Index>(std::max<std::size_t>(1, threads));
    if (workers == 1 || chunks == 1) {
        for (Eigen::Index c = 0; c < chunks; ++c) work(c);
    } else {
        std::vector<std::jthread> pool;
        for (Eigen::Index t = 0; t < std::min(workers, chunks); ++t) {
            pool.emplace_back([&, t] {
                for (Eigen::Index c = t; c < chunks; c += workers) work(c);
            });
        }
    }

    RbmGradient total = std::move(parts.front());
    for (std::size_t c = 1; c < parts.size(); ++c) {
        total.dW += parts[c].dW;
        total.db += parts[c].db;
        total.da += parts[c].da;
    }
    const double inv = 1.0 / static_cast<double>(batch.rows());
    total.dW *= inv;
    total.db *= inv;
    total.da *= inv;
    return total;
}

/// Momentum buffers carried across cd_update calls.
struct CdVelocity {
    Eigen::VectorXd a;
    Eigen::VectorXd b;
    Eigen::MatrixXd W;

    static CdVelocity zeros_like(const RbmParams& p) {
        return {Eigen::VectorXd::Zero(p.hidden()), Eigen::VectorXd::Zero(p.visible()),
                Eigen::MatrixXd::Zero(p.visible(), p.hidden())};
    }
};

/// One CD-k parameter update: v <- momentum v + lr (grad - weight_decay W), theta <- theta + v.
inline RbmParams cd_update(const RbmParams& params, const RowMatrixXd& minibatch, std::size_t k, double lr,
                           double momentum, double weight_decay, CdVelocity& velocity, std::uint64_t key,
                           std::size_t threads = 1) {
    const RbmGradient g = cd_gradient(params, minibatch, k, key, threads);
    velocity.W = momentum * velocity.W + lr * (g.dW - weight_decay * params.W);
    velocity.b = momentum * velocity.b + lr * g.db;
    velocity.a = momentum * velocity.a + lr * g.da;
    RbmParams out = params;
    out.W += velocity.W;
    out.b += velocity.b;
    out.a += velocity.a;
    return out;
}

/// W ~ N(0, std^2), a = 0, b_n = logit(clamp(mean s_n, 1e-3, 1 - 1e-3)).
inline RbmParams init_params(const SupportDataset& data, Eigen::Index hidden, double weight_std, std::uint64_t seed) {
    if (data.count() == 0) throw DomainError("cannot initialize from an empty dataset");
    RbmParams p = RbmParams::zeros(data.visible(), hidden);
    CounterRng rng(seed, 0x1417);
    for (Eigen::Index n = 0; n < p.W.rows(); ++n) {
        for (Eigen::Index l = 0; l < p.W.cols(); ++l) p.W(n, l) = weight_std * rng.normal();
    }
    const Eigen::VectorXd mean = data.bits.cast<double>().colwise().mean().transpose();
    for (Eigen::Index n = 0; n < p.b.size(); ++n) p.b[n] = logit(std::clamp(mean[n], 1e-3, 1.0 - 1e-3));
    return p;
}

struct EpochLog {
    std::size_t epoch = 0;
    double reconstruction_error = 0.0;                     // mean squared error per visible unit
    double kl_exact = std::numeric_limits<double>::quiet_NaN();  // when NF + P <= 20
};

struct TrainingResult {
    RbmParams params;
    std::vector<EpochLog> log;
};

inline double reconstruction_error(const RbmParams& p, const RowMatrixXd& data) {
    const RowMatrixXd h = detail::logistic_rows((data * p.W).rowwise() + p.a.transpose());
    const RowMatrixXd s = detail::logistic_rows((h * p.W.transpose()).rowwise() + p.b.transpose());
    return (s - data).squaredNorm() / static_cast<double>(data.size());
}

inline constexpr Eigen::Index kMaxKlBits = 20;

/// Shuffled-minibatch CD-k training, deterministic under config.seed.
inline TrainingResult train(const SupportDataset& data, Eigen::Index hidden, const TrainingConfig& config) {
    config.validate();
    if (data.count() == 0) throw DomainError("training dataset is empty");
    if (hidden < 1) throw ConfigError("hidden layer size must be >= 1");

    TrainingResult result;
    result.params = init_params(data, hidden, config.init_weight_std, config.seed);
    auto& params = result.params;
    CdVelocity velocity = CdVelocity::zeros_like(params);

    const RowMatrixXd all = data.as_double();
    const bool with_kl = data.visible() + hidden <= kMaxKlBits;
    auto log_epoch = [&](std::size_t epoch) {
        EpochLog e;
        e.epoch = epoch;
        e.reconstruction_error = reconstruction_error(params, all);
        if (with_kl) e.kl_exact = exact_kl(all, params);
        result.log.push_back(e);
    };
    log_epoch(0);

    std::vector<Eigen::Index> order(static_cast<std::size_t>(data.count()));
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<Eigen::Index>(i);

    std::uint64_t update = 0;
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        CounterRng shuffle_rng(config.seed, mix_seed(0x5EED, epoch));
        shuffle(std::span<Eigen::Index>(order), shuffle_rng);
        for (std::size_t start = 0; start < order.size(); start += config.minibatch_size) {
            const std::size_t len = std::min(config.minibatch_size, order.size() - start);
            const RowMatrixXd batch = data.rows_as_double(std::span<const Eigen::Index>(order).subspan(start, len));
            params = cd_update(params, batch, config.cd_steps, config.learning_rate, config.momentum,
                               config.weight_decay, velocity, mix_seed(config.seed, 0xCD, update++), config.threads);
        }
        log_epoch(epoch);
    }
    return result;
}

/// Grid metadata stored alongside RBM parameters.
struct RbmFileMeta {
    std::uint64_t num_points = 0;  // N
    std::uint64_t num_freqs = 0;   // F
    double k_min = 0.0;
    double k_max = 0.0;
};

inline constexpr std::uint32_t kRbmFormatVersion = 1;

/// Layout: "RBM1", u32 version, u64 NF, u64 P, u64 N, u64 F, f64 k_min, f64 k_max,
/// then b (NF), a (P), W row-major (NF x P) as little-endian doubles.
inline void save_rbm(const RbmParams& p, const RbmFileMeta& meta, const std::string& path) {
    p.validate();
    detail::require_dim(meta.num_points * meta.num_freqs == static_cast<std::uint64_t>(p.visible()),
                        "RBM metadata N*F differs from visible size");
    detail::BinaryWriter out(path);
    out.magic("RBM1");
    out.u32(kRbmFormatVersion);
    out.u64(static_cast<std::uint64_t>(p.visible()));
    out.u64(static_cast<std::uint64_t>(p.hidden()));
    out.u64(meta.num_points);
    out.u64(meta.num_freqs);
    out.f64(meta.k_min);
    out.f64(meta.k_max);
    for (Eigen::Index n = 0; n < p.b.size(); ++n) out.f64(p.b[n]);
    for (Eigen::Index l = 0; l < p.a.size(); ++l) out.f64(p.a[l]);
    for (Eigen::Index n = 0; n < p.W.rows(); ++n) {
        for (Eigen::Index l = 0; l < p.W.cols(); ++l) out.f64(p.W(n, l));
    }
    out.finish();
}

struct LoadedRbm {
    RbmParams params;
    RbmFileMeta meta;
};

inline LoadedRbm load_rbm(const std::string& path) {
    detail::BinaryReader in(path);
    in.expect_magic("RBM1");
    in.expect_version(kRbmFormatVersion);
    const auto nv = in.u64();
    const auto nh = in.u64();
    LoadedRbm r;
    r.meta.num_points = in.u64();
    r.meta.num_freqs = in.u64();
    r.meta.k_min = in.f64();
    r.meta.k_max = in.f64();
    if (nv == 0 || nv > (1u << 26) || nh > (1u << 20) || r.meta.num_points * r.meta.num_freqs != nv) {
        throw IoError(path + ": inconsistent RBM header dimensions");
    }
    r.params = RbmParams::zeros(static_cast<Eigen::Index>(nv), static_cast<Eigen::Index>(nh));
    for (Eigen::Index n = 0; n < r.params.b.size(); ++n) r.params.b[n] = in.f64();
    for (Eigen::Index l = 0; l < r.params.a.size(); ++l) r.params.a[l] = in.f64();
    for (Eigen::Index n = 0; n < r.params.W.rows(); ++n) {
        for (Eigen::Index l = 0; l < r.params.W.cols(); ++l) r.params.W(n, l) = in.f64();
    }
    in.expect_end();
    return r;
}

/// Load and check the visible layout against the current experiment (N points x F frequencies).
inline LoadedRbm load_rbm(const std::string& path, std::uint64_t num_points, std::uint64_t num_freqs) {
    LoadedRbm r = load_rbm(path);
    if (r.meta.num_points != num_points || r.meta.num_freqs != num_freqs) {
        throw DimensionError(path + ": RBM visible layout N=" + std::to_string(r.meta.num_points) +
                             ", F=" + std::to_string(r.meta.num_freqs) + " differs from experiment N=" +
                             std::to_string(num_points) + ", F=" + std::to_string(num_freqs));
    }
    return r;
}

}  // namespace fkdiag
