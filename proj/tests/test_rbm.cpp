#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numbers>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "fkdiag/rbm.hpp"

using namespace fkdiag;

namespace {

RbmParams random_params(Eigen::Index nv, Eigen::Index nh, double scale, std::uint64_t seed) {
    CounterRng rng(seed, 3);
    RbmParams p = RbmParams::zeros(nv, nh);
    for (Eigen::Index i = 0; i < nh; ++i) p.a[i] = scale * rng.normal();
    for (Eigen::Index i = 0; i < nv; ++i) p.b[i] = scale * rng.normal();
    for (Eigen::Index i = 0; i < nv; ++i) {
        for (Eigen::Index j = 0; j < nh; ++j) p.W(i, j) = scale * rng.normal();
    }
    return p;
}

Eigen::VectorXd bits(std::uint64_t mask, Eigen::Index n) {
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = static_cast<double>((mask >> i) & 1u);
    return v;
}

double naive_energy(const RbmParams& p, const Eigen::VectorXd& s, const Eigen::VectorXd& h) {
    double e = 0.0;
    for (Eigen::Index l = 0; l < h.size(); ++l) e -= p.a[l] * h[l];
    for (Eigen::Index n = 0; n < s.size(); ++n) e -= p.b[n] * s[n];
    for (Eigen::Index n = 0; n < s.size(); ++n) {
        for (Eigen::Index l = 0; l < h.size(); ++l) e -= s[n] * p.W(n, l) * h[l];
    }
    return e;
}

// log sum over all (s, h) of exp(-E), summing both layers explicitly
double brute_log_z(const RbmParams& p) {
    std::vector<double> terms;
    for (std::uint64_t ms = 0; ms < (1u << p.visible()); ++ms) {
        for (std::uint64_t mh = 0; mh < (1u << p.hidden()); ++mh) {
            terms.push_back(-naive_energy(p, bits(ms, p.visible()), bits(mh, p.hidden())));
        }
    }
    const double hi = *std::max_element(terms.begin(), terms.end());
    double acc = 0.0;
    for (double t : terms) acc += std::exp(t - hi);
    return hi + std::log(acc);
}

SupportDataset dataset_from_rows(const std::vector<std::vector<int>>& rows, std::size_t N, std::size_t F) {
    SupportDataset d;
    d.num_points = N;
    d.num_freqs = F;
    d.k_min = 0.0;
    d.k_max = 1.0;
    d.bits.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(N * F));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t c = 0; c < N * F; ++c) {
            d.bits(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = static_cast<std::uint8_t>(rows[r][c]);
        }
    }
    return d;
}

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / ("fkdiag_test_rbm_" + name)).string();
}

}  // namespace

TEST(Energy, ZeroStatesGiveZero) {
    const auto p = random_params(6, 3, 1.0, 1);
    EXPECT_EQ(energy(p, Eigen::VectorXd::Zero(6), Eigen::VectorXd::Zero(3)), 0.0);
}

TEST(Energy, AllVisibleOnNoHidden) {
    const auto p = random_params(6, 3, 1.0, 2);
    EXPECT_NEAR(energy(p, Eigen::VectorXd::Ones(6), Eigen::VectorXd::Zero(3)), -p.b.sum(), 1e-14);
}

TEST(Energy, MatchesTripleSum) {
    const auto p = random_params(6, 3, 1.5, 3);
    for (std::uint64_t ms = 0; ms < 64; ms += 5) {
        for (std::uint64_t mh = 0; mh < 8; ++mh) {
            const auto s = bits(ms, 6);
            const auto h = bits(mh, 3);
            EXPECT_NEAR(energy(p, s, h), naive_energy(p, s, h), 1e-13);
        }
    }
}

TEST(Energy, InvariantUnderHiddenRelabeling) {
    const auto p = random_params(6, 3, 1.0, 4);
    const std::array<int, 3> perm = {2, 0, 1};
    RbmParams q = p;
    for (int l = 0; l < 3; ++l) {
        q.a[l] = p.a[perm[static_cast<std::size_t>(l)]];
        q.W.col(l) = p.W.col(perm[static_cast<std::size_t>(l)]);
    }
    for (std::uint64_t ms = 0; ms < 64; ms += 7) {
        for (std::uint64_t mh = 0; mh < 8; ++mh) {
            const auto s = bits(ms, 6);
            const auto h = bits(mh, 3);
            Eigen::VectorXd hp(3);
            for (int l = 0; l < 3; ++l) hp[l] = h[perm[static_cast<std::size_t>(l)]];
            EXPECT_NEAR(energy(q, s, hp), energy(p, s, h), 1e-13);
        }
    }
}

TEST(Energy, RejectsWrongSizes) {
    const auto p = random_params(6, 3, 1.0, 5);
    EXPECT_THROW(energy(p, Eigen::VectorXd::Zero(5), Eigen::VectorXd::Zero(3)), DimensionError);
}

TEST(Conditionals, ZeroParamsGiveHalf) {
    const auto p = RbmParams::zeros(6, 2);
    EXPECT_TRUE(cond_h_given_s(p, Eigen::VectorXd::Ones(6)).isApproxToConstant(0.5));
    EXPECT_TRUE(cond_s_given_h(p, Eigen::VectorXd::Ones(2)).isApproxToConstant(0.5));
}

TEST(Conditionals, Saturation) {
    auto p = RbmParams::zeros(6, 2);
    p.a.setConstant(50.0);
    p.b.setConstant(50.0);
    for (double v : cond_h_given_s(p, Eigen::VectorXd::Zero(6))) EXPECT_LT(std::abs(1.0 - v), 1e-20);
    for (double v : cond_s_given_h(p, Eigen::VectorXd::Zero(2))) EXPECT_LT(std::abs(1.0 - v), 1e-20);
}

TEST(Conditionals, MatchEnumeration) {
    const auto p = random_params(6, 2, 1.2, 6);
    for (std::uint64_t ms = 0; ms < 64; ++ms) {
        const auto s = bits(ms, 6);
        double z = 0.0;
        Eigen::VectorXd num = Eigen::VectorXd::Zero(2);
        for (std::uint64_t mh = 0; mh < 4; ++mh) {
            const auto h = bits(mh, 2);
            const double w = std::exp(-naive_energy(p, s, h));
            z += w;
            num += w * h;
        }
        EXPECT_LT((cond_h_given_s(p, s) - num / z).cwiseAbs().maxCoeff(), 1e-14);
    }
    for (std::uint64_t mh = 0; mh < 4; ++mh) {
        const auto h = bits(mh, 2);
        double z = 0.0;
        Eigen::VectorXd num = Eigen::VectorXd::Zero(6);
        for (std::uint64_t ms = 0; ms < 64; ++ms) {
            const auto s = bits(ms, 6);
            const double w = std::exp(-naive_energy(p, s, h));
            z += w;
            num += w * s;
        }
        EXPECT_LT((cond_s_given_h(p, h) - num / z).cwiseAbs().maxCoeff(), 1e-14);
    }
}

TEST(Conditionals, JointFactorizesThroughHiddenConditional) {
    const auto p = random_params(5, 3, 1.0, 7);
    const double log_z = exact_log_partition(p);
    const auto ps = exact_visible_distribution(p);
    for (std::uint64_t ms = 0; ms < 32; ++ms) {
        const auto s = bits(ms, 5);
        const auto ch = cond_h_given_s(p, s);
        for (std::uint64_t mh = 0; mh < 8; ++mh) {
            const auto h = bits(mh, 3);
            double prod = ps[ms];
            for (Eigen::Index l = 0; l < 3; ++l) prod *= h[l] > 0.5 ? ch[l] : 1.0 - ch[l];
            EXPECT_NEAR(std::exp(-energy(p, s, h) - log_z), prod, 1e-14);
        }
    }
}

TEST(Partition, ZeroParams) {
    const auto p = RbmParams::zeros(7, 4);
    EXPECT_NEAR(exact_log_partition(p), 11.0 * std::numbers::ln2, 1e-12);
}

TEST(Partition, IndependentUnits) {
    auto p = random_params(6, 3, 1.0, 8);
    p.W.setZero();
    double expected = 0.0;
    for (double b : p.b) expected += std::log1p(std::exp(b));
    for (double a : p.a) expected += std::log1p(std::exp(a));
    EXPECT_NEAR(exact_log_partition(p), expected, 1e-12);
}

TEST(Partition, BothMarginalizationOrdersAgree) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto p = random_params(8, 5, 1.0, 100 + seed);
        EXPECT_NEAR(log_partition_over_visible(p), log_partition_over_hidden(p), 1e-10);
    }
}

TEST(Partition, MatchesFullDoubleSum) {
    const auto p = random_params(5, 3, 1.3, 9);
    EXPECT_NEAR(exact_log_partition(p), brute_log_z(p), 1e-12);
}

TEST(Partition, SizeBound) {
    EXPECT_THROW(exact_log_partition(RbmParams::zeros(20, 5)), DomainError);
    EXPECT_NO_THROW(exact_log_partition(RbmParams::zeros(20, 4)));
}

TEST(Partition, VisibleDistributionSumsToOne) {
    const auto p = random_params(7, 3, 1.0, 10);
    const auto probs = exact_visible_distribution(p);
    double total = 0.0;
    for (double v : probs) total += v;
    EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(ExactKl, ZeroWhenModelEqualsData) {
    // W = 0, b = logit(1/2): uniform model; data covering all 2^3 states once -> KL 0
    const auto p = RbmParams::zeros(3, 1);
    RowMatrixXd data(8, 3);
    for (int m = 0; m < 8; ++m) data.row(m) = bits(static_cast<std::uint64_t>(m), 3).transpose();
    EXPECT_NEAR(exact_kl(data, p), 0.0, 1e-12);
    // single state under the uniform model: KL = log 8
    EXPECT_NEAR(exact_kl(data.topRows(1), p), std::log(8.0), 1e-12);
}

TEST(Gibbs, IndependentFairCoins) {
    const auto p = RbmParams::zeros(4, 2);
    GibbsChain chain(p, Eigen::VectorXd::Zero(4), 11);
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(4);
    const int steps = 100000;
    for (int i = 0; i < steps; ++i) {
        chain.step();
        mean += chain.visible();
    }
    mean /= steps;
    for (double m : mean) EXPECT_NEAR(m, 0.5, 0.01);
}

TEST(Gibbs, DeterministicUnderSeed) {
    const auto p = random_params(8, 3, 1.0, 12);
    const auto a = gibbs_chain(p, Eigen::VectorXd::Zero(8), 50, 99);
    const auto b = gibbs_chain(p, Eigen::VectorXd::Zero(8), 50, 99);
    EXPECT_EQ(a, b);
    EXPECT_THROW(gibbs_chain(p, Eigen::VectorXd::Zero(8), 0, 99), DomainError);
}

TEST(Gibbs, OneRoundPreservesExactMarginals) {
    const auto p = random_params(5, 2, 1.0, 13);
    const auto probs = exact_visible_distribution(p);
    std::vector<double> cdf(probs.size());
    std::partial_sum(probs.begin(), probs.end(), cdf.begin());

    Eigen::VectorXd exact = Eigen::VectorXd::Zero(5);
    for (std::uint64_t m = 0; m < probs.size(); ++m) exact += probs[m] * bits(m, 5);

    const int chains = 100000;
    CounterRng draw(14, 0);
    Eigen::VectorXd after = Eigen::VectorXd::Zero(5);
    for (int c = 0; c < chains; ++c) {
        const double u = draw.uniform();
        const auto idx = static_cast<std::uint64_t>(std::upper_bound(cdf.begin(), cdf.end() - 1, u) - cdf.begin());
        GibbsChain chain(p, bits(idx, 5), 15, static_cast<std::uint64_t>(c));
        chain.step();
        after += chain.visible();
    }
    after /= chains;
    for (Eigen::Index n = 0; n < 5; ++n) {
        const double se = std::sqrt(exact[n] * (1.0 - exact[n]) / chains);
        EXPECT_LT(std::abs(after[n] - exact[n]), 3.0 * se) << "unit " << n;
    }
}

TEST(CdUpdate, ZeroLearningRateLeavesParamsUnchanged) {
    const auto p = random_params(6, 2, 1.0, 16);
    RowMatrixXd batch = RowMatrixXd::Zero(5, 6);
    batch(1, 2) = batch(3, 4) = 1.0;
    auto v = CdVelocity::zeros_like(p);
    const auto q = cd_update(p, batch, 1, 0.0, 0.5, 1e-4, v, 1);
    EXPECT_TRUE(q == p);
}

TEST(CdUpdate, StationaryAtIndependentFixedPoint) {
    auto p = RbmParams::zeros(4, 2);
    p.b << -1.0, 0.0, 0.5, 2.0;
    const int rows = 10000;
    CounterRng rng(17, 0);
    RowMatrixXd data(rows, 4);
    for (int r = 0; r < rows; ++r) {
        for (int n = 0; n < 4; ++n) data(r, n) = rng.bernoulli(logistic(p.b[n])) ? 1.0 : 0.0;
    }
    const auto g = cd_gradient(p, data, 1, 18);
    for (int n = 0; n < 4; ++n) {
        const double q = logistic(p.b[n]);
        const double se = std::sqrt(2.0 * q * (1.0 - q) / rows);
        EXPECT_LT(std::abs(g.db[n]), 3.0 * se) << "unit " << n;
    }
}

TEST(CdUpdate, LongChainsApproachExactLikelihoodGradient) {
    const auto p = random_params(4, 2, 0.8, 19);
    RowMatrixXd base(3, 4);
    base << 1, 0, 0, 1,
            0, 1, 1, 0,
            1, 1, 0, 0;
    const int reps = 6000;
    RowMatrixXd data(3 * reps, 4);
    for (int r = 0; r < reps; ++r) data.middleRows(3 * r, 3) = base;

    // exact: <s h^T>_data - <s h^T>_model with h replaced by its conditional mean
    Eigen::MatrixXd dW = Eigen::MatrixXd::Zero(4, 2);
    Eigen::VectorXd db = Eigen::VectorXd::Zero(4);
    Eigen::VectorXd da = Eigen::VectorXd::Zero(2);
    for (int r = 0; r < 3; ++r) {
        const Eigen::VectorXd s = base.row(r).transpose();
        const auto h = cond_h_given_s(p, s);
        dW += s * h.transpose() / 3.0;
        db += s / 3.0;
        da += h / 3.0;
    }
    const auto probs = exact_visible_distribution(p);
    for (std::uint64_t m = 0; m < probs.size(); ++m) {
        const auto s = bits(m, 4);
        const auto h = cond_h_given_s(p, s);
        dW -= probs[m] * s * h.transpose();
        db -= probs[m] * s;
        da -= probs[m] * h;
    }

    const auto g = cd_gradient(p, data, 25, 20);
    EXPECT_LT((g.dW - dW).cwiseAbs().maxCoeff(), 0.02);
    EXPECT_LT((g.db - db).cwiseAbs().maxCoeff(), 0.02);
    EXPECT_LT((g.da - da).cwiseAbs().maxCoeff(), 0.02);
}

TEST(CdUpdate, GradientIndependentOfThreadCount) {
    const auto p = random_params(10, 3, 1.0, 21);
    CounterRng rng(22, 0);
    RowMatrixXd data(75, 10);
    for (Eigen::Index i = 0; i < data.size(); ++i) data.data()[i] = rng.bernoulli(0.3) ? 1.0 : 0.0;
    const auto g1 = cd_gradient(p, data, 2, 23, 1);
    const auto g4 = cd_gradient(p, data, 2, 23, 4);
    EXPECT_EQ(g1.dW, g4.dW);
    EXPECT_EQ(g1.db, g4.db);
    EXPECT_EQ(g1.da, g4.da);
}

TEST(CdUpdate, RejectsEmptyBatchAndZeroK) {
    const auto p = RbmParams::zeros(3, 1);
    auto v = CdVelocity::zeros_like(p);
    EXPECT_THROW(cd_update(p, RowMatrixXd(0, 3), 1, 0.1, 0.0, 0.0, v, 1), DomainError);
    EXPECT_THROW(cd_update(p, RowMatrixXd::Zero(2, 3), 0, 0.1, 0.0, 0.0, v, 1), DomainError);
}

TEST(InitParams, VisibleBiasFromEmpiricalMean) {
    const auto d = dataset_from_rows({{1, 0, 0, 1}, {1, 0, 1, 1}, {1, 0, 0, 1}, {0, 0, 1, 1}}, 2, 2);
    const auto p = init_params(d, 3, 0.01, 24);
    EXPECT_NEAR(p.b[0], std::log(3.0), 1e-12);
    EXPECT_NEAR(p.b[1], logit(1e-3), 1e-12);
    EXPECT_NEAR(p.b[2], 0.0, 1e-12);
    EXPECT_NEAR(p.b[3], logit(1.0 - 1e-3), 1e-12);
    EXPECT_TRUE(p.a.isZero());
    EXPECT_LT(p.W.cwiseAbs().maxCoeff(), 0.06);
}

TEST(Train, AllZeroDataDrivesBiasesNegative) {
    std::vector<std::vector<int>> rows(64, std::vector<int>(8, 0));
    const auto d = dataset_from_rows(rows, 4, 2);
    TrainingConfig cfg;
    cfg.epochs = 50;
    cfg.seed = 25;
    const auto r = train(d, 2, cfg);
    EXPECT_LT(cond_s_given_h(r.params, Eigen::VectorXd::Zero(2)).mean(), 0.05);
    ASSERT_EQ(r.log.size(), 51u);
    EXPECT_EQ(r.log.front().epoch, 0u);
    EXPECT_EQ(r.log.back().epoch, 50u);
    EXPECT_FALSE(std::isnan(r.log.back().kl_exact));
}

TEST(Train, DeterministicAndIndependentOfThreads) {
    CounterRng rng(26, 0);
    std::vector<std::vector<int>> rows(96, std::vector<int>(12, 0));
    for (auto& row : rows) {
        for (auto& v : row) v = rng.bernoulli(0.25);
    }
    const auto d = dataset_from_rows(rows, 4, 3);
    const SupportDataset copy = d;
    TrainingConfig cfg;
    cfg.epochs = 10;
    cfg.seed = 27;
    const auto r1 = train(d, 3, cfg);
    const auto r2 = train(copy, 3, cfg);
    cfg.threads = 3;
    const auto r3 = train(d, 3, cfg);
    EXPECT_TRUE(r1.params == r2.params);
    EXPECT_TRUE(r1.params == r3.params);
    cfg.seed = 28;
    EXPECT_FALSE(train(d, 3, cfg).params == r1.params);
}

TEST(Train, KlColumnIsNanForLargeModels) {
    std::vector<std::vector<int>> rows(8, std::vector<int>(20, 0));
    rows[0][3] = 1;
    const auto d = dataset_from_rows(rows, 5, 4);
    TrainingConfig cfg;
    cfg.epochs = 1;
    const auto r = train(d, 4, cfg);
    EXPECT_TRUE(std::isnan(r.log.back().kl_exact));
}

TEST(Train, RejectsEmptyDataset) {
    SupportDataset d;
    d.num_points = 2;
    d.num_freqs = 2;
    d.bits.resize(0, 4);
    EXPECT_THROW(train(d, 2, TrainingConfig{}), DomainError);
}

TEST(Train, ToyOneHotRowsAreReproducedBySamples) {
    // F = 4 rows, N = 4 columns, exactly one active bin per row: all 4^4 combinations
    const std::size_t F = 4, N = 4;
    std::vector<std::vector<int>> rows;
    for (int code = 0; code < 256; ++code) {
        std::vector<int> r(F * N, 0);
        for (std::size_t f = 0; f < F; ++f) r[f * N + static_cast<std::size_t>((code >> (2 * f)) & 3)] = 1;
        rows.push_back(r);
    }
    const auto d = dataset_from_rows(rows, N, F);
    TrainingConfig cfg;
    cfg.epochs = 1000;
    cfg.learning_rate = 0.1;
    cfg.seed = 29;
    const auto r = train(d, 16, cfg);

    // fraction of sampled rows with exactly one active bin
    GibbsChain chain(r.params, d.as_double().row(0).transpose(), 30);
    std::size_t good = 0, total = 0;
    double row_sum = 0.0;
    for (int i = 0; i < 20000; ++i) {
        chain.step();
        if (i % 10) continue;
        for (std::size_t f = 0; f < F; ++f) {
            const double sum = chain.visible().segment(static_cast<Eigen::Index>(f * N), static_cast<Eigen::Index>(N)).sum();
            good += sum == 1.0;
            row_sum += sum;
            ++total;
        }
    }
    EXPECT_GE(static_cast<double>(good) / static_cast<double>(total), 0.9);
    EXPECT_NEAR(row_sum / static_cast<double>(total), 1.0, 0.1);
}

TEST(RbmFile, RoundTripIsBitExact) {
    const auto p = random_params(12, 3, 1.0, 31);
    const std::string path = temp_path("roundtrip.rbm");
    save_rbm(p, {4, 3, 0.01, 0.3}, path);
    const auto r = load_rbm(path);
    EXPECT_TRUE(r.params == p);
    EXPECT_EQ(r.meta.num_points, 4u);
    EXPECT_EQ(r.meta.num_freqs, 3u);
    EXPECT_EQ(r.meta.k_min, 0.01);
    EXPECT_EQ(r.meta.k_max, 0.3);
    std::filesystem::remove(path);
}

TEST(RbmFile, HeaderLayout) {
    const auto p = random_params(6, 2, 1.0, 32);
    const std::string path = temp_path("header.rbm");
    save_rbm(p, {3, 2, 0.5, 1.5}, path);
    std::ifstream in(path, std::ios::binary);
    std::vector<unsigned char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    ASSERT_EQ(raw.size(), 4u + 4u + 4 * 8u + 2 * 8u + (6 + 2 + 12) * 8u);
    EXPECT_EQ(std::string(raw.begin(), raw.begin() + 4), "RBM1");
    auto u64_at = [&](std::size_t off) {
        std::uint64_t v = 0;
        for (int i = 7; i >= 0; --i) v = (v << 8) | raw[off + static_cast<std::size_t>(i)];
        return v;
    };
    EXPECT_EQ(raw[4], 1);
    EXPECT_EQ(u64_at(8), 6u);
    EXPECT_EQ(u64_at(16), 2u);
    EXPECT_EQ(u64_at(24), 3u);
    EXPECT_EQ(u64_at(32), 2u);
    std::filesystem::remove(path);
}

TEST(RbmFile, RejectsMismatchedLayout) {
    const std::string path = temp_path("mismatch.rbm");
    save_rbm(random_params(12, 2, 1.0, 33), {4, 3, 0.0, 1.0}, path);
    EXPECT_THROW(load_rbm(path, 6, 2), DimensionError);
    EXPECT_NO_THROW(load_rbm(path, 4, 3));
    std::filesystem::remove(path);
}

TEST(RbmFile, RejectsCorruptFiles) {
    const std::string path = temp_path("corrupt.rbm");
    save_rbm(random_params(4, 2, 1.0, 34), {2, 2, 0.0, 1.0}, path);
    {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(4);
        f.put(9);  // version
    }
    EXPECT_THROW(load_rbm(path), IoError);
    save_rbm(random_params(4, 2, 1.0, 34), {2, 2, 0.0, 1.0}, path);
    std::filesystem::resize_file(path, std::filesystem::file_size(path) - 3);
    EXPECT_THROW(load_rbm(path), IoError);
    EXPECT_THROW(load_rbm(temp_path("does_not_exist.rbm")), IoError);
    std::filesystem::remove(path);
}

TEST(RbmFile, RejectsMetadataInconsistentWithParams) {
    EXPECT_THROW(save_rbm(random_params(4, 2, 1.0, 35), {3, 2, 0.0, 1.0}, temp_path("bad.rbm")), DimensionError);
}
