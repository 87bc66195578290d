#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "aphi/errors.hpp"
#include "aphi/noise.hpp"
#include "aphi/stats.hpp"
#include "aphi/wick.hpp"

using namespace aphi;

namespace {

AndersonOperator sampled(int M, std::uint64_t seed) {
    const TorusGrid g = TorusGrid::make(M);
    RngStream rng(seed, StreamPurpose::space_noise, 0);
    return ensure_positive(assemble(sample_space_white_noise(g, rng), renorm_constant(g), 0.0), 1.0).op;
}

// Operator with lambda_k = ell_h(k) + 2; mode 0 has lambda = 2.
AndersonOperator massive(int M) { return assemble(RealField(TorusGrid::make(M)), 0.0, 2.0); }

std::vector<RngStream> streams(std::uint64_t seed, int n, StreamPurpose p = StreamPurpose::ou_initial) {
    std::vector<RngStream> s;
    for (int i = 0; i < n; ++i) s.emplace_back(seed, p, i);
    return s;
}


std::vector<double> mode_samples(const OUState& s, int k) {
    std::vector<double> x(s.modes.cols());
    for (Eigen::Index b = 0; b < s.modes.cols(); ++b) x[b] = s.modes(k, b);
    return x;
}

}  // namespace

TEST(OrnsteinUhlenbeck, StationaryVarianceIsPreserved) {
    const AndersonOperator op = massive(4);
    ASSERT_NEAR(op.eigenvalues[0], 2.0, 1e-12);
    auto rngs = streams(1, 10000);
    OUState s = init_ou(op, 0, OuStart::stationary, rngs);
    auto steps = streams(2, 10000, StreamPurpose::time_noise);
    for (int j = 0; j < 5; ++j) s = step_ou(op, s, 0.1, steps);
    EXPECT_NEAR(sample_variance(mode_samples(s, 0)), 0.5, 0.05 * 0.5);
    EXPECT_NEAR(ou_variance(2.0, 3.0, OuStart::stationary), 0.5, 1e-15);
}

TEST(OrnsteinUhlenbeck, OneStepFromZero) {
    const AndersonOperator op = massive(4);
    auto rngs = streams(3, 10000);
    OUState s = init_ou(op, 3, OuStart::zero, rngs);
    EXPECT_EQ(s.modes.norm(), 0.0);
    auto steps = streams(4, 10000, StreamPurpose::time_noise);
    const double dt = 0.05;
    s = step_ou(op, s, dt, steps);
    for (int k = 0; k <= 3; ++k) {
        const double l = op.eigenvalues[k];
        const double target = (1 - std::exp(-2 * l * dt)) / l;
        EXPECT_NEAR(sample_variance(mode_samples(s, k)), target, 0.05 * target);
        EXPECT_NEAR(ou_variance(l, dt, OuStart::zero), target, 1e-15);
    }
}

TEST(OrnsteinUhlenbeck, LongStepForgetsStart) {
    const AndersonOperator op = massive(4);
    auto rngs = streams(5, 2000);
    OUState s = init_ou(op, 0, OuStart::zero, rngs);
    s.modes.setConstant(5.0);
    auto steps = streams(6, 2000, StreamPurpose::time_noise);
    s = step_ou(op, s, 20.0, steps);
    const double sd = 1 / std::sqrt(2.0);
    const KsResult ks = ks_one_sample(mode_samples(s, 0), [&](double x) { return normal_cdf(x / sd); });
    EXPECT_GT(ks.p_value, 0.01);
}

TEST(AssembleField, ModesAndOrthonormality) {
    const AndersonOperator op = sampled(8, 1);
    auto rngs = streams(7, 1);
    OUState s = init_ou(op, 20, OuStart::zero, rngs);
    EXPECT_EQ(assemble_field(op, s, 20).values.norm(), 0.0);
    s.modes(0, 0) = 1.0;
    EXPECT_LT((assemble_field(op, s, 0).values - op.eigenvector(0).values).norm(), 1e-12);
    s = init_ou(op, 20, OuStart::stationary, rngs);
    const RealField f = assemble_field(op, s, 12);
    for (int j = 0; j <= 20; ++j)
        EXPECT_NEAR(inner(f, op.eigenvector(j)), j <= 12 ? s.modes(j, 0) : 0.0, 1e-10);
}

TEST(WickPower, HermiteValuesAndDegenerateVariance) {
    EXPECT_DOUBLE_EQ(hermite(2, 2.0, 1.0), 3.0);
    EXPECT_DOUBLE_EQ(hermite(3, 2.0, 1.0), 2.0);
    const TorusGrid g = TorusGrid::make(4);
    RealField u(g), one(g), zero(g);
    u.values.setConstant(2.0);
    one.values.setOnes();
    EXPECT_NEAR(wick_power(u, one, 2).values.maxCoeff(), 3.0, 1e-15);
    EXPECT_NEAR(wick_power(u, one, 3).values.maxCoeff(), 2.0, 1e-15);
    EXPECT_NEAR(wick_power(u, zero, 2).values.minCoeff(), 4.0, 1e-15);
    EXPECT_NEAR(wick_power(u, zero, 3).values.minCoeff(), 8.0, 1e-15);
    EXPECT_THROW(wick_power(u, one, 4), DomainError);
}

TEST(SigmaProfile, TraceIdentityAndZeroStart) {
    const AndersonOperator op = sampled(8, 2);
    const int N = op.dimension() - 1;
    EXPECT_EQ(sigma_profile(op, N, 0.0, OuStart::zero).values.norm(), 0.0);
    const RealField s = sigma_profile(op, N, 0.0, OuStart::stationary);
    double tr = 0;
    for (int k = 0; k <= N; ++k) tr += 1.0 / op.eigenvalues[k];
    const double L2 = op.grid.volume();
    EXPECT_NEAR(op.grid.cell_area() * s.values.sum() / L2, tr / L2, 1e-12);
}

TEST(SigmaProfile, MatchesEmpiricalVariance) {
    const AndersonOperator op = sampled(8, 3);
    const int N = 40;
    auto rngs = streams(8, 10000);
    const OUState s = init_ou(op, N, OuStart::stationary, rngs);
    const RealField sigma = sigma_profile(op, N, 0.0, OuStart::stationary);
    const Eigen::MatrixXd F = op.basis->leftCols(N + 1) * s.modes / op.grid.spacing();
    for (int i = 0; i < 10; ++i) {
        const int x = i * 6;
        double v = F.row(x).squaredNorm() / F.cols();
        EXPECT_NEAR(v, sigma.values[x], 0.05 * sigma.values[x]);
    }
}

TEST(EnhancedData, ZeroModesAndAlgebra) {
    const AndersonOperator op = sampled(8, 4);
    auto rngs = streams(9, 1);
    OUState s = init_ou(op, 30, OuStart::zero, rngs);
    const EnhancedNoise z0 = enhanced_data(op, s, 30);
    EXPECT_EQ(z0.z1.values.norm(), 0.0);
    EXPECT_EQ(z0.z3.values.norm(), 0.0);
    EXPECT_LT((z0.z2.values + 3 * z0.sigma.values).norm(), 1e-14);
    s = init_ou(op, 30, OuStart::stationary, rngs);
    const EnhancedNoise z = enhanced_data(op, s, 30);
    const Eigen::ArrayXd x = z.z1.values.array() / 3;
    EXPECT_LT((z.z2.values.array() - 3 * (x.square() - z.sigma.values.array())).matrix().lpNorm<Eigen::Infinity>(), 1e-12);
    EXPECT_LT((z.z3.values.array() - (x.cube() - 3 * z.sigma.values.array() * x)).matrix().lpNorm<Eigen::Infinity>(), 1e-12);
}

TEST(Wick, CancellationAndChaosCovariance) {
    const AndersonOperator op = sampled(8, 5);
    const int N = op.dimension() - 1;
    WickSampling ws{10000, 3, 2};
    std::vector<int> sites;
    for (int x = 0; x < op.dimension(); ++x) sites.push_back(x);
    int outside = 0;
    for (const SiteMean& m : wick_cancellation(op, N, sites, ws)) outside += std::abs(m.mean) >= 3 * m.stderr_;
    EXPECT_LE(outside, 2);  // 64 sites, about 0.2 expected beyond 3 sigma

    ws.samples = 100000;
    const auto g = op.grid;
    const std::vector<std::pair<int, int>> pairs{{g.index(4, 4), g.index(4, 4)}, {g.index(4, 4), g.index(5, 4)},
                                                 {g.index(4, 4), g.index(5, 5)}, {g.index(1, 2), g.index(2, 2)},
                                                 {g.index(0, 0), g.index(0, 7)}};
    for (const CovariancePair& p : chaos_covariance(op, N, pairs, ws)) EXPECT_LT(p.relative_error, 0.15);
}

TEST(Wick, SigmaLogDivergence) {
    const AndersonOperator op = sampled(16, 6);
    const LogDivergence ld = sigma_log_divergence(op, {16, 32, 64, 128});
    EXPECT_GT(ld.r_squared, 0.9);
    EXPECT_GT(ld.slope, 0.0);
}

TEST(Wick, WorkersDoNotChangeStatistics) {
    const AndersonOperator op = sampled(8, 7);
    WickSampling a{500, 4, 1}, b{500, 4, 3};
    const auto ra = wick_cancellation(op, 63, {0, 9, 30}, a), rb = wick_cancellation(op, 63, {0, 9, 30}, b);
    for (int i = 0; i < 3; ++i) EXPECT_EQ(ra[i].mean, rb[i].mean);
}

TEST(BinomialShift, TrivialCases) {
    const AndersonOperator op = sampled(8, 8);
    auto rngs = streams(10, 1);
    const int N = op.dimension() - 1;
    const OUState s = init_ou(op, N, OuStart::stationary, rngs);
    const EnhancedNoise z = enhanced_data(op, s, N);
    const RealField X = assemble_field(op, s, N);
    const std::array<RealField, 3> w{X, wick_power(X, z.sigma, 2), wick_power(X, z.sigma, 3)};
    const RealField zero(op.grid);
    for (int n = 1; n <= 3; ++n)
        EXPECT_LT((binomial_shift(w, zero, n).values - w[n - 1].values).norm(), 1e-12);
    RngStream r(11, StreamPurpose::misc, 0);
    RealField P(op.grid);
    for (Eigen::Index i = 0; i < P.values.size(); ++i) P.values[i] = r.normal();
    EXPECT_LT((binomial_shift(w, P, 1).values - (X.values - P.values)).norm(), 1e-12);
}

TEST(BinomialShift, JointModalSimulation) {
    // X_{-inf,t} = e^{-lambda (t-s)} X_{-inf,s} + I; the shifted process X_{s,t} is the I part.
    const AndersonOperator op = sampled(8, 9);
    const int N = op.dimension() - 1;
    const double gap = 0.3;
    const RealField sigma = sigma_profile(op, N, 0.0, OuStart::stationary);
    for (int sample = 0; sample < 20; ++sample) {
        auto a = streams(12 + sample, 1);
        OUState s = init_ou(op, N, OuStart::stationary, a);
        const RealField Xs = assemble_field(op, s, N);
        auto b = streams(100 + sample, 1, StreamPurpose::time_noise);
        const OUState t = step_ou(op, s, gap, b);
        const RealField Xt = assemble_field(op, t, N);
        const RealField P = heat_apply(op, gap, Xs);
        const std::array<RealField, 3> w{Xt, wick_power(Xt, sigma, 2), wick_power(Xt, sigma, 3)};
        const RealField shifted(op.grid, Xt.values - P.values);
        for (int n = 1; n <= 3; ++n) {
            const RealField direct = n == 1 ? shifted : wick_power(shifted, sigma, n);
            const RealField viaB = binomial_shift(w, P, n);
            EXPECT_LT((viaB.values - direct.values).lpNorm<Eigen::Infinity>(),
                      1e-10 * std::max(1.0, direct.values.lpNorm<Eigen::Infinity>()));
        }
    }
}

TEST(Conditioning, VacuousBoxAcceptsImmediately) {
    const AndersonOperator op = sampled(8, 10);
    RngStream rng(13, StreamPurpose::conditioning, 0);
    const ConditionedPath p = low_mode_conditioned_sample(op, 2, 1e6, 0.25, 1.0, 0.01, rng,
                                                          ConditioningMethod::path_rejection, 10);
    EXPECT_TRUE(p.accepted);
    EXPECT_EQ(p.attempts, 1);
    EXPECT_EQ(p.path.size(), 101u);
    EXPECT_EQ(p.increments.size(), 100u);
}

TEST(Conditioning, AcceptanceFallsWithMoreModes) {
    const AndersonOperator op = sampled(8, 11);
    const double eps_box = 0.4;
    double prev = 2.0;
    for (int N : {0, 1, 2}) {
        int accepted = 0;
        for (int s = 0; s < 300; ++s) {
            RngStream rng(14, StreamPurpose::conditioning, s);
            accepted += low_mode_conditioned_sample(op, N, eps_box, 0.25, 1.0, 0.02, rng,
                                                    ConditioningMethod::path_rejection, 1).accepted;
        }
        const double rate = accepted / 300.0;
        if (N == 0) EXPECT_GT(rate, 0.0);
        if (prev > 0.0)
            EXPECT_LT(rate, prev) << "N_cond " << N;
        else
            EXPECT_EQ(rate, 0.0) << "N_cond " << N;
        prev = rate;
    }
}

TEST(Conditioning, SmallerBoxGivesSmallerSupremum) {
    const AndersonOperator op = sampled(8, 12);
    double prev = 1e300;
    for (double eps : {1.0, 0.3, 0.1}) {
        double sup = 0;
        for (int s = 0; s < 20; ++s) {
            RngStream rng(15, StreamPurpose::conditioning, s);
            const ConditionedPath p = low_mode_conditioned_sample(op, 1, eps, 0.25, 1.0, 0.02, rng,
                                                                  ConditioningMethod::stepwise);
            ASSERT_TRUE(p.accepted);
            for (const auto& x : p.path) {
                ASSERT_LE(x.lpNorm<Eigen::Infinity>(), p.bound * (1 + 1e-12));
                sup = std::max(sup, x.lpNorm<Eigen::Infinity>());
            }
        }
        EXPECT_LT(sup, prev);
        prev = sup;
    }
}
