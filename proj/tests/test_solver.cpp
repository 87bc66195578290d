#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "aphi/errors.hpp"
#include "aphi/noise.hpp"
#include "aphi/solver.hpp"
#include "aphi/spectral.hpp"
#include "aphi/stats.hpp"

using namespace aphi;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

AndersonOperator sampled(int M, std::uint64_t seed) {
    const TorusGrid g = TorusGrid::make(M);
    RngStream rng(seed, StreamPurpose::space_noise, 0);
    return ensure_positive(assemble(sample_space_white_noise(g, rng), renorm_constant(g), 0.0), 1.0).op;
}

RealField constant(const TorusGrid& g, double c) {
    RealField f(g);
    f.values.setConstant(c);
    return f;
}

// v' = -lambda v - v^3 from v0.
double cubic_ode(double v0, double lambda, double t) {
    const double e = std::exp(-2 * lambda * t);
    return v0 * std::exp(-lambda * t) / std::sqrt(1 + v0 * v0 * (1 - e) / lambda);
}

double run_constant(double v0, double dt, double T) {
    const AndersonOperator op = assemble(RealField(TorusGrid::make(4)), 0.0, 1.0);
    SolverConfig cfg;
    cfg.dt = dt;
    cfg.T = T;
    cfg.noise = false;
    RngStream rng(0, StreamPurpose::misc, 0);
    const Trajectory tr = simulate(op, constant(op.grid, v0), cfg, rng, {T});
    return tr.v.back().values.mean();
}

}  // namespace

TEST(SolverConfig, Validation) {
    SolverConfig c;
    EXPECT_NO_THROW(c.validate());
    c.dt = 0;
    try {
        c.validate();
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.key(), "solver.dt");
    }
    c = SolverConfig{};
    c.sigma = 0.6;
    EXPECT_THROW(c.validate(), ConfigError);
    c = SolverConfig{};
    c.p = 3;
    EXPECT_THROW(c.validate(), ConfigError);
    c = SolverConfig{};
    c.sigma = 0.45;
    c.q = 1.5;
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(StepV, PureLinearIsExact) {
    const AndersonOperator op = sampled(8, 1);
    RngStream rng(1, StreamPurpose::test_function, 0);
    RealField v0(op.grid);
    for (Eigen::Index i = 0; i < v0.values.size(); ++i) v0.values[i] = rng.normal();
    const TorusGrid& g = op.grid;
    EnhancedNoise z{0.0, 0, RealField(g), RealField(g), RealField(g), RealField(g)};
    SolverConfig cfg;
    cfg.dt = 0.01;
    cfg.T = 0.1;
    cfg.noise = false;
    cfg.nonlinear = false;
    Ensemble ens(op, cfg, 1);
    ens.set_v(op.to_modes(v0));
    for (int j = 0; j < 10; ++j) ens.step_with_increments(Eigen::MatrixXd::Zero(ens.truncation() + 1, 1));
    const RealField exact = heat_apply(op, 0.1, v0);
    EXPECT_LT((ens.v_physical().col(0) - exact.values).lpNorm<Eigen::Infinity>(), 1e-12);

    // Tiny data: the cubic term is below round-off.
    SolverState s{0.0, RealField(g, 1e-5 * v0.values), 0};
    const SolverState next = step_v(s, z, 0.01, op);
    const RealField lin = heat_apply(op, 0.01, s.v);
    EXPECT_LT((next.v.values - lin.values).lpNorm<Eigen::Infinity>(), 1e-10);
}

TEST(StepV, SmallEigenmodeWithCubicCorrection) {
    const AndersonOperator op = sampled(8, 2);
    const TorusGrid& g = op.grid;
    const double c = 1e-3, dt = 0.01, l0 = op.eigenvalues[0];
    const RealField phi0 = op.eigenvector(0);
    EnhancedNoise z{0.0, 0, RealField(g), RealField(g), RealField(g), RealField(g)};
    SolverState s{0.0, RealField(g, c * phi0.values), 0};
    const SolverState next = step_v(s, z, dt, op);
    const RealField cube(g, phi0.values.array().cube().matrix());
    const double proj = (1 - std::exp(-l0 * dt)) / l0 * std::pow(c, 3) * inner(cube, phi0);
    EXPECT_NEAR(inner(next.v, phi0), std::exp(-l0 * dt) * c - proj, 1e-13);
}

TEST(StepV, ScalarCubicMatchesClosedForm) {
    // Exponential Euler is first order, so at dt = 1e-3 the raw error is about 1e-4; the
    // Richardson extrapolation of two step sizes reaches 1e-6.
    const double exact = cubic_ode(1.0, 1.0, 1.0);
    const double coarse = run_constant(1.0, 1e-3, 1.0), fine = run_constant(1.0, 5e-4, 1.0);
    EXPECT_LT(std::abs(coarse - exact), 2e-4);
    EXPECT_NEAR(2 * fine - coarse, exact, 1e-6);
    EXPECT_NEAR(std::log2(std::abs(run_constant(1.0, 2e-3, 1.0) - exact) / std::abs(coarse - exact)), 1.0, 0.1);
}

TEST(StepV, StiffStepsAreSplit) {
    const AndersonOperator op = assemble(RealField(TorusGrid::make(4)), 0.0, 1.0);
    const EnhancedNoise z{0.0, 0, RealField(op.grid), RealField(op.grid), RealField(op.grid), RealField(op.grid)};
    const SolverState s = step_v({0.0, constant(op.grid, 200.0), 0}, z, 0.01, op);
    EXPECT_GT(s.substeps, 0);
    const double ref = cubic_ode(200.0, 1.0, 0.5);
    EXPECT_NEAR(run_constant(200.0, 0.01, 0.5), ref, 0.05 * ref);
    EXPECT_NEAR(run_constant(200.0, 0.001, 0.5), ref, 0.01 * ref);
}

TEST(Simulate, ReproducibleBitForBit) {
    const AndersonOperator op = sampled(8, 3);
    SolverConfig cfg;
    cfg.dt = 0.01;
    cfg.T = 0.5;
    RngStream a(4, StreamPurpose::time_noise, 0), b(4, StreamPurpose::time_noise, 0);
    const Trajectory ta = simulate(op, RealField(op.grid), cfg, a, {0.5});
    const Trajectory tb = simulate(op, RealField(op.grid), cfg, b, {0.5});
    EXPECT_EQ(ta.u.back().values, tb.u.back().values);
    EXPECT_EQ(ta.diagnostics.size(), 51u);
}

TEST(Simulate, NoiseOffDissipatesEnergy) {
    const AndersonOperator op = sampled(16, 4);
    SolverConfig cfg;
    cfg.dt = 0.005;
    cfg.T = 2.0;
    cfg.noise = false;
    const RealField u0 = RealField::from_function(op.grid, [](double x, double y) { return 2 * std::sin(x) + std::cos(y); });
    RngStream rng(0, StreamPurpose::misc, 0);
    const Trajectory tr = simulate(op, u0, cfg, rng, {}, 20);
    const double l0 = op.lowest_eigenvalue(), n0 = lp_norm(u0, 2.0);
    for (const DiagnosticRow& r : tr.diagnostics) EXPECT_LE(r.l2, std::exp(-l0 * r.t) * n0 * (1 + 1e-12));
}

namespace {

// Endpoints v(T) at dt, dt/2, dt/4 with the fine OU increments aggregated exactly:
// I_dt = e^{-lambda dt/2} I_1 + I_2.
std::vector<Eigen::VectorXd> halving_endpoints(const AndersonOperator& op, const RealField& u0,
                                               double dt, double T, bool noise) {
    const int n_fine = int(std::llround(T / (dt / 4)));
    const int modes = op.dimension();
    RngStream rng(6, StreamPurpose::time_noise, 0);
    Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(modes, n_fine);
    if (noise)
        for (int j = 0; j < n_fine; ++j)
            for (int k = 0; k < modes; ++k) Z(k, j) = rng.normal();
    std::vector<Eigen::VectorXd> ends;
    for (int level : {1, 2, 4}) {
        SolverConfig cfg;
        cfg.dt = dt / level;
        cfg.T = T;
        cfg.noise = noise;
        Ensemble ens(op, cfg, 1);
        ens.set_v(op.to_modes(u0));
        const int group = 4 / level;
        const double fine = dt / 4;
        for (int j = 0; j < n_fine / group; ++j) {
            Eigen::VectorXd inc = Eigen::VectorXd::Zero(modes);
            for (int i = 0; i < group; ++i)
                for (int k = 0; k < modes; ++k) {
                    const double l = op.eigenvalues[k];
                    inc[k] = std::exp(-l * fine) * inc[k] + std::sqrt(-std::expm1(-2 * l * fine) / l) * Z(k, j * group + i);
                }
            ens.step_with_increments(inc);
        }
        ends.push_back(ens.v_physical().col(0));
    }
    return ends;
}

double observed_order(const std::vector<Eigen::VectorXd>& e) {
    return std::log2((e[0] - e[1]).norm() / (e[1] - e[2]).norm());
}

}  // namespace

TEST(Simulate, DtHalvingIsFirstOrder) {
    const AndersonOperator op = sampled(8, 5);
    const RealField u0 = RealField::from_function(op.grid, [](double x, double y) { return std::cos(x) + 0.5 * std::sin(y); });
    EXPECT_GE(observed_order(halving_endpoints(op, u0, 0.02, 1.0, false)), 0.9);
}

TEST(Simulate, DtHalvingWithNoiseConverges) {
    // The OU field is only 1/2-Hoelder in time, so the strong order drops towards 1/2.
    const AndersonOperator op = sampled(8, 5);
    const RealField u0 = RealField::from_function(op.grid, [](double x, double) { return std::cos(x); });
    EXPECT_GE(observed_order(halving_endpoints(op, u0, 0.02, 1.0, true)), 0.4);
}

TEST(ParacontrolledMaps, TrivialCases) {
    const TorusGrid g = TorusGrid::make(16);
    RngStream rng(7, StreamPurpose::space_noise, 0);
    const RealField X = truncate_high(lift_X(sample_space_white_noise(g, rng)), 1);
    const RealField v = RealField::from_function(g, [](double x, double y) { return std::sin(x + 2 * y); });
    const RealField zero(g);
    EXPECT_EQ(phi_map(v, zero).values, v.values);
    EXPECT_EQ(phi_map(zero, X).values.norm(), 0.0);
    const ParacontrolledPair p = gamma_map(v, zero, 1);
    EXPECT_LT((p.v.values - v.values).norm(), 1e-14);
}

TEST(ParacontrolledMaps, RoundTripAndShrinkage) {
    const TorusGrid g = TorusGrid::make(16);
    double prev = kInf;
    for (int n = 1; n <= 3; ++n) {
        double worst = 0, dev = 0;
        for (int s = 0; s < 50; ++s) {
            RngStream rng(8, StreamPurpose::space_noise, s);
            const RealField X = truncate_high(lift_X(sample_space_white_noise(g, rng)), n);
            RngStream rv(9, StreamPurpose::test_function, s);
            RealField v(g);
            for (Eigen::Index i = 0; i < v.values.size(); ++i) v.values[i] = rv.normal();
            v = low_pass(v, 2);
            const RealField w = phi_map(v, X);
            const ParacontrolledPair p = gamma_map(w, X, n, 1e-15, 500);
            worst = std::max(worst, (p.v.values - v.values).lpNorm<Eigen::Infinity>() / v.values.lpNorm<Eigen::Infinity>());
            dev += lp_norm(RealField(g, w.values - v.values), 2.0) / lp_norm(v, 2.0);
        }
        EXPECT_LT(worst, 1e-10) << "n = " << n;
        EXPECT_LT(dev, prev) << "n = " << n;
        prev = dev;
    }
}

TEST(ParacontrolledMaps, NormEquivalence) {
    const TorusGrid g = TorusGrid::make(16);
    for (double p : {2.0, 4.0, 6.0}) {
        double lo = kInf, hi = 0;
        for (int s = 0; s < 20; ++s) {
            RngStream rng(10, StreamPurpose::space_noise, s);
            const RealField X = truncate_high(lift_X(sample_space_white_noise(g, rng)), 2);
            RngStream rv(11, StreamPurpose::test_function, s);
            RealField v(g);
            for (Eigen::Index i = 0; i < v.values.size(); ++i) v.values[i] = rv.normal();
            const double r = lp_norm(phi_map(v, X), p) / lp_norm(v, p);
            lo = std::min(lo, r);
            hi = std::max(hi, r);
        }
        EXPECT_GT(lo, 0.5);
        EXPECT_LT(hi, 2.0);
    }
}

TEST(RemainderBudget, ZeroAndConstant) {
    const TorusGrid g = TorusGrid::make(8);
    const RealField zero(g);
    EnhancedNoise z{0.0, 0, zero, zero, zero, zero};
    const RemainderBudget b0 = remainder_equation_diagnostics({zero, zero, 1, 0, 0.0}, zero, zero, z, 2);
    EXPECT_EQ(b0.w_power, 0.0);
    EXPECT_EQ(b0.gradient, 0.0);
    EXPECT_EQ(b0.q1, 0.0);
    const RealField c = constant(g, 0.7);
    const RemainderBudget bc = remainder_equation_diagnostics({c, c, 1, 0, 0.0}, zero, zero, z, 2);
    EXPECT_NEAR(bc.gradient, 0.0, 1e-14);
    EXPECT_NEAR(bc.w_power, std::pow(0.7, 6) * g.volume(), 1e-12);
}

TEST(StepEta, HeatFlowAndLinearity) {
    const AndersonOperator op = sampled(8, 12);
    const TorusGrid& g = op.grid;
    const RealField h = RealField::from_function(g, [](double x, double) { return std::cos(x); });
    RealField eta = h;
    for (int j = 0; j < 10; ++j) eta = step_eta(eta, RealField(g), RealField(g), 0.01, op);
    EXPECT_LT((eta.values - heat_apply(op, 0.1, h).values).lpNorm<Eigen::Infinity>(), 1e-12);

    const RealField u = RealField::from_function(g, [](double x, double y) { return std::sin(x) * 2 + y * 0; });
    const RealField sig = constant(g, 0.3);
    const RealField h2 = RealField::from_function(g, [](double, double y) { return std::sin(2 * y); });
    const RealField comb(g, 2 * h.values - 3 * h2.values);
    const RealField lhs = step_eta(comb, u, sig, 0.01, op);
    const Eigen::VectorXd rhs = 2 * step_eta(h, u, sig, 0.01, op).values - 3 * step_eta(h2, u, sig, 0.01, op).values;
    EXPECT_LT((lhs.values - rhs).lpNorm<Eigen::Infinity>(), 1e-10);
}

TEST(StepEta, FiniteDifferenceConsistency) {
    const AndersonOperator op = sampled(8, 13);
    const TorusGrid& g = op.grid;
    SolverConfig cfg;
    cfg.dt = 0.01;
    cfg.T = 0.5;
    const RealField u0 = RealField::from_function(g, [](double, double y) { return 0.5 * std::sin(y); });
    const RealField h = RealField::from_function(g, [](double x, double) { return std::cos(x); });
    const double delta = 1e-4;
    Ensemble base(op, cfg, 1), bumped(op, cfg, 1);
    base.set_v(op.to_modes(u0));
    base.set_tangent(op.to_modes(h));
    bumped.set_v(op.to_modes(RealField(g, u0.values + delta * h.values)));
    RngStream rng(14, StreamPurpose::time_noise, 0);
    for (int j = 0; j < cfg.steps(); ++j) {
        base.step(std::span<RngStream>(&rng, 1));
        bumped.step_with_increments(base.last_increments());
    }
    const Eigen::VectorXd fd = (bumped.v_modes().col(0) - base.v_modes().col(0)) / delta;
    const Eigen::VectorXd eta = base.tangent_modes().col(0);
    EXPECT_LT((fd - eta).norm() / eta.norm(), 0.05);
}

TEST(ShiftedData, TrivialCases) {
    const AndersonOperator op = sampled(8, 15);
    const TorusGrid& g = op.grid;
    auto make = [&](double s) {
        RngStream r(16, StreamPurpose::misc, std::uint64_t(s * 10));
        RealField a(g), b(g), c(g), sg = constant(g, 0.2);
        for (int i = 0; i < g.size(); ++i) a.values[i] = r.normal(), b.values[i] = r.normal(), c.values[i] = r.normal();
        return EnhancedNoise{s, g.size() - 1, a, b, c, sg};
    };
    const std::vector<EnhancedNoise> z{make(0.0), make(0.1)};
    const std::vector<EnhancedNoise> same = shifted_data(z, RealField(g), op);
    for (int j = 0; j < 2; ++j) {
        EXPECT_EQ(same[j].z1.values, z[j].z1.values);
        EXPECT_EQ(same[j].z2.values, z[j].z2.values);
        EXPECT_EQ(same[j].z3.values, z[j].z3.values);
    }
    const RealField zero(g);
    const std::vector<EnhancedNoise> z0{{0.0, 0, zero, zero, zero, zero}, {0.1, 0, zero, zero, zero, zero}};
    const RealField u0 = RealField::from_function(g, [](double x, double) { return std::cos(x); });
    const std::vector<EnhancedNoise> d = shifted_data(z0, u0, op);
    const Eigen::ArrayXd P = heat_apply(op, 0.1, u0).values.array();
    EXPECT_LT((d[1].z1.values.array() - 3 * P).matrix().norm(), 1e-12);
    EXPECT_LT((d[1].z2.values.array() - 3 * P.square()).matrix().norm(), 1e-12);
    EXPECT_LT((d[1].z3.values.array() - P.cube()).matrix().norm(), 1e-12);
}

TEST(ShiftedData, AnsatzEquivalence) {
    const AndersonOperator op = sampled(8, 17);
    const TorusGrid& g = op.grid;
    const int N = g.size() - 1;
    const double dt = 0.01;
    std::vector<RngStream> rs;
    rs.emplace_back(18, StreamPurpose::time_noise, 0);
    OUState ou = init_ou(op, N, OuStart::zero, rs);
    std::vector<EnhancedNoise> z;
    for (int j = 0; j < 50; ++j) {
        z.push_back(enhanced_data(op, ou, N));
        ou = step_ou(op, ou, dt, rs);
    }
    const RealField u0 = RealField::from_function(g, [](double x, double y) { return 0.5 * std::cos(x) + 0.3 * std::sin(y); });
    const std::vector<EnhancedNoise> zt = shifted_data(z, u0, op);
    SolverState a{0.0, u0, 0}, b{0.0, RealField(g), 0};
    for (int j = 0; j < 50; ++j) {
        a = step_v(a, z[j], dt, op);
        b = step_v(b, zt[j], dt, op);
        ASSERT_EQ(a.substeps + b.substeps, 0);
        const Eigen::VectorXd rebuilt = b.v.values + heat_apply(op, (j + 1) * dt, u0).values;
        EXPECT_LT((a.v.values - rebuilt).lpNorm<Eigen::Infinity>(), 1e-8);
    }
}

TEST(Diagnostics, ZeroNoiseAndMonotonicity) {
    const TorusGrid g = TorusGrid::make(8);
    const RealField zero(g);
    std::vector<EnhancedNoise> z0;
    for (int j = 0; j < 5; ++j) z0.push_back({0.1 * j, 0, zero, zero, zero, zero});
    const DiagnosticConstants d0 = diagnostic_constants(z0, 2, 0.25, 8.0, 0.5, 1.0);
    for (std::size_t j = 0; j < d0.K.size(); ++j) {
        EXPECT_EQ(d0.K[j], 0.0);
        EXPECT_EQ(d0.K_tilde[j], 0.0);
    }
    const AndersonOperator op = sampled(8, 19);
    SolverConfig cfg;
    cfg.dt = 0.01;
    cfg.T = 1.0;
    RngStream rng(20, StreamPurpose::time_noise, 0);
    const Trajectory tr = simulate(op, RealField(g), cfg, rng, {});
    for (std::size_t j = 1; j < tr.diagnostics.size(); ++j) {
        EXPECT_GE(tr.diagnostics[j].K, tr.diagnostics[j - 1].K);
        EXPECT_GE(tr.diagnostics[j].K_tilde, tr.diagnostics[j - 1].K_tilde);
    }
}

TEST(Diagnostics, KTildeHasFiniteMoments) {
    const AndersonOperator op = sampled(8, 21);
    SolverConfig cfg;
    cfg.dt = 0.02;
    cfg.T = 1.0;
    std::vector<double> k;
    for (int s = 0; s < 100; ++s) {
        RngStream rng(22, StreamPurpose::time_noise, s);
        k.push_back(simulate(op, RealField(op.grid), cfg, rng, {}, cfg.steps()).diagnostics.back().K_tilde);
    }
    const MeanEstimate m = estimate_mean(k);
    EXPECT_TRUE(std::isfinite(m.mean));
    EXPECT_TRUE(std::isfinite(sample_variance(k)));
    EXPECT_LT(m.stderr_, 0.2 * m.mean);
}
