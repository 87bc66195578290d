#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "aphi/errors.hpp"
#include "aphi/noise.hpp"
#include "aphi/spectral.hpp"
#include "aphi/stats.hpp"

using namespace aphi;

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

TEST(SpaceWhiteNoise, SiteStandardDeviation) {
    const TorusGrid g = TorusGrid::make(64);
    RngStream rng(1, StreamPurpose::space_noise, 0);
    const RealField xi = sample_space_white_noise(g, rng);
    const double sd = std::sqrt(xi.values.squaredNorm() / g.size());
    EXPECT_NEAR(sd, 64 / (2 * M_PI), 0.03 * 64 / (2 * M_PI));
}

TEST(SpaceWhiteNoise, PairingWithOne) {
    const TorusGrid g = TorusGrid::make(8);
    RealField one(g);
    one.values.setOnes();
    std::vector<double> x;
    for (int s = 0; s < 1000; ++s) {
        RngStream rng(2, StreamPurpose::space_noise, s);
        x.push_back(inner(sample_space_white_noise(g, rng), one));
    }
    const MeanEstimate m = estimate_mean(x);
    EXPECT_LT(std::abs(m.mean), 3 * m.stderr_);
    EXPECT_NEAR(sample_variance(x), 4 * M_PI * M_PI, 0.1 * 4 * M_PI * M_PI);
}

TEST(SpaceWhiteNoise, Reproducible) {
    const TorusGrid g = TorusGrid::make(16);
    RngStream a(3, StreamPurpose::space_noise, 0), b(3, StreamPurpose::space_noise, 0);
    EXPECT_EQ(sample_space_white_noise(g, a).values, sample_space_white_noise(g, b).values);
}

TEST(LiftX, SingleMode) {
    const TorusGrid g = TorusGrid::make(16);
    const double h = g.spacing();
    const RealField xi = RealField::from_function(g, [](double x, double) { return std::cos(x); });
    const double l = (2 - 2 * std::cos(h)) / (h * h);
    EXPECT_NEAR(laplacian_symbol(g, 1, 0), l, 1e-12);
    const RealField X = lift_X(xi);
    EXPECT_LT((X.values - xi.values / l).lpNorm<Eigen::Infinity>(), 1e-12);
}

TEST(LiftX, ConstantGivesZero) {
    const TorusGrid g = TorusGrid::make(8);
    RealField c(g);
    c.values.setConstant(4.0);
    EXPECT_LT(lift_X(c).values.lpNorm<Eigen::Infinity>(), 1e-12);
}

TEST(LiftX, StencilReproducesNoise) {
    const TorusGrid g = TorusGrid::make(32);
    RngStream rng(4, StreamPurpose::space_noise, 0);
    const RealField xi = sample_space_white_noise(g, rng);
    const RealField X = lift_X(xi);
    const Eigen::VectorXd back = -apply_laplacian(X).values.array() + mean(xi);
    const double scale = xi.values.lpNorm<Eigen::Infinity>();
    EXPECT_LT((back - xi.values).lpNorm<Eigen::Infinity>(), 1e-10 * scale);
}

TEST(TruncateHigh, Conventions) {
    const TorusGrid g = TorusGrid::make(16);
    RngStream rng(5, StreamPurpose::space_noise, 0);
    const RealField X = lift_X(sample_space_white_noise(g, rng));
    EXPECT_LT(truncate_high(X, max_block(g)).values.lpNorm<Eigen::Infinity>(), 1e-12);
    EXPECT_THROW(truncate_high(X, -1), DomainError);
    const RealField r0 = truncate_high(X, 0);
    EXPECT_LT((r0.values - X.values + lp_block(X, 0).values).lpNorm<Eigen::Infinity>(), 1e-12);
}

TEST(TruncateHigh, HolderNormNonIncreasing) {
    const TorusGrid g = TorusGrid::make(32);
    for (int s = 0; s < 50; ++s) {
        RngStream rng(6, StreamPurpose::space_noise, s);
        const RealField X = lift_X(sample_space_white_noise(g, rng));
        double prev = kInf;
        for (int n = 0; n <= max_block(g); ++n) {
            const double v = besov_norm(truncate_high(X, n), 0.75, kInf, kInf);
            EXPECT_LE(v, prev + 1e-12);
            prev = v;
        }
    }
}

TEST(WienerIncrement, VarianceAndIndependence) {
    const TorusGrid g = TorusGrid::make(8);
    const double dt = 0.01;
    const RealField f = RealField::from_function(g, [](double x, double y) { return std::sin(x) + std::cos(2 * y); });
    std::vector<double> a, b;
    for (int s = 0; s < 1000; ++s) {
        RngStream rng(7, StreamPurpose::time_noise, s);
        a.push_back(inner(sample_wiener_increment(g, dt, rng), f));
        b.push_back(inner(sample_wiener_increment(g, dt, rng), f));
    }
    const double target = dt * inner(f, f);
    EXPECT_NEAR(sample_variance(a), target, 0.1 * target);
    const MeanEstimate ma = estimate_mean(a), mb = estimate_mean(b);
    double cov = 0;
    for (int i = 0; i < 1000; ++i) cov += (a[i] - ma.mean) * (b[i] - mb.mean);
    cov /= 999;
    EXPECT_LT(std::abs(cov / std::sqrt(sample_variance(a) * sample_variance(b))), 0.1);
    RngStream rng(0, StreamPurpose::time_noise, 0);
    EXPECT_THROW(sample_wiener_increment(g, 0.0, rng), DomainError);
}
