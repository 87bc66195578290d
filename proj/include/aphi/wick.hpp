#pragma once

#include <array>
#include <span>
#include <vector>

#include "aphi/hamiltonian.hpp"
#include "aphi/rng.hpp"

namespace aphi {

enum class OuStart { stationary, zero };

// Modal Ornstein-Uhlenbeck process dX_k = -lambda_k X_k dt + sqrt(2) dW_k, k = 0..N.
// Columns of `modes` are independent trajectories.
struct OUState {
    int truncation = 0;
    double time = 0.0;
    OuStart start = OuStart::zero;
    Eigen::MatrixXd modes;
};

// Variance of mode k at time t.
double ou_variance(double lambda, double t, OuStart start);

OUState init_ou(const AndersonOperator& op, int N, OuStart start, std::span<RngStream> rngs);
// Exact transition X <- e^{-lambda dt} X + sqrt((1 - e^{-2 lambda dt}) / lambda) Z.
OUState step_ou(const AndersonOperator& op, const OUState& state, double dt,
                std::span<RngStream> rngs);
// Exact transition with caller-supplied standardized Gaussians Z ((N+1) x B).
void step_ou_inplace(const AndersonOperator& op, OUState& state, double dt,
                     const Eigen::MatrixXd& gaussians);

// Field Pi_N X of trajectory `column`, N <= state truncation.
RealField assemble_field(const AndersonOperator& op, const OUState& state, int N, int column = 0);

// sigma_N(t, x) = sum_{k<=N} phi_k(x)^2 Var X_k(t).
RealField sigma_profile(const AndersonOperator& op, int N, double t, OuStart start);

// Probabilists' Hermite polynomial with variance sigma: H_{n+1} = x H_n - n sigma H_{n-1}.
double hermite(int n, double x, double sigma);
// :u^n: = H_n(u, sigma) pointwise, n in {2, 3}.
RealField wick_power(const RealField& u, const RealField& sigma, int n);

struct EnhancedNoise {
    double time = 0.0;
    int truncation = 0;
    RealField z1, z2, z3;
    RealField sigma;
};
// z1 = 3 Pi_N X, z2 = 3 :(Pi_N X)^2:, z3 = :(Pi_N X)^3:.
EnhancedNoise enhanced_data(const AndersonOperator& op, const OUState& state, int N,
                            int column = 0);

// :X_{s,t}^n: = sum_k C(n,k) (-P)^k :X_{-inf,t}^{n-k}: with P = e^{-(t-s)H} X_{-inf,s}.
// wick[k-1] holds :X_{-inf,t}^k: for k = 1..3.
RealField binomial_shift(const std::array<RealField, 3>& wick, const RealField& propagated, int n);

struct ConditionedPath {
    bool accepted = false;
    long attempts = 0;
    double bound = 0.0;                   // box half-width per mode
    std::vector<Eigen::VectorXd> path;    // X_k(t_j), k = 0..N_cond, j = 0..steps
    std::vector<Eigen::VectorXd> increments;  // Gaussian increments I_j used by the path
};

enum class ConditioningMethod { path_rejection, stepwise };

// Low-mode path with |X_k(t)| <= bound on [0, T] for k <= N_cond, bound =
// eps_box / ((N_cond + 1) max_k ||phi_k||_{C^kappa}). Zero start.
// path_rejection redraws whole paths up to max_attempts. stepwise draws each transition from
// the Gaussian truncated to the box: a sequential proxy for the conditioned law, used when
// whole-path acceptance is hopeless.
ConditionedPath low_mode_conditioned_sample(const AndersonOperator& op, int N_cond,
                                            double eps_box, double kappa, double T, double dt,
                                            RngStream& rng, ConditioningMethod method,
                                            long max_attempts = 100000);
double conditioning_bound(const AndersonOperator& op, int N_cond, double eps_box, double kappa);

}  // namespace aphi

namespace aphi {

// Ensemble statistics of the stationary modal field. Sample i draws its modes from
// RngStream(seed, ou_initial, i); chunks of 64 samples are the unit of parallel work.
struct WickSampling {
    long samples = 10000;
    std::uint64_t seed = 1;
    int workers = 1;
};

struct SiteMean {
    int site = 0;
    double mean = 0.0, stderr_ = 0.0;
};
// E[:X^2:(x)] at the given sites; should vanish.
std::vector<SiteMean> wick_cancellation(const AndersonOperator& op, int N,
                                        const std::vector<int>& sites, const WickSampling& ws);

struct CovariancePair {
    int x = 0, y = 0;
    double covariance = 0.0;       // exact E[X(x) X(y)]
    double chaos = 0.0;            // MC estimate of E[:X^2:(x) :X^2:(y)]
    double chaos_stderr = 0.0;
    double relative_error = 0.0;   // |chaos - 2 cov^2| / (2 cov^2)
};
std::vector<CovariancePair> chaos_covariance(const AndersonOperator& op, int N,
                                             const std::vector<std::pair<int, int>>& pairs,
                                             const WickSampling& ws);
// Exact modal covariance sum_{k<=N} phi_k(x) phi_k(y) / lambda_k.
double modal_covariance(const AndersonOperator& op, int N, int x, int y);

struct LogDivergence {
    std::vector<int> N;
    std::vector<double> mean_sigma;
    double slope = 0.0, r_squared = 0.0;  // mean sigma against log N
};
LogDivergence sigma_log_divergence(const AndersonOperator& op, const std::vector<int>& Ns);

struct CauchyTrend {
    std::vector<int> N;
    std::vector<double> renormalized, unrenormalized;  // mean C^{-eps} norms of the differences
    bool renormalized_decreasing = false;
    bool unrenormalized_decreasing = false;
};
// ||:(Pi_2N X)^2: - :(Pi_N X)^2:|| and the same without the sigma subtraction.
CauchyTrend cauchy_differences(const AndersonOperator& op, const std::vector<int>& Ns, double eps,
                               const WickSampling& ws);

}  // namespace aphi
