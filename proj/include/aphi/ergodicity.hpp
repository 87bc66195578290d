#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "aphi/solver.hpp"
#include "aphi/stats.hpp"

namespace aphi {

struct Observable {
    enum class Kind { fourier_char, linear, low_norm, lp_norm };
    Kind kind = Kind::linear;
    RealField f;         // test function for fourier_char / linear
    double phase = 0.0;  // fourier_char: cos(<f, u> + phase)
    int K = 0;           // low_norm: L2 norm of dyadic blocks 0..K
    double p = 2.0;      // lp_norm exponent

    static Observable fourier_char(const RealField& f, double phase = 0.0);
    static Observable linear(const RealField& f);
    static Observable low_norm(int K);
    static Observable lp_norm(double p);

    bool bounded() const { return kind == Kind::fourier_char; }
    double operator()(const RealField& u) const;
    std::string describe() const;
};

// Monte Carlo layout shared by all ensemble estimators. Trajectory i draws its noise from
// RngStream(seed, time_noise, stream_offset + i); chunks of `chunk` trajectories are the unit of
// parallel work, so results do not depend on `workers`.
struct McOptions {
    long samples = 1000;
    std::uint64_t seed = 1;
    std::uint64_t stream_offset = 0;
    int workers = 1;
    int chunk = 16;
};

struct SemigroupEstimate {
    double t = 0.0;
    double mean = 0.0;
    double stderr_ = 0.0;
    long samples = 0;
    long failures = 0;
};
// P_t phi(u0) by Monte Carlo over the truncated dynamics. Aborts if > 1% of paths fail.
SemigroupEstimate estimate_semigroup(const AndersonOperator& op, const SolverConfig& cfg,
                                     const Observable& phi, const RealField& u0, double t,
                                     const McOptions& mc);

// Samples phi(u_t) for every trajectory at each of the given times.
std::vector<std::vector<double>> sample_observable(const AndersonOperator& op,
                                                   const SolverConfig& cfg, const Observable& phi,
                                                   const RealField& u0,
                                                   const std::vector<double>& times,
                                                   const McOptions& mc);

struct KrylovBogoliubov {
    double T = 0.0;
    std::vector<double> times;          // checkpoints of the running average
    std::vector<double> running_mean;   // mean over trajectories of (1/t) int_0^t phi(u)
    std::vector<double> running_var;    // variance over trajectories at each checkpoint
    MeanEstimate final;                 // time average at T across trajectories
    double variance_slope = 0.0;        // log-log slope of running_var over [T/8, T]
};
KrylovBogoliubov krylov_bogoliubov(const AndersonOperator& op, const SolverConfig& cfg,
                                   const Observable& phi, const RealField& u0, double T,
                                   const McOptions& mc);

struct CouplingResult {
    std::vector<double> times;
    std::vector<double> d_l2, d_besov;
    double rate = 0.0;  // rho in d(t) ~ exp(-rho t), fitted on [T/2, T]
    double r_squared = 0.0;
    bool fit_accepted = false;
};
// Two copies driven by identical increments.
CouplingResult synchronous_couple(const AndersonOperator& op, const SolverConfig& cfg,
                                  const RealField& u0, const RealField& u0_tilde, double T,
                                  std::uint64_t seed, std::uint64_t trajectory = 0);

struct MixingPoint {
    double t = 0.0;
    KsResult ks;
};
// KS distance between the laws of phi(u_t) from two initial data, independent noise.
std::vector<MixingPoint> mixing_distance(const AndersonOperator& op, const SolverConfig& cfg,
                                         const Observable& phi, const RealField& u0,
                                         const RealField& u0_tilde,
                                         const std::vector<double>& times, const McOptions& mc);

enum class BelVariant { plain, feynman_kac };

struct BelOptions {
    BelVariant variant = BelVariant::plain;
    double c_tilde = 1.0;  // V(u) = c_tilde ||:u^2:||^{pV}_{H^-epsV}
    int pV = 2;
    double epsV = 0.25;
    double fd_delta = 1e-4;
};

struct BelResult {
    MeanEstimate estimate;       // d P_t phi(u0) . h
    MeanEstimate fk_semigroup;   // d S_t phi(u0) . h (Feynman-Kac variant only)
    MeanEstimate fd;             // common-random-number finite difference
    MeanEstimate paired_gap;     // estimate - fd, paired per trajectory
    std::vector<double> per_sample;  // estimator samples, for paired comparisons
};
// Bismut-Elworthy-Li derivative of the Galerkin semigroup in direction h. Needs noise on every
// mode (cfg.N = -1). The weight is the exact one of the discrete chain.
BelResult bel_derivative(const AndersonOperator& op, const SolverConfig& cfg,
                         const Observable& phi, const RealField& u0, const RealField& h, double t,
                         const McOptions& mc, const BelOptions& opt);

// V and its differential, exposed for testing.
double fk_potential(const RealField& u, const RealField& sigma, double c_tilde, int p, double eps);
double fk_potential_derivative(const RealField& u, const RealField& sigma, const RealField& eta,
                               double c_tilde, int p, double eps);

struct RelaxationRow {
    double eps_target = 0.0;
    double hit_time = -1.0;  // negative if not reached
};
struct RelaxationResult {
    std::vector<RelaxationRow> rows;
    LinearFit fit;           // hit time against log(1 / eps)
    double bound = 0.0;      // conditioning box half-width
    bool conditioned = false;
    long attempts = 0;
};
struct RelaxationOptions {
    std::vector<double> eps_targets{1e-1, 3e-2, 1e-2, 3e-3, 1e-3};
    double eps_box = 1e-5;
    int N_cond = 0;
    double kappa = 0.25;
    double T = 20.0;
    ConditioningMethod method = ConditioningMethod::stepwise;
    long max_attempts = 1000;
};
// Noise restricted to the conditioned low modes; records first time ||v||_{C^{1-kappa}} <= eps.
RelaxationResult relaxation_probe(const AndersonOperator& op, const SolverConfig& cfg,
                                  const RealField& u0, const RelaxationOptions& opt,
                                  std::uint64_t seed);
// Noise-free prediction t* + log(||v(t*)|| / eps) / lambda_0 from a deterministic run.
double relaxation_prediction(const AndersonOperator& op, const SolverConfig& cfg,
                             const RealField& u0, double t_star, double eps, double kappa);

struct ComingDownCell {
    double scale = 0.0;
    std::uint64_t seed = 0;
    double peak = 0.0;       // max_{t in [0.5, 1]} (1 ^ sqrt t) ||v||_{L^{3p-2}}
    double bound = 0.0;      // 1 + K-tilde_T
};
struct ComingDownTable {
    std::vector<ComingDownCell> cells;
    std::vector<double> ratio_per_seed;  // max/min peak across scales
    double worst_ratio = 1.0;
    bool bound_holds = true;
};
ComingDownTable coming_down_sweep(const AndersonOperator& op, const SolverConfig& cfg,
                                  const RealField& profile, const std::vector<double>& scales,
                                  const std::vector<std::uint64_t>& seeds);

}  // namespace aphi
