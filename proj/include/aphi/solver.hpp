#pragma once

#include <span>
#include <vector>

#include "aphi/hamiltonian.hpp"
#include "aphi/rng.hpp"
#include "aphi/wick.hpp"

namespace aphi {

struct SolverConfig {
    double dt = 1e-3;
    double T = 1.0;
    int N = -1;        // noise truncation, -1 means all modes
    int n = 2;         // paraproduct truncation for the Phi/Gamma maps
    double eps = 0.25;
    double sigma = 0.3;
    int p = 2;
    double q = 8.0;    // time integrability in K-tilde
    double a = 0.5;    // K-tilde time weight exponent
    double b = 1.0;    // K-tilde outer exponent
    double lambda_min = 1.0;
    // Nonlinear stability guard: a step is split while dt * max|f'(v)| exceeds this.
    double stiffness = 0.5;
    bool noise = true;
    bool nonlinear = true;
    OuStart ou_start = OuStart::zero;
    // Variance used in the Wick powers. The stationary choice makes the chain time-homogeneous.
    OuStart wick_variance = OuStart::stationary;

    // Throws ConfigError naming the offending key.
    void validate() const;
    int truncation(const AndersonOperator& op) const { return N < 0 ? op.dimension() - 1 : N; }
    int steps() const;
};

// Spectral weights of one exponential Euler step of length dt.
struct StepWeights {
    Eigen::ArrayXd decay;  // e^{-lambda dt}
    Eigen::ArrayXd phi1;   // dt phi_1(lambda dt) = (1 - e^{-lambda dt}) / lambda
    static StepWeights make(const Eigen::VectorXd& lambda, double dt);
};

struct SolverState {
    double time = 0.0;
    RealField v;
    int substeps = 0;
};

// v <- e^{-dt H} v - dt phi_1(dt H) f(v, z), f = v^3 + v^2 z1 + v z2 + z3.
SolverState step_v(const SolverState& state, const EnhancedNoise& z, double dt,
                   const AndersonOperator& op, double stiffness = 0.5);

// Batched co-evolution of the modal OU process and the remainder v (optionally with a
// tangent flow). Columns are trajectories; every matrix lives in eigen-coordinates.
class Ensemble {
public:
    Ensemble(const AndersonOperator& op, const SolverConfig& cfg, int columns);

    int columns() const { return columns_; }
    int truncation() const { return N_; }
    double time() const { return time_; }
    const AndersonOperator& op() const { return op_; }
    const SolverConfig& config() const { return cfg_; }

    void set_v(const Eigen::MatrixXd& v_modes);
    void set_ou(const Eigen::MatrixXd& x_modes);
    void set_tangent(const Eigen::MatrixXd& eta_modes);
    bool has_tangent() const { return tangent_; }

    // Advance by dt drawing the OU increments from one stream per column.
    void step(std::span<RngStream> rngs);
    // Advance with caller-supplied OU increments I ((N+1) x columns).
    void step_with_increments(const Eigen::MatrixXd& increments);

    const Eigen::MatrixXd& v_modes() const { return v_; }
    const Eigen::MatrixXd& ou_modes() const { return x_; }
    const Eigen::MatrixXd& tangent_modes() const { return eta_; }
    const Eigen::MatrixXd& last_increments() const { return increments_; }
    // Standard deviations of the OU increments, sqrt((1 - e^{-2 lambda dt}) / lambda).
    const Eigen::ArrayXd& increment_sd() const { return sd_; }
    long substeps() const { return substeps_; }

    // Physical fields (sites x columns).
    Eigen::MatrixXd u_physical() const;
    Eigen::MatrixXd v_physical() const;
    Eigen::MatrixXd ou_physical() const;
    // sigma_N at the current time.
    const Eigen::VectorXd& sigma() const { return sigma_; }

private:
    void advance(const Eigen::MatrixXd& increments);
    void update_sigma();
    void substep_column(int col, const Eigen::VectorXd& x_modes);

    const AndersonOperator& op_;
    SolverConfig cfg_;
    int columns_, N_;
    double time_ = 0.0;
    double h_;
    StepWeights w_;
    Eigen::ArrayXd sd_, ou_decay_;
    Eigen::MatrixXd v_, x_, eta_, increments_;
    Eigen::MatrixXd phi_sq_;  // phi_k(x)^2, sites x (N+1)
    Eigen::VectorXd sigma_;
    bool tangent_ = false;
    long substeps_ = 0;
};

struct DiagnosticRow {
    double t = 0.0;
    double l2 = 0.0, l4 = 0.0, l3p2 = 0.0;  // norms of v; l3p2 is L^{3p-2}
    double besov = 0.0;                     // C^{-eps} proxy of u
    double K = 0.0, K_tilde = 0.0;
};

// Running K_t and K-tilde_t from a z trajectory, left-endpoint quadrature.
class DiagnosticAccumulator {
public:
    DiagnosticAccumulator(int p, double eps, double q, double a, double b);
    // Record z at time t; the integrals advance with the spacing to the next call.
    void add(double t, const RealField& z1, const RealField& z2, const RealField& z3);
    void add_norms(double t, double n1, double n2, double n3);
    double K() const;
    double K_tilde() const;
    double time() const { return t_; }

private:
    int p_;
    double eps_, q_, a_, b_;
    double t_ = 0.0, sup1_ = 0.0, int2_ = 0.0, int3_ = 0.0, intq2_ = 0.0, intq3_ = 0.0;
    bool started_ = false;
    double last_n2_ = 0.0, last_n3_ = 0.0;
};

struct DiagnosticConstants {
    std::vector<double> times, K, K_tilde;
    int p = 2;
    double eps = 0.25, q = 8.0, a = 0.5, b = 1.0;
};
DiagnosticConstants diagnostic_constants(const std::vector<EnhancedNoise>& z, int p, double eps,
                                         double q, double a, double b);

struct Trajectory {
    std::vector<double> times;
    std::vector<RealField> u, v;
    std::vector<DiagnosticRow> diagnostics;
    long substeps = 0;
};

// Truncated SPDE from v(0) = u0, OU(0) = 0. `record_times` selects the emitted snapshots; the
// diagnostics table has one row per `diagnostic_stride` steps.
Trajectory simulate(const AndersonOperator& op, const RealField& u0, const SolverConfig& cfg,
                    RngStream& rng, const std::vector<double>& record_times,
                    int diagnostic_stride = 1);

// Paracontrolled change of unknowns w = v - v < X_{>n}.
RealField phi_map(const RealField& v, const RealField& X_gt_n);

struct ParacontrolledPair {
    RealField v, w;
    int n = 0;
    int iterations = 0;
    double residual = 0.0;
};
ParacontrolledPair gamma_map(const RealField& w, const RealField& X_gt_n, int n, double tol = 1e-12,
                             int max_iter = 200);

struct RemainderBudget {
    double w_power = 0.0;      // ||w||_{L^{3p}}^{3p}
    double gradient = 0.0;     // (3p-3) || |grad w|^2 w^{3p-4} ||_{L^1}
    double q1 = 0.0, q2 = 0.0, q3 = 0.0;  // <Q_i, w^{3p-3}>
    double potential = 0.0;    // <xi <= w, w^{3p-3}>
    bool coercive_dominates = false;  // w_power + gradient >= |<Q1, w^{3p-3}>|
};
RemainderBudget remainder_equation_diagnostics(const ParacontrolledPair& pair, const RealField& X,
                                               const RealField& xi, const EnhancedNoise& z, int p);

// Lattice proxy R_n(w) = Phi_n(H Gamma_n w) + Delta_h w - xi <= w.
RealField remainder_operator(const AndersonOperator& op, const RealField& X, int n,
                             const RealField& w);

// eta <- e^{-dt H} eta - dt phi_1(dt H) (3 :u^2: eta).
RealField step_eta(const RealField& eta, const RealField& u, const RealField& sigma, double dt,
                   const AndersonOperator& op);

// Data of the shifted ansatz v = v~ + e^{-tH} u0.
std::vector<EnhancedNoise> shifted_data(const std::vector<EnhancedNoise>& z, const RealField& u0,
                                        const AndersonOperator& op);

}  // namespace aphi
