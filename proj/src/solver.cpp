#include "aphi/solver.hpp"

#include <cmath>
#include <limits>

#include "aphi/errors.hpp"
#include "aphi/noise.hpp"
#include "aphi/spectral.hpp"

namespace aphi {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_finite(const Eigen::MatrixXd& m, double t) {
    if (!m.allFinite()) throw IntegrationError("non-finite solution", t);
}

}  // namespace

void SolverConfig::validate() const {
    if (!(dt > 0.0)) throw ConfigError("solver.dt must be positive", "solver.dt");
    if (!(T > 0.0)) throw ConfigError("solver.T must be positive", "solver.T");
    if (N < -1) throw ConfigError("solver.N must be >= 0 (or -1 for all modes)", "solver.N");
    if (n < 0) throw ConfigError("solver.n must be non-negative", "solver.n");
    if (!(eps > 0.0 && eps < sigma && sigma < 1.0))
        throw ConfigError("need 0 < eps < sigma < 1", "solver.sigma");
    if (p < 2 || p % 2 != 0) throw ConfigError("solver.p must be an even integer >= 2", "solver.p");
    if (!(q > 1.0)) throw ConfigError("solver.q must exceed 1", "solver.q");
    if (!((sigma + eps) / 2.0 * q / (q - 1.0) < 1.0 / 3.0))
        throw ConfigError("exponents violate (sigma + eps)/2 * q/(q-1) < 1/3", "solver.sigma");
    if (!(a > 0.0) || !(b > 0.0)) throw ConfigError("K-tilde exponents must be positive", "solver.a");
    if (!(stiffness > 0.0)) throw ConfigError("solver.stiffness must be positive", "solver.stiffness");
    if (!std::isfinite(lambda_min)) throw ConfigError("lambda_min must be finite", "hamiltonian.mass_floor");
}

int SolverConfig::steps() const { return int(std::llround(T / dt)); }

StepWeights StepWeights::make(const Eigen::VectorXd& lambda, double dt) {
    StepWeights w;
    w.decay = (-dt * lambda.array()).exp();
    w.phi1.resize(lambda.size());
    for (Eigen::Index k = 0; k < lambda.size(); ++k)
        w.phi1[k] = lambda[k] == 0.0 ? dt : -std::expm1(-dt * lambda[k]) / lambda[k];
    return w;
}

SolverState step_v(const SolverState& state, const EnhancedNoise& z, double dt,
                   const AndersonOperator& op, double stiffness) {
    if (!(dt > 0.0)) throw DomainError("step_v needs dt > 0");
    require_same_grid(state.v.grid, op.grid, "step_v");
    const double h = op.grid.spacing();
    const Eigen::MatrixXd& Q = *op.basis;
    const auto z1 = z.z1.values.array(), z2 = z.z2.values.array(), z3 = z.z3.values.array();
    SolverState out = state;
    Eigen::VectorXd a = h * (Q.transpose() * state.v.values);
    // Substeps on a dyadic ladder of dt so the step map stays piecewise smooth in v.
    const std::int64_t unit = std::int64_t(1) << 40;
    std::int64_t remaining = unit;
    while (remaining > 0) {
        const Eigen::ArrayXd v = (Q * a).array() / h;
        const double stiff = (3.0 * v.square() + 2.0 * v * z1 + z2).abs().maxCoeff();
        std::int64_t tau = unit;
        while (tau > 1 && (double(tau) / unit * dt * stiff > stiffness || remaining % tau != 0))
            tau /= 2;
        const double step = double(tau) / unit * dt;
        const StepWeights w = StepWeights::make(op.eigenvalues, step);
        const Eigen::ArrayXd f = v.cube() + v.square() * z1 + v * z2 + z3;
        const Eigen::VectorXd fm = h * (Q.transpose() * f.matrix());
        a = (w.decay * a.array() - w.phi1 * fm.array()).matrix();
        remaining -= tau;
        if (remaining > 0) ++out.substeps;
        if (!a.allFinite()) throw IntegrationError("non-finite remainder", state.time + dt);
    }
    out.v = RealField(op.grid, Q * a / h);
    out.time = state.time + dt;
    return out;
}

Ensemble::Ensemble(const AndersonOperator& op, const SolverConfig& cfg, int columns)
    : op_(op), cfg_(cfg), columns_(columns), N_(cfg.truncation(op)), h_(op.grid.spacing()) {
    cfg_.validate();
    if (columns < 1) throw DomainError("ensemble needs at least one column");
    if (N_ >= op.dimension()) throw ConfigError("noise truncation exceeds dimension", "solver.N");
    const int n = op.dimension();
    w_ = StepWeights::make(op.eigenvalues, cfg.dt);
    sd_.resize(N_ + 1);
    ou_decay_.resize(N_ + 1);
    for (int k = 0; k <= N_; ++k) {
        sd_[k] = std::sqrt(ou_variance(op.eigenvalues[k], cfg.dt, OuStart::zero));
        ou_decay_[k] = std::exp(-op.eigenvalues[k] * cfg.dt);
    }
    v_ = Eigen::MatrixXd::Zero(n, columns);
    x_ = Eigen::MatrixXd::Zero(N_ + 1, columns);
    increments_ = Eigen::MatrixXd::Zero(N_ + 1, columns);
    phi_sq_ = op.basis->leftCols(N_ + 1).array().square().matrix() / op.grid.cell_area();
    update_sigma();
}

void Ensemble::set_v(const Eigen::MatrixXd& v_modes) {
    if (v_modes.rows() != v_.rows() || v_modes.cols() != columns_)
        throw DomainError("v has the wrong shape");
    v_ = v_modes;
}

void Ensemble::set_ou(const Eigen::MatrixXd& x_modes) {
    if (x_modes.rows() != x_.rows() || x_modes.cols() != columns_)
        throw DomainError("OU state has the wrong shape");
    x_ = x_modes;
}

void Ensemble::set_tangent(const Eigen::MatrixXd& eta_modes) {
    if (eta_modes.rows() != v_.rows() || eta_modes.cols() != columns_)
        throw DomainError("tangent has the wrong shape");
    eta_ = eta_modes;
    tangent_ = true;
}

void Ensemble::update_sigma() {
    if (!cfg_.noise) {
        sigma_ = Eigen::VectorXd::Zero(op_.dimension());
        return;
    }
    if (cfg_.ou_start == OuStart::stationary || cfg_.wick_variance == OuStart::stationary) {
        if (sigma_.size() == op_.dimension()) return;  // constant in time
    }
    Eigen::VectorXd var(N_ + 1);
    const OuStart law = cfg_.ou_start == OuStart::stationary ? OuStart::stationary : cfg_.wick_variance;
    for (int k = 0; k <= N_; ++k) var[k] = ou_variance(op_.eigenvalues[k], time_, law);
    sigma_ = phi_sq_ * var;
}

Eigen::MatrixXd Ensemble::ou_physical() const {
    return op_.basis->leftCols(N_ + 1) * x_ / h_;
}

Eigen::MatrixXd Ensemble::v_physical() const { return *op_.basis * v_ / h_; }

Eigen::MatrixXd Ensemble::u_physical() const {
    Eigen::MatrixXd y = v_;
    y.topRows(N_ + 1) += x_;
    return *op_.basis * y / h_;
}

void Ensemble::step(std::span<RngStream> rngs) {
    if (Eigen::Index(rngs.size()) != columns_)
        throw DomainError("one random stream per ensemble column is required");
    Eigen::MatrixXd inc = Eigen::MatrixXd::Zero(N_ + 1, columns_);
    if (cfg_.noise)
        for (int b = 0; b < columns_; ++b)
            for (int k = 0; k <= N_; ++k) inc(k, b) = sd_[k] * rngs[b].normal();
    advance(inc);
}

void Ensemble::step_with_increments(const Eigen::MatrixXd& increments) {
    if (increments.rows() != N_ + 1 || increments.cols() != columns_)
        throw DomainError("increments have the wrong shape");
    advance(increments);
}

void Ensemble::advance(const Eigen::MatrixXd& increments) {
    const Eigen::MatrixXd& Q = *op_.basis;
    const Eigen::MatrixXd U = u_physical();
    const Eigen::ArrayXd s = sigma_.array();
    Eigen::MatrixXd F(U.rows(), columns_), D(U.rows(), columns_);
    std::vector<int> stiff;
    for (int b = 0; b < columns_; ++b) {
        const Eigen::ArrayXd u = U.col(b).array();
        if (cfg_.nonlinear) {
            D.col(b) = (3.0 * u.square() - 3.0 * s).matrix();
            F.col(b) = (u.cube() - 3.0 * s * u).matrix();
        } else {
            D.col(b).setZero();
            F.col(b).setZero();
            continue;
        }
        if (cfg_.dt * D.col(b).cwiseAbs().maxCoeff() > cfg_.stiffness) stiff.push_back(b);
    }
    Eigen::MatrixXd v_old, eta_old;
    if (!stiff.empty()) {
        v_old = v_;
        if (tangent_) eta_old = eta_;
    }
    const Eigen::MatrixXd Fm = h_ * (Q.transpose() * F);
    v_ = (w_.decay.matrix().asDiagonal() * v_) - w_.phi1.matrix().asDiagonal() * Fm;
    if (tangent_) {
        const Eigen::MatrixXd G = D.cwiseProduct(Q * eta_ / h_);
        eta_ = (w_.decay.matrix().asDiagonal() * eta_) -
               w_.phi1.matrix().asDiagonal() * (h_ * (Q.transpose() * G));
    }
    for (int b : stiff) {
        v_.col(b) = v_old.col(b);
        if (tangent_) eta_.col(b) = eta_old.col(b);
        substep_column(b, x_.col(b));
    }
    x_ = ou_decay_.matrix().asDiagonal() * x_ + increments;
    increments_ = increments;
    time_ += cfg_.dt;
    update_sigma();
    require_finite(v_, time_);
}

void Ensemble::substep_column(int col, const Eigen::VectorXd& x_modes) {
    // Substep the deterministic u-flow over [t, t + dt] and remove the propagated OU part, so the
    // step still depends on (v, X) only through u = v + Pi_N X.
    const Eigen::MatrixXd& Q = *op_.basis;
    const Eigen::ArrayXd s = sigma_.array();
    const std::int64_t unit = std::int64_t(1) << 40;
    std::int64_t remaining = unit;
    Eigen::VectorXd y = v_.col(col);
    y.head(N_ + 1) += x_modes;
    Eigen::VectorXd e;
    if (tangent_) e = eta_.col(col);
    while (remaining > 0) {
        const Eigen::ArrayXd u = (Q * y).array() / h_;
        const Eigen::ArrayXd d = 3.0 * u.square() - 3.0 * s;
        const double stiff = d.abs().maxCoeff();
        std::int64_t tau = unit;
        while (tau > 1 && (double(tau) / unit * cfg_.dt * stiff > cfg_.stiffness || remaining % tau != 0))
            tau /= 2;
        const StepWeights w = StepWeights::make(op_.eigenvalues, double(tau) / unit * cfg_.dt);
        const Eigen::VectorXd fm = h_ * (Q.transpose() * (u.cube() - 3.0 * s * u).matrix());
        if (tangent_) {
            const Eigen::VectorXd gm = h_ * (Q.transpose() * (d * (Q * e).array() / h_).matrix());
            e = (w.decay * e.array() - w.phi1 * gm.array()).matrix();
        }
        y = (w.decay * y.array() - w.phi1 * fm.array()).matrix();
        remaining -= tau;
        ++substeps_;
        if (!y.allFinite()) throw IntegrationError("non-finite remainder", time_ + cfg_.dt);
    }
    y.head(N_ + 1) -= (w_.decay.head(N_ + 1) * x_modes.array()).matrix();
    v_.col(col) = y;
    if (tangent_) eta_.col(col) = e;
}

DiagnosticAccumulator::DiagnosticAccumulator(int p, double eps, double q, double a, double b)
    : p_(p), eps_(eps), q_(q), a_(a), b_(b) {}

void DiagnosticAccumulator::add(double t, const RealField& z1, const RealField& z2,
                                const RealField& z3) {
    add_norms(t, besov_norm(z1, -eps_, kInf, kInf), besov_norm(z2, -eps_, kInf, kInf),
              besov_norm(z3, -eps_, kInf, kInf));
}

void DiagnosticAccumulator::add_norms(double t, double n1, double n2, double n3) {
    if (started_) {
        const double ds = t - t_;
        int2_ += ds * std::pow(last_n2_, 3 * p_);
        int3_ += ds * std::pow(last_n3_, 3 * p_);
        intq2_ += ds * std::pow(last_n2_, q_);
        intq3_ += ds * std::pow(last_n3_, q_);
    }
    started_ = true;
    t_ = t;
    sup1_ = std::max(sup1_, n1);
    last_n2_ = n2;
    last_n3_ = n3;
}

double DiagnosticAccumulator::K() const { return std::pow(sup1_, 2 * p_) + int2_ + int3_; }

double DiagnosticAccumulator::K_tilde() const {
    const double w = std::pow(t_, a_);
    return std::pow(sup1_ + w * std::pow(intq2_, 1.0 / q_) + w * std::pow(intq3_, 1.0 / q_), b_);
}

DiagnosticConstants diagnostic_constants(const std::vector<EnhancedNoise>& z, int p, double eps,
                                         double q, double a, double b) {
    DiagnosticConstants out;
    out.p = p;
    out.eps = eps;
    out.q = q;
    out.a = a;
    out.b = b;
    DiagnosticAccumulator acc(p, eps, q, a, b);
    for (const auto& zt : z) {
        acc.add(zt.time, zt.z1, zt.z2, zt.z3);
        out.times.push_back(zt.time);
        out.K.push_back(acc.K());
        out.K_tilde.push_back(acc.K_tilde());
    }
    return out;
}

Trajectory simulate(const AndersonOperator& op, const RealField& u0, const SolverConfig& cfg,
                    RngStream& rng, const std::vector<double>& record_times,
                    int diagnostic_stride) {
    if (!u0.values.allFinite()) throw DomainError("initial datum is not finite");
    require_same_grid(op.grid, u0.grid, "simulate");
    Ensemble ens(op, cfg, 1);
    ens.set_v(op.to_modes(u0));
    const int steps = cfg.steps();
    std::vector<int> record_steps;
    for (double t : record_times) record_steps.push_back(int(std::llround(t / cfg.dt)));
    DiagnosticAccumulator acc(cfg.p, cfg.eps, cfg.q, cfg.a, cfg.b);
    Trajectory traj;
    const double r = 3.0 * cfg.p - 2.0;
    for (int j = 0;; ++j) {
        const double t = j * cfg.dt;
        const Eigen::VectorXd x = ens.ou_physical().col(0);
        const Eigen::ArrayXd s = ens.sigma().array();
        const RealField z1(op.grid, 3.0 * x);
        const RealField z2(op.grid, (3.0 * (x.array().square() - s)).matrix());
        const RealField z3(op.grid, (x.array().cube() - 3.0 * s * x.array()).matrix());
        acc.add(t, z1, z2, z3);
        const bool want_row = j % diagnostic_stride == 0 || j == steps;
        const bool want_snap =
            std::find(record_steps.begin(), record_steps.end(), j) != record_steps.end();
        if (want_row || want_snap) {
            const RealField v(op.grid, ens.v_physical().col(0));
            const RealField u(op.grid, v.values + x);
            if (want_row) {
                DiagnosticRow row;
                row.t = t;
                row.l2 = lp_norm(v, 2.0);
                row.l4 = lp_norm(v, 4.0);
                row.l3p2 = lp_norm(v, r);
                row.besov = besov_norm(u, -cfg.eps, kInf, kInf);
                row.K = acc.K();
                row.K_tilde = acc.K_tilde();
                traj.diagnostics.push_back(row);
            }
            if (want_snap) {
                traj.times.push_back(t);
                traj.u.push_back(u);
                traj.v.push_back(v);
            }
        }
        if (j == steps) break;
        RngStream* one = &rng;
        ens.step(std::span<RngStream>(one, 1));
    }
    traj.substeps = ens.substeps();
    return traj;
}

RealField phi_map(const RealField& v, const RealField& X_gt_n) {
    RealField w = v;
    w.values -= paraproduct(v, X_gt_n, ParaproductMode::lower).values;
    return w;
}

ParacontrolledPair gamma_map(const RealField& w, const RealField& X_gt_n, int n, double tol,
                             int max_iter) {
    require_same_grid(w.grid, X_gt_n.grid, "gamma_map");
    ParacontrolledPair pair{w, w, n, 0, 0.0};
    const double scale = std::max(lp_norm(w, 2.0), std::numeric_limits<double>::min());
    for (int it = 1; it <= max_iter; ++it) {
        pair.residual = lp_norm(RealField(w.grid, phi_map(pair.v, X_gt_n).values - w.values), 2.0);
        pair.iterations = it - 1;
        if (pair.residual <= tol * scale) return pair;
        pair.v.values = w.values + paraproduct(pair.v, X_gt_n, ParaproductMode::lower).values;
        if (!pair.v.values.allFinite()) break;
    }
    pair.residual = lp_norm(RealField(w.grid, phi_map(pair.v, X_gt_n).values - w.values), 2.0);
    if (pair.residual <= tol * scale) {
        pair.iterations = max_iter;
        return pair;
    }
    throw NumericalError("Gamma_n fixed point did not converge at n=" + std::to_string(n) +
                         "; increase the paraproduct truncation n");
}

RemainderBudget remainder_equation_diagnostics(const ParacontrolledPair& pair, const RealField& X,
                                               const RealField& xi, const EnhancedNoise& z, int p) {
    if (p < 2 || p % 2 != 0) throw DomainError("remainder budget needs even p");
    const TorusGrid& g = pair.w.grid;
    const RealField Xn = truncate_high(X, pair.n);
    const auto lower = ParaproductMode::lower;
    const Eigen::ArrayXd v = pair.v.values.array(), w = pair.w.values.array();
    const Eigen::ArrayXd vX = paraproduct(pair.v, Xn, lower).values.array();
    const RealField v3(g, v.cube().matrix());
    Eigen::ArrayXd q1 = -paraproduct(v3, Xn, lower).values.array() + vX.cube() +
                        3.0 * vX * w.square() + 3.0 * vX.square() * w;
    const RealField q2(g, (v.square() * z.z1.values.array() + v * z.z2.values.array() +
                           z.z3.values.array())
                              .matrix());
    const RealField q3(g, -paraproduct(q2, Xn, lower).values);
    const RealField W(g, w.pow(3 * p - 3).matrix());

    RemainderBudget r;
    const double h = g.spacing(), h2 = g.cell_area();
    r.w_power = h2 * w.pow(3 * p).sum();
    const int M = g.points_per_side;
    double grad = 0.0;
    for (int i1 = 0; i1 < M; ++i1)
        for (int i2 = 0; i2 < M; ++i2) {
            const double c = pair.w(i1, i2);
            const double d1 = (pair.w((i1 + 1) % M, i2) - c) / h;
            const double d2 = (pair.w(i1, (i2 + 1) % M) - c) / h;
            grad += (d1 * d1 + d2 * d2) * std::pow(c, 3 * p - 4);
        }
    r.gradient = (3 * p - 3) * h2 * grad;
    r.q1 = inner(RealField(g, q1.matrix()), W);
    r.q2 = inner(q2, W);
    r.q3 = inner(q3, W);
    r.potential = inner(paraproduct(xi, pair.w, ParaproductMode::lower_or_resonant), W);
    r.coercive_dominates = r.w_power + r.gradient >= std::abs(r.q1);
    return r;
}

RealField remainder_operator(const AndersonOperator& op, const RealField& X, int n,
                             const RealField& w) {
    const RealField Xn = truncate_high(X, n);
    const RealField v = gamma_map(w, Xn, n).v;
    RealField r = phi_map(op.apply(v), Xn);
    r.values += apply_laplacian(w).values;
    r.values -= paraproduct(op.potential, w, ParaproductMode::lower_or_resonant).values;
    return r;
}

RealField step_eta(const RealField& eta, const RealField& u, const RealField& sigma, double dt,
                   const AndersonOperator& op) {
    if (!(dt > 0.0)) throw DomainError("step_eta needs dt > 0");
    require_same_grid(eta.grid, u.grid, "step_eta");
    require_same_grid(eta.grid, sigma.grid, "step_eta");
    const double h = op.grid.spacing();
    const Eigen::MatrixXd& Q = *op.basis;
    const StepWeights w = StepWeights::make(op.eigenvalues, dt);
    const Eigen::ArrayXd pot = 3.0 * (u.values.array().square() - sigma.values.array());
    const Eigen::VectorXd e = h * (Q.transpose() * eta.values);
    const Eigen::VectorXd g = h * (Q.transpose() * (pot * eta.values.array()).matrix());
    const Eigen::VectorXd next = (w.decay * e.array() - w.phi1 * g.array()).matrix();
    if (!next.allFinite()) throw IntegrationError("non-finite tangent", dt);
    return RealField(op.grid, Q * next / h);
}

std::vector<EnhancedNoise> shifted_data(const std::vector<EnhancedNoise>& z, const RealField& u0,
                                        const AndersonOperator& op) {
    if (!u0.values.allFinite()) throw DomainError("initial datum is not finite");
    std::vector<EnhancedNoise> out;
    out.reserve(z.size());
    for (const auto& zt : z) {
        const Eigen::ArrayXd P = heat_apply(op, zt.time, u0).values.array();
        const Eigen::ArrayXd z1 = zt.z1.values.array(), z2 = zt.z2.values.array(),
                             z3 = zt.z3.values.array();
        EnhancedNoise s = zt;
        s.z1.values = (z1 + 3.0 * P).matrix();
        s.z2.values = (z2 + 2.0 * P * z1 + 3.0 * P.square()).matrix();
        s.z3.values = (z3 + P * z2 + P.square() * z1 + P.cube()).matrix();
        out.push_back(s);
    }
    return out;
}

}  // namespace aphi
