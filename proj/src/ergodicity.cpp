#include "aphi/ergodicity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "aphi/errors.hpp"
#include "aphi/parallel.hpp"
#include "aphi/spectral.hpp"

namespace aphi {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

int steps_for(double t, double dt) { return int(std::llround(t / dt)); }

std::vector<RngStream> chunk_streams(const McOptions& mc, long first, int count) {
    std::vector<RngStream> s;
    s.reserve(count);
    for (int i = 0; i < count; ++i)
        s.emplace_back(mc.seed, StreamPurpose::time_noise, mc.stream_offset + first + i);
    return s;
}

template <class Fn>
void for_each_chunk(const McOptions& mc, Fn&& fn) {
    if (mc.samples < 1) throw DomainError("Monte Carlo needs at least one sample");
    if (mc.chunk < 1) throw DomainError("chunk size must be positive");
    const long chunks = (mc.samples + mc.chunk - 1) / mc.chunk;
    parallel_chunks(int(chunks), mc.workers, [&](int c) {
        const long first = long(c) * mc.chunk;
        const int count = int(std::min<long>(mc.chunk, mc.samples - first));
        fn(first, count);
    });
}

Eigen::MatrixXd replicate(const Eigen::VectorXd& v, int cols) { return v.replicate(1, cols); }

// Symmetric matrix A with <f, g>_{H^s} = f^T A g on lattice values.
Eigen::MatrixXd sobolev_gram(const TorusGrid& g, double s) {
    const int n = g.size(), M = g.points_per_side;
    const double unit = g.frequency_unit();
    Eigen::MatrixXd A(n, n);
    for (int j = 0; j < n; ++j) {
        RealField e(g);
        e.values[j] = 1.0;
        SpectralField fh = forward_transform(e);
        for (int s1 = 0; s1 < M; ++s1)
            for (int s2 = 0; s2 < M; ++s2) {
                const double k1 = unit * g.signed_frequency(s1), k2 = unit * g.signed_frequency(s2);
                fh.coefficients[s1 * M + s2] *= std::pow(1.0 + k1 * k1 + k2 * k2, s);
            }
        A.col(j) = g.cell_area() * inverse_transform(fh).values;
    }
    return 0.5 * (A + A.transpose());
}

}  // namespace

Observable Observable::fourier_char(const RealField& f, double phase) {
    Observable o;
    o.kind = Kind::fourier_char;
    o.f = f;
    o.phase = phase;
    return o;
}

Observable Observable::linear(const RealField& f) {
    Observable o;
    o.kind = Kind::linear;
    o.f = f;
    return o;
}

Observable Observable::low_norm(int K) {
    if (K < 0) throw DomainError("low_norm needs K >= 0");
    Observable o;
    o.kind = Kind::low_norm;
    o.K = K;
    return o;
}

Observable Observable::lp_norm(double p) {
    if (!(p >= 1.0)) throw DomainError("lp_norm observable needs p >= 1");
    Observable o;
    o.kind = Kind::lp_norm;
    o.p = p;
    return o;
}

double Observable::operator()(const RealField& u) const {
    switch (kind) {
        case Kind::fourier_char: return std::cos(inner(f, u) + phase);
        case Kind::linear: return inner(f, u);
        case Kind::low_norm: return aphi::lp_norm(low_pass(u, K), 2.0);
        case Kind::lp_norm: return aphi::lp_norm(u, p);
    }
    return 0.0;
}

std::string Observable::describe() const {
    std::ostringstream os;
    switch (kind) {
        case Kind::fourier_char: os << "fourier_char(phase=" << phase << ")"; break;
        case Kind::linear: os << "linear"; break;
        case Kind::low_norm: os << "low_norm(K=" << K << ")"; break;
        case Kind::lp_norm: os << "lp_norm(p=" << p << ")"; break;
    }
    return os.str();
}

std::vector<std::vector<double>> sample_observable(const AndersonOperator& op,
                                                   const SolverConfig& cfg, const Observable& phi,
                                                   const RealField& u0,
                                                   const std::vector<double>& times,
                                                   const McOptions& mc) {
    std::vector<int> at;
    for (double t : times) {
        if (t < 0.0) throw DomainError("observation times must be non-negative");
        at.push_back(steps_for(t, cfg.dt));
    }
    const int last = at.empty() ? 0 : *std::max_element(at.begin(), at.end());
    const double nan = std::numeric_limits<double>::quiet_NaN();
    std::vector<std::vector<double>> out(times.size(), std::vector<double>(mc.samples, nan));
    const Eigen::VectorXd a0 = op.to_modes(u0);
    for_each_chunk(mc, [&](long first, int count) {
        auto rngs = chunk_streams(mc, first, count);
        Ensemble ens(op, cfg, count);
        ens.set_v(replicate(a0, count));
        auto record = [&](int step) {
            bool any = false;
            for (int s : at) any |= s == step;
            if (!any) return;
            const Eigen::MatrixXd U = ens.u_physical();
            for (std::size_t i = 0; i < at.size(); ++i)
                if (at[i] == step)
                    for (int b = 0; b < count; ++b)
                        out[i][first + b] = phi(RealField(op.grid, U.col(b)));
        };
        try {
            record(0);
            for (int j = 1; j <= last; ++j) {
                ens.step(rngs);
                record(j);
            }
        } catch (const IntegrationError&) {
            for (auto& row : out)
                for (int b = 0; b < count; ++b) row[first + b] = nan;
        }
    });
    return out;
}

SemigroupEstimate estimate_semigroup(const AndersonOperator& op, const SolverConfig& cfg,
                                     const Observable& phi, const RealField& u0, double t,
                                     const McOptions& mc) {
    SemigroupEstimate est;
    est.t = t;
    if (t == 0.0) {
        est.mean = phi(u0);
        est.samples = mc.samples;
        return est;
    }
    const auto samples = sample_observable(op, cfg, phi, u0, {t}, mc).front();
    std::vector<double> ok;
    for (double x : samples)
        if (std::isfinite(x)) ok.push_back(x);
    est.failures = long(samples.size() - ok.size());
    if (double(est.failures) > 0.01 * double(samples.size()))
        throw NumericalError("more than 1% of trajectories failed (" +
                             std::to_string(est.failures) + " of " +
                             std::to_string(samples.size()) + ")");
    const MeanEstimate m = estimate_mean(ok);
    est.mean = m.mean;
    est.stderr_ = m.stderr_;
    est.samples = m.samples;
    return est;
}

KrylovBogoliubov krylov_bogoliubov(const AndersonOperator& op, const SolverConfig& cfg,
                                   const Observable& phi, const RealField& u0, double T,
                                   const McOptions& mc) {
    if (!(T > 0.0)) throw DomainError("Krylov-Bogoliubov needs T > 0");
    const int steps = steps_for(T, cfg.dt);
    constexpr int kCheckpoints = 16;
    std::vector<int> marks;
    for (int c = 1; c <= kCheckpoints; ++c) marks.push_back(int(std::llround(double(steps) * c / kCheckpoints)));
    std::vector<std::vector<double>> avg(kCheckpoints, std::vector<double>(mc.samples, 0.0));
    const Eigen::VectorXd a0 = op.to_modes(u0);
    for_each_chunk(mc, [&](long first, int count) {
        auto rngs = chunk_streams(mc, first, count);
        Ensemble ens(op, cfg, count);
        ens.set_v(replicate(a0, count));
        std::vector<double> acc(count, 0.0);
        int next = 0;
        for (int j = 0; j < steps; ++j) {
            const Eigen::MatrixXd U = ens.u_physical();
            for (int b = 0; b < count; ++b) acc[b] += cfg.dt * phi(RealField(op.grid, U.col(b)));
            ens.step(rngs);
            while (next < kCheckpoints && marks[next] == j + 1) {
                for (int b = 0; b < count; ++b) avg[next][first + b] = acc[b] / ((j + 1) * cfg.dt);
                ++next;
            }
        }
    });
    KrylovBogoliubov kb;
    kb.T = T;
    std::vector<double> lx, ly;
    for (int c = 0; c < kCheckpoints; ++c) {
        const double t = marks[c] * cfg.dt;
        const MeanEstimate m = estimate_mean(avg[c]);
        kb.times.push_back(t);
        kb.running_mean.push_back(m.mean);
        kb.running_var.push_back(sample_variance(avg[c]));
        if (t >= T / 8.0 - 1e-12 && kb.running_var.back() > 0.0) {
            lx.push_back(std::log(t));
            ly.push_back(std::log(kb.running_var.back()));
        }
    }
    kb.final = estimate_mean(avg.back());
    if (lx.size() >= 2) kb.variance_slope = linear_fit(lx, ly).slope;
    return kb;
}

CouplingResult synchronous_couple(const AndersonOperator& op, const SolverConfig& cfg,
                                  const RealField& u0, const RealField& u0_tilde, double T,
                                  std::uint64_t seed, std::uint64_t trajectory) {
    if (!(T > 0.0)) throw DomainError("coupling needs T > 0");
    Ensemble ens(op, cfg, 2);
    Eigen::MatrixXd a(op.dimension(), 2);
    a.col(0) = op.to_modes(u0);
    a.col(1) = op.to_modes(u0_tilde);
    ens.set_v(a);
    RngStream rng(seed, StreamPurpose::time_noise, trajectory);
    const int steps = steps_for(T, cfg.dt);
    const int stride = std::max(1, steps / 200);
    const Eigen::ArrayXd sd = ens.increment_sd();
    CouplingResult r;
    auto record = [&](int j) {
        const Eigen::MatrixXd V = ens.v_physical();
        const RealField d(op.grid, V.col(0) - V.col(1));
        r.times.push_back(j * cfg.dt);
        r.d_l2.push_back(lp_norm(d, 2.0));
        r.d_besov.push_back(besov_norm(d, -cfg.eps, kInf, kInf));
    };
    record(0);
    for (int j = 1; j <= steps; ++j) {
        Eigen::MatrixXd inc = Eigen::MatrixXd::Zero(ens.truncation() + 1, 2);
        if (cfg.noise)
            for (int k = 0; k <= ens.truncation(); ++k) inc(k, 0) = inc(k, 1) = sd[k] * rng.normal();
        ens.step_with_increments(inc);
        if (j % stride == 0 || j == steps) record(j);
    }
    std::vector<double> x, y;
    for (std::size_t i = 0; i < r.times.size(); ++i)
        if (r.times[i] >= T / 2.0 - 1e-12 && r.d_l2[i] > 0.0) {
            x.push_back(r.times[i]);
            y.push_back(std::log(r.d_l2[i]));
        }
    if (x.size() >= 3) {
        const LinearFit f = linear_fit(x, y);
        r.rate = -f.slope;
        r.r_squared = f.r_squared;
        r.fit_accepted = f.r_squared >= 0.5;
    }
    return r;
}

std::vector<MixingPoint> mixing_distance(const AndersonOperator& op, const SolverConfig& cfg,
                                         const Observable& phi, const RealField& u0,
                                         const RealField& u0_tilde,
                                         const std::vector<double>& times, const McOptions& mc) {
    if (mc.samples < 100) throw DomainError("mixing_distance needs at least 100 samples");
    McOptions other = mc;
    other.stream_offset = mc.stream_offset + std::uint64_t(mc.samples);
    const auto a = sample_observable(op, cfg, phi, u0, times, mc);
    const auto b = sample_observable(op, cfg, phi, u0_tilde, times, other);
    std::vector<MixingPoint> out;
    for (std::size_t i = 0; i < times.size(); ++i) {
        std::vector<double> x, y;
        for (double v : a[i])
            if (std::isfinite(v)) x.push_back(v);
        for (double v : b[i])
            if (std::isfinite(v)) y.push_back(v);
        out.push_back({times[i], ks_two_sample(x, y)});
    }
    return out;
}

double fk_potential(const RealField& u, const RealField& sigma, double c_tilde, int p, double eps) {
    RealField g(u.grid, (u.values.array().square() - sigma.values.array()).matrix());
    return c_tilde * std::pow(sobolev_norm(g, -eps), p);
}

double fk_potential_derivative(const RealField& u, const RealField& sigma, const RealField& eta,
                               double c_tilde, int p, double eps) {
    RealField g(u.grid, (u.values.array().square() - sigma.values.array()).matrix());
    RealField ue(u.grid, (u.values.array() * eta.values.array()).matrix());
    const double nrm = sobolev_norm(g, -eps);
    if (nrm == 0.0 && p < 2) return 0.0;
    return 2.0 * p * c_tilde * std::pow(nrm, p - 2) * sobolev_inner(g, ue, -eps);
}

BelResult bel_derivative(const AndersonOperator& op, const SolverConfig& cfg,
                         const Observable& phi, const RealField& u0, const RealField& h, double t,
                         const McOptions& mc, const BelOptions& opt) {
    if (cfg.truncation(op) != op.dimension() - 1)
        throw ConfigError("BEL weights need noise on every mode (solver.N = -1)", "solver.N");
    if (!cfg.noise) throw ConfigError("BEL weights need noise", "solver.noise");
    if (!(t > 0.0)) throw DomainError("BEL needs t > 0");
    const int steps = steps_for(t, cfg.dt);
    if (steps < 1) throw DomainError("BEL horizon shorter than one step");
    const bool fk = opt.variant == BelVariant::feynman_kac;
    const Eigen::MatrixXd gram = fk ? sobolev_gram(op.grid, -opt.epsV) : Eigen::MatrixXd();
    const Eigen::VectorXd a0 = op.to_modes(u0);
    const Eigen::VectorXd hm = op.to_modes(h);
    const double dt = cfg.dt, delta = opt.fd_delta;
    std::vector<double> est(mc.samples), fks(mc.samples), fd(mc.samples);

    for_each_chunk(mc, [&](long first, int count) {
        auto rngs = chunk_streams(mc, first, count);
        Ensemble base(op, cfg, count), bumped(op, cfg, count);
        base.set_v(replicate(a0, count));
        base.set_tangent(replicate(hm, count));
        bumped.set_v(replicate(a0 + delta * hm, count));
        const Eigen::ArrayXd inv_var = base.increment_sd().square().inverse();
        Eigen::ArrayXd A = Eigen::ArrayXd::Zero(count), B = A, C = A;
        Eigen::ArrayXd logZ = A, fksum = A, V0 = A, dV0 = A;
        // Potential terms at the current left point.
        auto potential = [&](Eigen::ArrayXd& V, Eigen::ArrayXd& dV) {
            const Eigen::MatrixXd U = base.u_physical();
            const Eigen::MatrixXd E = *op.basis * base.tangent_modes() / op.grid.spacing();
            const Eigen::MatrixXd G = (U.array().square().colwise() - base.sigma().array()).matrix();
            const Eigen::MatrixXd AG = gram * G;
            V.resize(count);
            dV.resize(count);
            for (int b = 0; b < count; ++b) {
                const double nsq = std::max(0.0, G.col(b).dot(AG.col(b)));
                const double nrm = std::sqrt(nsq);
                V[b] = opt.c_tilde * std::pow(nrm, opt.pV);
                const double pair = AG.col(b).dot(U.col(b).cwiseProduct(E.col(b)));
                dV[b] = nrm == 0.0 ? 0.0 : 2.0 * opt.pV * opt.c_tilde * std::pow(nrm, opt.pV - 2) * pair;
            }
        };
        Eigen::ArrayXd W_prev = Eigen::ArrayXd::Zero(count);
        for (int j = 0; j < steps; ++j) {
            if (fk) {
                Eigen::ArrayXd V, dV;
                potential(V, dV);
                if (j == 0) {
                    V0 = V;
                    dV0 = dV;
                } else {
                    // r = j: add Z_r (1 - e^{-dt V_r}) W_r.
                    fksum += logZ.exp() * (-(-dt * V).unaryExpr([](double x) { return std::expm1(x); })) * W_prev;
                }
                B += dt * dV;
                C += dt * double(j) * dV;
                logZ -= dt * V;
            }
            base.step(rngs);
            bumped.step_with_increments(base.last_increments());
            const Eigen::MatrixXd weighted = inv_var.matrix().asDiagonal() * base.last_increments();
            A += (base.tangent_modes().cwiseProduct(weighted)).colwise().sum().transpose().array();
            const double r = j + 1;
            W_prev = A / r - B + C / r;
        }
        const Eigen::MatrixXd U = base.u_physical(), Ub = bumped.u_physical();
        for (int b = 0; b < count; ++b) {
            const double f = phi(RealField(op.grid, U.col(b)));
            const double fb = phi(RealField(op.grid, Ub.col(b)));
            fd[first + b] = (fb - f) / delta;
            if (fk) {
                const double Zn = std::exp(logZ[b]);
                fks[first + b] = Zn * f * W_prev[b];
                est[first + b] = std::exp(dt * V0[b]) * f * (Zn * W_prev[b] + fksum[b]) + dt * dV0[b] * f;
            } else {
                est[first + b] = f * A[b] / double(steps);
            }
        }
    });
    BelResult r;
    r.estimate = estimate_mean(est);
    if (fk) r.fk_semigroup = estimate_mean(fks);
    r.fd = estimate_mean(fd);
    r.paired_gap = paired_difference(est, fd);
    r.per_sample = std::move(est);
    return r;
}

RelaxationResult relaxation_probe(const AndersonOperator& op, const SolverConfig& cfg,
                                  const RealField& u0, const RelaxationOptions& opt,
                                  std::uint64_t seed) {
    if (opt.eps_targets.empty()) throw DomainError("relaxation needs at least one target");
    SolverConfig c = cfg;
    c.N = opt.N_cond;
    c.T = opt.T;
    RngStream rng(seed, StreamPurpose::conditioning, 0);
    const ConditionedPath path = low_mode_conditioned_sample(
        op, opt.N_cond, opt.eps_box, opt.kappa, opt.T, c.dt, rng, opt.method, opt.max_attempts);
    RelaxationResult r;
    r.bound = path.bound;
    r.conditioned = path.accepted;
    r.attempts = path.attempts;
    for (double e : opt.eps_targets) r.rows.push_back({e, -1.0});
    if (!path.accepted) return r;
    Ensemble ens(op, c, 1);
    ens.set_v(op.to_modes(u0));
    const int steps = steps_for(opt.T, c.dt);
    for (int j = 0; j <= steps; ++j) {
        const RealField v(op.grid, ens.v_physical().col(0));
        const double nrm = besov_norm(v, 1.0 - opt.kappa, kInf, kInf);
        bool pending = false;
        for (auto& row : r.rows) {
            if (row.hit_time < 0.0 && nrm <= row.eps_target) row.hit_time = j * c.dt;
            pending |= row.hit_time < 0.0;
        }
        if (!pending || j == steps) break;
        ens.step_with_increments(c.noise ? Eigen::MatrixXd(path.increments[j])
                                         : Eigen::MatrixXd::Zero(opt.N_cond + 1, 1));
    }
    std::vector<double> x, y;
    for (const auto& row : r.rows)
        if (row.hit_time >= 0.0) {
            x.push_back(std::log(1.0 / row.eps_target));
            y.push_back(row.hit_time);
        }
    if (x.size() >= 2) r.fit = linear_fit(x, y);
    return r;
}

double relaxation_prediction(const AndersonOperator& op, const SolverConfig& cfg,
                             const RealField& u0, double t_star, double eps, double kappa) {
    SolverConfig c = cfg;
    c.noise = false;
    c.T = t_star;
    RngStream unused(0, StreamPurpose::misc, 0);
    const Trajectory tr = simulate(op, u0, c, unused, {t_star}, c.steps());
    const double nrm = besov_norm(tr.v.back(), 1.0 - kappa, kInf, kInf);
    return t_star + std::log(nrm / eps) / op.lowest_eigenvalue();
}

ComingDownTable coming_down_sweep(const AndersonOperator& op, const SolverConfig& cfg,
                                  const RealField& profile, const std::vector<double>& scales,
                                  const std::vector<std::uint64_t>& seeds) {
    if (scales.empty()) throw DomainError("coming_down_sweep needs at least one scale");
    if (cfg.T < 1.0) throw DomainError("coming_down_sweep needs T >= 1");
    SolverConfig c = cfg;
    c.T = 1.0;
    ComingDownTable table;
    for (std::uint64_t seed : seeds) {
        double lo = kInf, hi = 0.0;
        for (double s : scales) {
            RealField u0 = profile;
            u0.values *= s;
            RngStream rng(seed, StreamPurpose::time_noise, 0);
            const Trajectory tr = simulate(op, u0, c, rng, {}, 1);
            ComingDownCell cell{s, seed, 0.0, 0.0};
            for (const auto& row : tr.diagnostics)
                if (row.t >= 0.5 - 1e-12)
                    cell.peak = std::max(cell.peak, std::min(1.0, std::sqrt(row.t)) * row.l3p2);
            cell.bound = 1.0 + tr.diagnostics.back().K_tilde;
            table.bound_holds &= cell.peak <= cell.bound;
            lo = std::min(lo, cell.peak);
            hi = std::max(hi, cell.peak);
            table.cells.push_back(cell);
        }
        table.ratio_per_seed.push_back(lo > 0.0 ? hi / lo : kInf);
        table.worst_ratio = std::max(table.worst_ratio, table.ratio_per_seed.back());
    }
    return table;
}

}  // namespace aphi
