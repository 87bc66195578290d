#include "aphi/wick.hpp"

#include <cmath>
#include <limits>

#include "aphi/errors.hpp"
#include "aphi/spectral.hpp"
#include "aphi/stats.hpp"

namespace aphi {

double ou_variance(double lambda, double t, OuStart start) {
    if (start == OuStart::stationary) {
        if (!(lambda > 0.0)) throw DomainError("stationary OU needs lambda > 0");
        return 1.0 / lambda;
    }
    if (lambda == 0.0) return 2.0 * t;
    return -std::expm1(-2.0 * lambda * t) / lambda;
}

static void check_streams(std::span<RngStream> rngs) {
    if (rngs.empty()) throw DomainError("OU sampling needs at least one random stream");
}

OUState init_ou(const AndersonOperator& op, int N, OuStart start, std::span<RngStream> rngs) {
    check_streams(rngs);
    if (N < 0 || N >= op.dimension()) throw DomainError("OU truncation out of range");
    OUState s;
    s.truncation = N;
    s.start = start;
    s.modes = Eigen::MatrixXd::Zero(N + 1, Eigen::Index(rngs.size()));
    if (start == OuStart::stationary)
        for (std::size_t b = 0; b < rngs.size(); ++b)
            for (int k = 0; k <= N; ++k)
                s.modes(k, Eigen::Index(b)) =
                    std::sqrt(ou_variance(op.eigenvalues[k], 0.0, start)) * rngs[b].normal();
    return s;
}

void step_ou_inplace(const AndersonOperator& op, OUState& state, double dt,
                     const Eigen::MatrixXd& gaussians) {
    if (!(dt > 0.0)) throw DomainError("OU step needs dt > 0");
    const int n = state.truncation + 1;
    for (int k = 0; k < n; ++k) {
        const double lam = op.eigenvalues[k];
        const double decay = std::exp(-lam * dt);
        const double sd = std::sqrt(ou_variance(lam, dt, OuStart::zero));
        state.modes.row(k) = decay * state.modes.row(k) + sd * gaussians.row(k);
    }
    state.time += dt;
}

OUState step_ou(const AndersonOperator& op, const OUState& state, double dt,
                std::span<RngStream> rngs) {
    if (!(dt > 0.0)) throw DomainError("OU step needs dt > 0");
    if (Eigen::Index(rngs.size()) != state.modes.cols())
        throw DomainError("one random stream per OU trajectory is required");
    Eigen::MatrixXd g(state.modes.rows(), state.modes.cols());
    for (Eigen::Index b = 0; b < g.cols(); ++b)
        for (Eigen::Index k = 0; k < g.rows(); ++k) g(k, b) = rngs[b].normal();
    OUState next = state;
    step_ou_inplace(op, next, dt, g);
    return next;
}

RealField assemble_field(const AndersonOperator& op, const OUState& state, int N, int column) {
    if (N < 0 || N > state.truncation) throw DomainError("field truncation exceeds OU state");
    const auto Q = op.basis->leftCols(N + 1);
    return RealField(op.grid, Q * state.modes.col(column).head(N + 1) / op.grid.spacing());
}

RealField sigma_profile(const AndersonOperator& op, int N, double t, OuStart start) {
    if (N < 0 || N >= op.dimension()) throw DomainError("sigma truncation out of range");
    Eigen::VectorXd var(N + 1);
    for (int k = 0; k <= N; ++k) var[k] = ou_variance(op.eigenvalues[k], t, start);
    const auto Q = op.basis->leftCols(N + 1);
    return RealField(op.grid, Q.array().square().matrix() * var / op.grid.cell_area());
}

double hermite(int n, double x, double sigma) {
    if (n < 0) throw DomainError("Hermite degree must be non-negative");
    double prev = 1.0, cur = x;
    if (n == 0) return prev;
    for (int k = 1; k < n; ++k) {
        const double next = x * cur - k * sigma * prev;
        prev = cur;
        cur = next;
    }
    return cur;
}

RealField wick_power(const RealField& u, const RealField& sigma, int n) {
    require_same_grid(u.grid, sigma.grid, "wick_power");
    if (n != 2 && n != 3) throw DomainError("wick_power supports n = 2 or 3");
    RealField out(u.grid);
    const auto x = u.values.array();
    const auto s = sigma.values.array();
    if (n == 2)
        out.values = (x.square() - s).matrix();
    else
        out.values = (x.cube() - 3.0 * s * x).matrix();
    return out;
}

EnhancedNoise enhanced_data(const AndersonOperator& op, const OUState& state, int N, int column) {
    EnhancedNoise z;
    z.time = state.time;
    z.truncation = N;
    const RealField x = assemble_field(op, state, N, column);
    z.sigma = sigma_profile(op, N, state.time, state.start);
    z.z1 = x;
    z.z1.values *= 3.0;
    z.z2 = wick_power(x, z.sigma, 2);
    z.z2.values *= 3.0;
    z.z3 = wick_power(x, z.sigma, 3);
    return z;
}

RealField binomial_shift(const std::array<RealField, 3>& wick, const RealField& propagated,
                         int n) {
    if (n < 1 || n > 3) throw DomainError("binomial_shift supports n = 1..3");
    for (const auto& w : wick) require_same_grid(w.grid, propagated.grid, "binomial_shift");
    const Eigen::ArrayXd p = propagated.values.array();
    auto W = [&](int k) -> Eigen::ArrayXd {
        return k == 0 ? Eigen::ArrayXd::Ones(p.size()) : Eigen::ArrayXd(wick[k - 1].values.array());
    };
    static constexpr int binom[4][4] = {{1}, {1, 1}, {1, 2, 1}, {1, 3, 3, 1}};
    Eigen::ArrayXd acc = Eigen::ArrayXd::Zero(p.size());
    Eigen::ArrayXd pk = Eigen::ArrayXd::Ones(p.size());
    for (int k = 0; k <= n; ++k) {
        acc += (k % 2 == 0 ? 1.0 : -1.0) * binom[n][k] * pk * W(n - k);
        pk *= p;
    }
    return RealField(propagated.grid, acc.matrix());
}

double conditioning_bound(const AndersonOperator& op, int N_cond, double eps_box, double kappa) {
    if (N_cond < 0 || N_cond >= op.dimension()) throw DomainError("N_cond out of range");
    if (!(eps_box > 0.0)) throw DomainError("eps_box must be positive");
    const double inf = std::numeric_limits<double>::infinity();
    double sup = 0.0;
    for (int k = 0; k <= N_cond; ++k)
        sup = std::max(sup, besov_norm(op.eigenvector(k), kappa, inf, inf));
    return eps_box / ((N_cond + 1) * sup);
}

namespace {

double normal_quantile(double p) {
    // Acklam's rational approximation, refined by two Newton steps on erfc.
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00, 2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    double x;
    if (p < 0.02425) {
        const double q = std::sqrt(-2 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
    } else if (p > 1 - 0.02425) {
        const double q = std::sqrt(-2 * std::log1p(-p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
    } else {
        const double q = p - 0.5, r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
    }
    for (int it = 0; it < 2; ++it) {
        const double e = normal_cdf(x) - p;
        const double u = e * std::sqrt(2 * M_PI) * std::exp(x * x / 2);
        x -= u / (1 + x * u / 2);
    }
    return x;
}

// Draw from N(mu, s^2) restricted to [lo, hi] by inversion.
double truncated_normal(double mu, double s, double lo, double hi, RngStream& rng) {
    double a = (lo - mu) / s, b = (hi - mu) / s;
    bool flip = false;
    if (a > 0) {  // work in the lower tail where the CDF is accurate
        std::swap(a, b);
        a = -a;
        b = -b;
        flip = true;
    }
    const double Fa = normal_cdf(a), Fb = normal_cdf(b);
    const double u = Fa + rng.uniform() * (Fb - Fa);
    double x = normal_quantile(std::clamp(u, 1e-300, 1 - 1e-16));
    x = std::clamp(x, a, b);
    return mu + s * (flip ? -x : x);
}

}  // namespace

ConditionedPath low_mode_conditioned_sample(const AndersonOperator& op, int N_cond,
                                            double eps_box, double kappa, double T, double dt,
                                            RngStream& rng, ConditioningMethod method,
                                            long max_attempts) {
    if (!(T > 0.0) || !(dt > 0.0)) throw DomainError("conditioning needs T > 0 and dt > 0");
    ConditionedPath out;
    out.bound = conditioning_bound(op, N_cond, eps_box, kappa);
    const int steps = int(std::llround(T / dt));
    const int n = N_cond + 1;
    Eigen::VectorXd decay(n), sd(n);
    for (int k = 0; k < n; ++k) {
        decay[k] = std::exp(-op.eigenvalues[k] * dt);
        sd[k] = std::sqrt(ou_variance(op.eigenvalues[k], dt, OuStart::zero));
    }
    const double b = out.bound;
    while (out.attempts < max_attempts) {
        ++out.attempts;
        out.path.assign(1, Eigen::VectorXd::Zero(n));
        out.increments.clear();
        bool inside = true;
        for (int j = 0; j < steps && inside; ++j) {
            const Eigen::VectorXd& x = out.path.back();
            Eigen::VectorXd next(n);
            for (int k = 0; k < n; ++k) {
                const double mu = decay[k] * x[k];
                next[k] = method == ConditioningMethod::stepwise
                              ? truncated_normal(mu, sd[k], -b, b, rng)
                              : mu + sd[k] * rng.normal();
                if (std::abs(next[k]) > b) inside = false;
            }
            out.increments.push_back(next - decay.cwiseProduct(x));
            out.path.push_back(next);
        }
        if (inside) {
            out.accepted = true;
            return out;
        }
    }
    return out;
}

}  // namespace aphi
