#include "aphi/hamiltonian.hpp"

#include <cmath>
#include <limits>

#include "aphi/errors.hpp"
#include "aphi/noise.hpp"
#include "aphi/spectral.hpp"
#include "aphi/stats.hpp"

namespace aphi {

double renorm_constant(const TorusGrid& g) {
    const int M = g.points_per_side;
    double s = 0.0;
    for (int s1 = 0; s1 < M; ++s1)
        for (int s2 = 0; s2 < M; ++s2) {
            if (s1 == 0 && s2 == 0) continue;
            s += 1.0 / laplacian_symbol(g, s1, s2);
        }
    return s / g.volume();
}

RealField AndersonOperator::eigenvector(int k) const {
    if (k < 0 || k >= dimension()) throw DomainError("eigenvector index out of range");
    return RealField(grid, basis->col(k) / grid.spacing());
}

Eigen::VectorXd AndersonOperator::to_modes(const RealField& f) const {
    require_same_grid(grid, f.grid, "to_modes");
    return grid.spacing() * (basis->transpose() * f.values);
}

RealField AndersonOperator::from_modes(const Eigen::VectorXd& c) const {
    return RealField(grid, (*basis * c) / grid.spacing());
}

RealField AndersonOperator::apply(const RealField& f) const {
    require_same_grid(grid, f.grid, "apply");
    RealField out = apply_laplacian(f);
    out.values = -out.values;
    out.values.array() +=
        (potential.values.array() - renormalization + mass) * f.values.array();
    return out;
}

AndersonOperator assemble(const RealField& xi, double renormalization, double mass) {
    const TorusGrid& g = xi.grid;
    const int n = g.size(), M = g.points_per_side;
    const double inv_h2 = 1.0 / g.cell_area();
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
    for (int i1 = 0; i1 < M; ++i1)
        for (int i2 = 0; i2 < M; ++i2) {
            const int i = g.index(i1, i2);
            A(i, i) += 4.0 * inv_h2 + xi.values[i] - renormalization + mass;
            for (int nb : {g.index((i1 + 1) % M, i2), g.index((i1 + M - 1) % M, i2),
                           g.index(i1, (i2 + 1) % M), g.index(i1, (i2 + M - 1) % M)})
                A(i, nb) -= inv_h2;
        }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
    if (es.info() != Eigen::Success) throw NumericalError("eigendecomposition failed");
    AndersonOperator op;
    op.grid = g;
    op.potential = xi;
    op.renormalization = renormalization;
    op.mass = mass;
    op.eigenvalues = es.eigenvalues();
    op.basis = std::make_shared<const Eigen::MatrixXd>(es.eigenvectors());
    return op;
}

PositiveShift ensure_positive(const AndersonOperator& op, double lambda_min) {
    PositiveShift r{op, 0.0};
    if (op.lowest_eigenvalue() < lambda_min) {
        r.increment = lambda_min - op.lowest_eigenvalue();
        r.op.mass += r.increment;
        r.op.eigenvalues.array() += r.increment;
    }
    return r;
}

RealField heat_apply(const AndersonOperator& op, double t, const RealField& f) {
    require_same_grid(op.grid, f.grid, "heat_apply");
    if (t < 0.0) throw DomainError("heat_apply needs t >= 0");
    Eigen::VectorXd c = op.basis->transpose() * f.values;
    c.array() *= (-t * op.eigenvalues.array()).exp();
    return RealField(op.grid, *op.basis * c);
}

RealField spectral_projector(const AndersonOperator& op, int N, const RealField& f) {
    require_same_grid(op.grid, f.grid, "spectral_projector");
    if (N < 0 || N >= op.dimension())
        throw DomainError("projector level N=" + std::to_string(N) + " outside [0, " +
                          std::to_string(op.dimension() - 1) + "]");
    const auto Q = op.basis->leftCols(N + 1);
    return RealField(op.grid, Q * (Q.transpose() * f.values));
}

double heat_kernel(const AndersonOperator& op, double t, int x, int y) {
    if (!(t > 0.0)) throw DomainError("heat kernel needs t > 0");
    const int n = op.dimension();
    if (x < 0 || x >= n || y < 0 || y >= n) throw DomainError("site index out of range");
    const Eigen::MatrixXd& Q = *op.basis;
    double s = 0.0;
    for (int k = 0; k < n; ++k) s += std::exp(-t * op.eigenvalues[k]) * Q(x, k) * Q(y, k);
    return s / op.grid.cell_area();
}

double green_function(const AndersonOperator& op, int x, int y) {
    const int n = op.dimension();
    if (x < 0 || x >= n || y < 0 || y >= n) throw DomainError("site index out of range");
    if (op.nonpositive()) throw DomainError("Green function needs a positive operator");
    const Eigen::MatrixXd& Q = *op.basis;
    double s = 0.0;
    for (int k = 0; k < n; ++k) s += Q(x, k) * Q(y, k) / op.eigenvalues[k];
    return s / op.grid.cell_area();
}

double gaussian_bound_fit(const AndersonOperator& op, const std::vector<double>& times) {
    const TorusGrid& g = op.grid;
    const int M = g.points_per_side;
    const double h = g.spacing();
    const Eigen::MatrixXd& Q = *op.basis;
    std::vector<double> cs;
    for (double t : times) {
        Eigen::VectorXd w = (-t * op.eigenvalues.array()).exp();
        // Column of the kernel at site 0: K(0, y) for all y.
        Eigen::VectorXd col = Q * (w.asDiagonal() * Q.row(0).transpose()) / g.cell_area();
        std::vector<double> xs, ys;
        for (int i1 = 0; i1 < M; ++i1)
            for (int i2 = 0; i2 < M; ++i2) {
                const int d1 = std::min(i1, M - i1), d2 = std::min(i2, M - i2);
                const double r2 = h * h * (d1 * d1 + d2 * d2);
                if (r2 > std::pow(g.side_length / 4.0, 2)) continue;
                const double k = col[g.index(i1, i2)];
                if (k <= 0.0) continue;
                xs.push_back(r2 / t);
                ys.push_back(std::log(t * k));
            }
        if (xs.size() >= 3) cs.push_back(-linear_fit(xs, ys).slope);
    }
    if (cs.empty()) throw NumericalError("Gaussian bound fit had no usable points");
    double s = 0.0;
    for (double c : cs) s += c;
    return s / double(cs.size());
}

RealField rough_profile(const TorusGrid& g, double alpha, RngStream& rng) {
    RealField noise(g);
    for (int i = 0; i < g.size(); ++i) noise.values[i] = rng.normal();
    const auto blocks = lp_blocks(noise);
    RealField out(g);
    for (int j = 0; j < int(blocks.size()); ++j) {
        const double sup = lp_norm(blocks[j], INFINITY);
        if (sup == 0.0) continue;
        out.values += std::pow(2.0, -alpha * j) / sup * blocks[j].values;
    }
    return out;
}

SchauderFit schauder_exponent_fit(const AndersonOperator& op, double alpha, double beta,
                                  const std::vector<RealField>& samples) {
    if (samples.empty()) throw DomainError("Schauder fit needs at least one sample");
    const double inf = std::numeric_limits<double>::infinity();
    SchauderFit fit;
    for (int i = 0; i <= 8; ++i) fit.times.push_back(std::pow(10.0, -3.0 + 0.25 * i));
    fit.mean_log_ratio.assign(fit.times.size(), 0.0);
    std::vector<double> xs, ys;
    for (const auto& u : samples) {
        const double base = besov_norm(u, alpha, inf, inf);
        Eigen::VectorXd c = op.basis->transpose() * u.values;
        for (std::size_t i = 0; i < fit.times.size(); ++i) {
            const double t = fit.times[i];
            Eigen::VectorXd ct = c.array() * (-t * op.eigenvalues.array()).exp();
            const RealField ut(op.grid, *op.basis * ct);
            const double y = std::log(besov_norm(ut, beta, inf, inf) / base);
            xs.push_back(std::log(t));
            ys.push_back(y);
            fit.mean_log_ratio[i] += y / double(samples.size());
        }
    }
    const LinearFit lf = linear_fit(xs, ys);
    fit.slope = lf.slope;
    fit.r_squared = lf.r_squared;
    return fit;
}

}  // namespace aphi
