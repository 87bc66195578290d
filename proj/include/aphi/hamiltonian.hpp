#pragma once

#include <memory>
#include <vector>

#include "aphi/grid.hpp"
#include "aphi/rng.hpp"

namespace aphi {

// L^-2 sum_{k != 0} 1 / l_h(k): the lattice variance of the massless free field.
double renorm_constant(const TorusGrid& g);

// H = -Delta_h + xi - c + m on the lattice, diagonalised once.
// Eigenvectors are stored Euclidean-orthonormal; phi_k = basis.col(k) / h is h^2-orthonormal.
struct AndersonOperator {
    TorusGrid grid;
    RealField potential;
    double renormalization = 0.0;
    double mass = 0.0;
    Eigen::VectorXd eigenvalues;  // ascending
    std::shared_ptr<const Eigen::MatrixXd> basis;

    int dimension() const { return grid.size(); }
    double lowest_eigenvalue() const { return eigenvalues[0]; }
    bool nonpositive() const { return eigenvalues[0] <= 0.0; }

    RealField eigenvector(int k) const;
    // Coefficients <f, phi_k> for all k.
    Eigen::VectorXd to_modes(const RealField& f) const;
    RealField from_modes(const Eigen::VectorXd& c) const;
    // Direct stencil evaluation of H f.
    RealField apply(const RealField& f) const;
};

AndersonOperator assemble(const RealField& xi, double renormalization, double mass);

struct PositiveShift {
    AndersonOperator op;
    double increment = 0.0;
};
// Raise the mass so that lambda_0 >= lambda_min. Eigenvectors are shared, not recomputed.
PositiveShift ensure_positive(const AndersonOperator& op, double lambda_min);

RealField heat_apply(const AndersonOperator& op, double t, const RealField& f);
RealField spectral_projector(const AndersonOperator& op, int N, const RealField& f);
// Kernel of e^{-tH} against the h^2 measure; x, y are site indices.
double heat_kernel(const AndersonOperator& op, double t, int x, int y);
// Green function sum_k phi_k(x) phi_k(y) / lambda_k.
double green_function(const AndersonOperator& op, int x, int y);

// Fit K_t(x, y) ~ A t^-1 exp(-c |x-y|^2 / t) from x = site 0 over the given times; returns c.
double gaussian_bound_fit(const AndersonOperator& op, const std::vector<double>& times);

// Random field with 2^{alpha j} ||Delta_j f||_inf = 1 on every dyadic block.
RealField rough_profile(const TorusGrid& g, double alpha, RngStream& rng);

struct SchauderFit {
    double slope = 0.0;
    double r_squared = 0.0;
    std::vector<double> times;
    std::vector<double> mean_log_ratio;
};
// Regress log(||e^{-tH} u||_{C^beta} / ||u||_{C^alpha}) on log t, t in [1e-3, 1e-1],
// pooled over the given data.
SchauderFit schauder_exponent_fit(const AndersonOperator& op, double alpha, double beta,
                                  const std::vector<RealField>& samples);

}  // namespace aphi
