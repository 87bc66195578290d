#include "aphi/noise.hpp"

#include <cmath>

#include "aphi/errors.hpp"
#include "aphi/spectral.hpp"

namespace aphi {

double laplacian_symbol(const TorusGrid& g, int k1, int k2) {
    const double h = g.spacing(), u = g.frequency_unit();
    return 2.0 / (h * h) * (2.0 - std::cos(u * k1 * h) - std::cos(u * k2 * h));
}

RealField apply_laplacian(const RealField& f) {
    const int M = f.grid.points_per_side;
    const double inv_h2 = 1.0 / f.grid.cell_area();
    RealField out(f.grid);
    for (int i1 = 0; i1 < M; ++i1)
        for (int i2 = 0; i2 < M; ++i2) {
            const double nb = f((i1 + 1) % M, i2) + f((i1 + M - 1) % M, i2) + f(i1, (i2 + 1) % M) +
                              f(i1, (i2 + M - 1) % M);
            out(i1, i2) = inv_h2 * (nb - 4.0 * f(i1, i2));
        }
    return out;
}

RealField sample_space_white_noise(const TorusGrid& g, RngStream& rng) {
    RealField xi(g);
    const double s = 1.0 / g.spacing();
    for (int i = 0; i < g.size(); ++i) xi.values[i] = s * rng.normal();
    return xi;
}

RealField lift_X(const RealField& xi) {
    SpectralField fh = forward_transform(xi);
    const TorusGrid& g = xi.grid;
    const int M = g.points_per_side;
    for (int s1 = 0; s1 < M; ++s1)
        for (int s2 = 0; s2 < M; ++s2) {
            const int i = s1 * M + s2;
            if (s1 == 0 && s2 == 0)
                fh.coefficients[i] = 0.0;
            else
                fh.coefficients[i] /=
                    laplacian_symbol(g, g.signed_frequency(s1), g.signed_frequency(s2));
        }
    return inverse_transform(fh);
}

RealField truncate_high(const RealField& X, int n) {
    if (n < 0) throw DomainError("truncation level must be non-negative");
    RealField out = X;
    out.values -= low_pass(X, n).values;
    return out;
}

RealField sample_wiener_increment(const TorusGrid& g, double dt, RngStream& rng) {
    if (!(dt > 0.0)) throw DomainError("Wiener increment needs dt > 0");
    RealField w(g);
    const double s = std::sqrt(dt) / g.spacing();
    for (int i = 0; i < g.size(); ++i) w.values[i] = s * rng.normal();
    return w;
}

}  // namespace aphi
