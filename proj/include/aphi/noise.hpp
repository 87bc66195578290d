#pragma once

#include "aphi/grid.hpp"
#include "aphi/rng.hpp"

namespace aphi {

// Symbol of the 5-point -Delta_h: (2/h^2)(2 - cos k1 h - cos k2 h), k in physical units.
double laplacian_symbol(const TorusGrid& g, int k1, int k2);
// Five-point Delta_h f.
RealField apply_laplacian(const RealField& f);

// Lattice white noise: iid N(0, 1/h^2) per site.
RealField sample_space_white_noise(const TorusGrid& g, RngStream& rng);

// Mean-zero solution of -Delta_h X = xi - mean(xi).
RealField lift_X(const RealField& xi);

// X with dyadic blocks 0..n removed.
RealField truncate_high(const RealField& X, int n);

// Increment of the cylindrical Wiener process over dt: iid N(0, dt/h^2) per site.
RealField sample_wiener_increment(const TorusGrid& g, double dt, RngStream& rng);

}  // namespace aphi
