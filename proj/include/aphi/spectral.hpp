#pragma once

#include <complex>
#include <vector>

#include "aphi/grid.hpp"

namespace aphi {

// f_hat(k) = h^2 sum_x f(x) exp(-i k.x); inverse carries the 1/L^2 factor.
SpectralField forward_transform(const RealField& f);
RealField inverse_transform(const SpectralField& f_hat);

// Convenience wrapper used by the CLI layer; M must be a power of two.
SpectralField spectral_transform(const RealField& f);
RealField spectral_transform(const SpectralField& f_hat);

// Sharp dyadic annuli: block 0 holds |k| <= 1, block j >= 1 holds 2^(j-1) < |k| <= 2^j.
int block_of_frequency(double abs_k);
int max_block(const TorusGrid& g);
// Block index of each FFT slot, cached per grid size.
const std::vector<int>& block_map(const TorusGrid& g);

RealField lp_block(const RealField& f, int j);
// All blocks 0..max_block at once (one forward transform).
std::vector<RealField> lp_blocks(const RealField& f);
// Sum of blocks 0..j (S_j); empty for j < 0.
RealField low_pass(const RealField& f, int j);

// h^2-weighted lattice L^p norm; p = infinity gives the sup norm.
double lp_norm(const RealField& f, double p);
double besov_norm(const RealField& f, double alpha, double p, double q);
// (L^-2 sum (1 + |k|^2)^s |f_hat|^2)^(1/2).
double sobolev_norm(const RealField& f, double s);
double sobolev_inner(const RealField& f, const RealField& g, double s);

enum class ParaproductMode { lower, upper, resonant, lower_or_resonant };
RealField paraproduct(const RealField& f, const RealField& g, ParaproductMode mode);

// Product-estimate probe: ratio of ||f o g||_{C^{a+b}} to ||f||_{C^a} ||g||_{C^b}.
double resonant_estimate_ratio(const RealField& f, const RealField& g, double alpha, double beta);

}  // namespace aphi
