#include "aphi/grid.hpp"

#include <string>

#include "aphi/errors.hpp"

namespace aphi {

TorusGrid TorusGrid::make(int M, double L) {
    if (M < 1 || (M & (M - 1)) != 0)
        throw ConfigError("grid size M=" + std::to_string(M) + " is not a power of two", "grid.M");
    if (!(L > 0.0)) throw ConfigError("grid side length must be positive", "grid.L");
    return TorusGrid{M, L};
}

void require_same_grid(const TorusGrid& a, const TorusGrid& b, const char* what) {
    if (!(a == b))
        throw GridMismatch(std::string(what) + ": fields live on different grids (M=" +
                           std::to_string(a.points_per_side) + " vs " +
                           std::to_string(b.points_per_side) + ")");
}

RealField::RealField(const TorusGrid& g, Eigen::VectorXd v) : grid(g), values(std::move(v)) {
    if (values.size() != g.size()) throw GridMismatch("field size does not match grid");
}

double inner(const RealField& f, const RealField& g) {
    require_same_grid(f.grid, g.grid, "inner");
    return f.grid.cell_area() * f.values.dot(g.values);
}

double mean(const RealField& f) { return f.values.mean(); }

static int wrap(int k, int M) {
    int r = k % M;
    return r < 0 ? r + M : r;
}

std::complex<double>& SpectralField::at(int k1, int k2) {
    const int M = grid.points_per_side;
    return coefficients[wrap(k1, M) * M + wrap(k2, M)];
}

std::complex<double> SpectralField::at(int k1, int k2) const {
    const int M = grid.points_per_side;
    return coefficients[wrap(k1, M) * M + wrap(k2, M)];
}

}  // namespace aphi
