#pragma once

#include <numbers>

#include <Eigen/Dense>

namespace aphi {

// Periodic M x M lattice of side L. Sites are stored row-major: index = i1 * M + i2.
struct TorusGrid {
    int points_per_side = 0;
    double side_length = 2.0 * std::numbers::pi;

    static TorusGrid make(int M, double L = 2.0 * std::numbers::pi);

    int size() const { return points_per_side * points_per_side; }
    double spacing() const { return side_length / points_per_side; }
    double cell_area() const { return spacing() * spacing(); }
    double volume() const { return side_length * side_length; }
    // Angular frequency scale: the lattice carries frequencies k * 2pi/L.
    double frequency_unit() const { return 2.0 * std::numbers::pi / side_length; }
    int index(int i1, int i2) const { return i1 * points_per_side + i2; }
    // Signed frequency attached to FFT slot i in [0, M).
    int signed_frequency(int i) const { return i <= points_per_side / 2 ? i : i - points_per_side; }
    bool operator==(const TorusGrid& o) const {
        return points_per_side == o.points_per_side && side_length == o.side_length;
    }
};

void require_same_grid(const TorusGrid& a, const TorusGrid& b, const char* what);

struct RealField {
    TorusGrid grid;
    Eigen::VectorXd values;

    RealField() = default;
    explicit RealField(const TorusGrid& g) : grid(g), values(Eigen::VectorXd::Zero(g.size())) {}
    RealField(const TorusGrid& g, Eigen::VectorXd v);

    double& operator()(int i1, int i2) { return values[grid.index(i1, i2)]; }
    double operator()(int i1, int i2) const { return values[grid.index(i1, i2)]; }

    // Field obtained by sampling f(x1, x2) on the lattice.
    template <class F>
    static RealField from_function(const TorusGrid& g, F&& f) {
        RealField r(g);
        const double h = g.spacing();
        for (int i1 = 0; i1 < g.points_per_side; ++i1)
            for (int i2 = 0; i2 < g.points_per_side; ++i2) r(i1, i2) = f(i1 * h, i2 * h);
        return r;
    }
};

// Discrete L2 pairing h^2 sum f g.
double inner(const RealField& f, const RealField& g);
double mean(const RealField& f);

// Fourier coefficients in FFT slot order, index = s1 * M + s2.
struct SpectralField {
    TorusGrid grid;
    Eigen::VectorXcd coefficients;

    // Coefficient at signed frequency (k1, k2), periodically wrapped.
    std::complex<double>& at(int k1, int k2);
    std::complex<double> at(int k1, int k2) const;
};

}  // namespace aphi
