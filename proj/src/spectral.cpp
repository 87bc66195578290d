#include "aphi/spectral.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <mutex>

#include <unsupported/Eigen/FFT>

#include "aphi/errors.hpp"

namespace aphi {

namespace {

using cvec = std::vector<std::complex<double>>;

Eigen::FFT<double>& fft_engine() {
    // kissfft caches twiddles inside the object, so each thread keeps its own.
    thread_local Eigen::FFT<double> engine;
    return engine;
}

// In-place 2D transform on an M x M row-major buffer. Inverse is unnormalised.
void fft2(cvec& data, int M, bool inverse) {
    auto& engine = fft_engine();
    engine.SetFlag(Eigen::FFT<double>::Unscaled);
    cvec in(M), out(M);
    for (int pass = 0; pass < 2; ++pass) {
        for (int a = 0; a < M; ++a) {
            for (int b = 0; b < M; ++b) in[b] = pass == 0 ? data[a * M + b] : data[b * M + a];
            if (inverse)
                engine.inv(out, in);
            else
                engine.fwd(out, in);
            for (int b = 0; b < M; ++b) (pass == 0 ? data[a * M + b] : data[b * M + a]) = out[b];
        }
    }
}

}  // namespace

SpectralField forward_transform(const RealField& f) {
    if (f.values.size() != f.grid.size()) throw GridMismatch("field size does not match its grid");
    const int M = f.grid.points_per_side;
    cvec buf(f.values.data(), f.values.data() + f.values.size());
    if (M > 1) fft2(buf, M, false);
    SpectralField out{f.grid, Eigen::VectorXcd(f.grid.size())};
    const double h2 = f.grid.cell_area();
    for (int i = 0; i < f.grid.size(); ++i) out.coefficients[i] = h2 * buf[i];
    return out;
}

RealField inverse_transform(const SpectralField& f_hat) {
    if (f_hat.coefficients.size() != f_hat.grid.size())
        throw GridMismatch("coefficient count does not match the grid");
    const int M = f_hat.grid.points_per_side;
    cvec buf(f_hat.coefficients.data(), f_hat.coefficients.data() + f_hat.coefficients.size());
    if (M > 1) fft2(buf, M, true);
    RealField out(f_hat.grid);
    const double scale = 1.0 / f_hat.grid.volume();
    for (int i = 0; i < f_hat.grid.size(); ++i) out.values[i] = scale * buf[i].real();
    return out;
}

SpectralField spectral_transform(const RealField& f) {
    TorusGrid::make(f.grid.points_per_side, f.grid.side_length);
    return forward_transform(f);
}

RealField spectral_transform(const SpectralField& f_hat) {
    TorusGrid::make(f_hat.grid.points_per_side, f_hat.grid.side_length);
    return inverse_transform(f_hat);
}

int block_of_frequency(double abs_k) {
    if (abs_k <= 1.0) return 0;
    int j = 1;
    while (std::ldexp(1.0, j) < abs_k) ++j;
    return j;
}

static int block_of_integer_frequency(int k1, int k2) {
    const long k2sum = long(k1) * k1 + long(k2) * k2;
    if (k2sum <= 1) return 0;
    int j = 1;
    while ((1L << (2 * j)) < k2sum) ++j;
    return j;
}

const std::vector<int>& block_map(const TorusGrid& g) {
    static std::mutex mu;
    static std::map<int, std::unique_ptr<std::vector<int>>> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto& slot = cache[g.points_per_side];
    if (!slot) {
        const int M = g.points_per_side;
        slot = std::make_unique<std::vector<int>>(g.size());
        for (int s1 = 0; s1 < M; ++s1)
            for (int s2 = 0; s2 < M; ++s2)
                (*slot)[s1 * M + s2] =
                    block_of_integer_frequency(g.signed_frequency(s1), g.signed_frequency(s2));
    }
    return *slot;
}

int max_block(const TorusGrid& g) {
    const int half = g.points_per_side / 2;
    return block_of_integer_frequency(half, half);
}

std::vector<RealField> lp_blocks(const RealField& f) {
    const SpectralField fh = forward_transform(f);
    const auto& map = block_map(f.grid);
    const int J = max_block(f.grid);
    std::vector<RealField> out;
    out.reserve(J + 1);
    for (int j = 0; j <= J; ++j) {
        SpectralField part{f.grid, Eigen::VectorXcd::Zero(f.grid.size())};
        for (int i = 0; i < f.grid.size(); ++i)
            if (map[i] == j) part.coefficients[i] = fh.coefficients[i];
        out.push_back(inverse_transform(part));
    }
    return out;
}

RealField lp_block(const RealField& f, int j) {
    const int J = max_block(f.grid);
    if (j < 0 || j > J)
        throw DomainError("block index " + std::to_string(j) + " outside [0, " + std::to_string(J) +
                          "]");
    const SpectralField fh = forward_transform(f);
    const auto& map = block_map(f.grid);
    SpectralField part{f.grid, Eigen::VectorXcd::Zero(f.grid.size())};
    for (int i = 0; i < f.grid.size(); ++i)
        if (map[i] == j) part.coefficients[i] = fh.coefficients[i];
    return inverse_transform(part);
}

RealField low_pass(const RealField& f, int j) {
    const SpectralField fh = forward_transform(f);
    const auto& map = block_map(f.grid);
    SpectralField part{f.grid, Eigen::VectorXcd::Zero(f.grid.size())};
    for (int i = 0; i < f.grid.size(); ++i)
        if (map[i] <= j) part.coefficients[i] = fh.coefficients[i];
    return inverse_transform(part);
}

double lp_norm(const RealField& f, double p) {
    if (std::isinf(p)) return f.values.cwiseAbs().maxCoeff();
    if (!(p >= 1.0)) throw DomainError("L^p norm needs p >= 1");
    if (p == 2.0) return std::sqrt(f.grid.cell_area() * f.values.squaredNorm());
    double s = 0.0;
    for (int i = 0; i < f.values.size(); ++i) s += std::pow(std::abs(f.values[i]), p);
    return std::pow(f.grid.cell_area() * s, 1.0 / p);
}

double besov_norm(const RealField& f, double alpha, double p, double q) {
    if (!(q >= 1.0)) throw DomainError("Besov norm needs q >= 1");
    const auto blocks = lp_blocks(f);
    double acc = 0.0;
    for (int j = 0; j < int(blocks.size()); ++j) {
        const double term = std::pow(2.0, alpha * j) * lp_norm(blocks[j], p);
        if (std::isinf(q))
            acc = std::max(acc, term);
        else
            acc += std::pow(term, q);
    }
    return std::isinf(q) ? acc : std::pow(acc, 1.0 / q);
}

double sobolev_inner(const RealField& f, const RealField& g, double s) {
    require_same_grid(f.grid, g.grid, "sobolev_inner");
    const SpectralField fh = forward_transform(f);
    const SpectralField gh = forward_transform(g);
    const int M = f.grid.points_per_side;
    const double unit = f.grid.frequency_unit();
    double acc = 0.0;
    for (int s1 = 0; s1 < M; ++s1)
        for (int s2 = 0; s2 < M; ++s2) {
            const double k1 = unit * f.grid.signed_frequency(s1);
            const double k2 = unit * f.grid.signed_frequency(s2);
            const int i = s1 * M + s2;
            acc += std::pow(1.0 + k1 * k1 + k2 * k2, s) *
                   (fh.coefficients[i] * std::conj(gh.coefficients[i])).real();
        }
    return acc / f.grid.volume();
}

double sobolev_norm(const RealField& f, double s) { return std::sqrt(sobolev_inner(f, f, s)); }

RealField paraproduct(const RealField& f, const RealField& g, ParaproductMode mode) {
    require_same_grid(f.grid, g.grid, "paraproduct");
    const auto fb = lp_blocks(f);
    const auto gb = lp_blocks(g);
    const int J = int(fb.size()) - 1;
    RealField out(f.grid);

    auto add_lower = [&](const std::vector<RealField>& a, const std::vector<RealField>& b) {
        Eigen::VectorXd partial = Eigen::VectorXd::Zero(f.grid.size());
        for (int j = 2; j <= J; ++j) {
            partial += a[j - 2].values;
            out.values += partial.cwiseProduct(b[j].values);
        }
    };
    auto add_resonant = [&]() {
        for (int i = 0; i <= J; ++i)
            for (int j = std::max(0, i - 1); j <= std::min(J, i + 1); ++j)
                out.values += fb[i].values.cwiseProduct(gb[j].values);
    };

    switch (mode) {
        case ParaproductMode::lower: add_lower(fb, gb); break;
        case ParaproductMode::upper: add_lower(gb, fb); break;
        case ParaproductMode::resonant: add_resonant(); break;
        case ParaproductMode::lower_or_resonant:
            add_lower(fb, gb);
            add_resonant();
            break;
    }
    return out;
}

double resonant_estimate_ratio(const RealField& f, const RealField& g, double alpha, double beta) {
    const double inf = std::numeric_limits<double>::infinity();
    const RealField r = paraproduct(f, g, ParaproductMode::resonant);
    return besov_norm(r, alpha + beta, inf, inf) /
           (besov_norm(f, alpha, inf, inf) * besov_norm(g, beta, inf, inf));
}

}  // namespace aphi
