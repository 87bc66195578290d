#include <cmath>
#include <limits>

#include "aphi/errors.hpp"
#include "aphi/parallel.hpp"
#include "aphi/spectral.hpp"
#include "aphi/stats.hpp"
#include "aphi/wick.hpp"

namespace aphi {

namespace {

constexpr int kChunk = 64;

// Stationary modes 0..N for samples [first, first + count), one column each.
Eigen::MatrixXd stationary_modes(const AndersonOperator& op, int N, const WickSampling& ws,
                                 long first, int count) {
    Eigen::MatrixXd X(N + 1, count);
    for (int b = 0; b < count; ++b) {
        RngStream rng(ws.seed, StreamPurpose::ou_initial, std::uint64_t(first + b));
        for (int k = 0; k <= N; ++k) X(k, b) = rng.normal() / std::sqrt(op.eigenvalues[k]);
    }
    return X;
}

template <class Fn>
void for_each_chunk(const WickSampling& ws, Fn&& fn) {
    if (ws.samples < 2) throw DomainError("ensemble statistics need at least two samples");
    const long chunks = (ws.samples + kChunk - 1) / kChunk;
    parallel_chunks(int(chunks), ws.workers, [&](int c) {
        const long first = long(c) * kChunk;
        fn(first, int(std::min<long>(kChunk, ws.samples - first)));
    });
}

void check_N(const AndersonOperator& op, int N) {
    if (N < 0 || N >= op.dimension()) throw DomainError("truncation out of range");
}

}  // namespace

double modal_covariance(const AndersonOperator& op, int N, int x, int y) {
    check_N(op, N);
    const Eigen::MatrixXd& Q = *op.basis;
    double s = 0.0;
    for (int k = 0; k <= N; ++k) s += Q(x, k) * Q(y, k) / op.eigenvalues[k];
    return s / op.grid.cell_area();
}

std::vector<SiteMean> wick_cancellation(const AndersonOperator& op, int N,
                                        const std::vector<int>& sites, const WickSampling& ws) {
    check_N(op, N);
    const double h = op.grid.spacing();
    Eigen::MatrixXd rows(sites.size(), N + 1);
    for (std::size_t i = 0; i < sites.size(); ++i) rows.row(i) = op.basis->row(sites[i]).head(N + 1) / h;
    std::vector<double> sigma(sites.size());
    for (std::size_t i = 0; i < sites.size(); ++i) sigma[i] = modal_covariance(op, N, sites[i], sites[i]);
    std::vector<std::vector<double>> vals(sites.size(), std::vector<double>(ws.samples));
    for_each_chunk(ws, [&](long first, int count) {
        const Eigen::MatrixXd P = rows * stationary_modes(op, N, ws, first, count);
        for (std::size_t i = 0; i < sites.size(); ++i)
            for (int b = 0; b < count; ++b) vals[i][first + b] = P(i, b) * P(i, b) - sigma[i];
    });
    std::vector<SiteMean> out;
    for (std::size_t i = 0; i < sites.size(); ++i) {
        const MeanEstimate m = estimate_mean(vals[i]);
        out.push_back({sites[i], m.mean, m.stderr_});
    }
    return out;
}

std::vector<CovariancePair> chaos_covariance(const AndersonOperator& op, int N,
                                             const std::vector<std::pair<int, int>>& pairs,
                                             const WickSampling& ws) {
    check_N(op, N);
    std::vector<int> sites;
    for (auto [x, y] : pairs) sites.push_back(x), sites.push_back(y);
    const double h = op.grid.spacing();
    Eigen::MatrixXd rows(sites.size(), N + 1);
    for (std::size_t i = 0; i < sites.size(); ++i) rows.row(i) = op.basis->row(sites[i]).head(N + 1) / h;
    std::vector<double> sigma(sites.size());
    for (std::size_t i = 0; i < sites.size(); ++i) sigma[i] = modal_covariance(op, N, sites[i], sites[i]);
    std::vector<std::vector<double>> vals(pairs.size(), std::vector<double>(ws.samples));
    for_each_chunk(ws, [&](long first, int count) {
        const Eigen::MatrixXd P = rows * stationary_modes(op, N, ws, first, count);
        for (std::size_t i = 0; i < pairs.size(); ++i)
            for (int b = 0; b < count; ++b) {
                const double a = P(2 * i, b), c = P(2 * i + 1, b);
                vals[i][first + b] = (a * a - sigma[2 * i]) * (c * c - sigma[2 * i + 1]);
            }
    });
    std::vector<CovariancePair> out;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        CovariancePair cp;
        cp.x = pairs[i].first;
        cp.y = pairs[i].second;
        cp.covariance = modal_covariance(op, N, cp.x, cp.y);
        const MeanEstimate m = estimate_mean(vals[i]);
        cp.chaos = m.mean;
        cp.chaos_stderr = m.stderr_;
        const double target = 2.0 * cp.covariance * cp.covariance;
        cp.relative_error = std::abs(cp.chaos - target) / target;
        out.push_back(cp);
    }
    return out;
}

LogDivergence sigma_log_divergence(const AndersonOperator& op, const std::vector<int>& Ns) {
    LogDivergence r;
    std::vector<double> x;
    for (int N : Ns) {
        const RealField s = sigma_profile(op, N, 0.0, OuStart::stationary);
        r.N.push_back(N);
        r.mean_sigma.push_back(s.values.mean());
        x.push_back(std::log(double(N)));
    }
    if (Ns.size() >= 2) {
        const LinearFit f = linear_fit(x, r.mean_sigma);
        r.slope = f.slope;
        r.r_squared = f.r_squared;
    }
    return r;
}

CauchyTrend cauchy_differences(const AndersonOperator& op, const std::vector<int>& Ns, double eps,
                               const WickSampling& ws) {
    if (Ns.empty()) throw DomainError("Cauchy trend needs truncation levels");
    int top = 0;
    for (int N : Ns) top = std::max(top, 2 * N);
    check_N(op, top);
    const double inf = std::numeric_limits<double>::infinity();
    const double h = op.grid.spacing();
    const Eigen::MatrixXd& Q = *op.basis;
    std::vector<Eigen::VectorXd> sig;
    for (int N : Ns) {
        sig.push_back(sigma_profile(op, N, 0.0, OuStart::stationary).values);
        sig.push_back(sigma_profile(op, 2 * N, 0.0, OuStart::stationary).values);
    }
    std::vector<std::vector<double>> ren(Ns.size(), std::vector<double>(ws.samples)),
        unren(Ns.size(), std::vector<double>(ws.samples));
    for_each_chunk(ws, [&](long first, int count) {
        const Eigen::MatrixXd X = stationary_modes(op, top, ws, first, count);
        for (int b = 0; b < count; ++b)
            for (std::size_t i = 0; i < Ns.size(); ++i) {
                const int N = Ns[i];
                const Eigen::VectorXd lo = Q.leftCols(N + 1) * X.col(b).head(N + 1) / h;
                const Eigen::VectorXd hi = Q.leftCols(2 * N + 1) * X.col(b).head(2 * N + 1) / h;
                const Eigen::ArrayXd raw = hi.array().square() - lo.array().square();
                const RealField u(op.grid, raw.matrix());
                const RealField r(op.grid, (raw - (sig[2 * i + 1] - sig[2 * i]).array()).matrix());
                ren[i][first + b] = besov_norm(r, -eps, inf, inf);
                unren[i][first + b] = besov_norm(u, -eps, inf, inf);
            }
    });
    CauchyTrend t;
    t.N = Ns;
    for (std::size_t i = 0; i < Ns.size(); ++i) {
        t.renormalized.push_back(estimate_mean(ren[i]).mean);
        t.unrenormalized.push_back(estimate_mean(unren[i]).mean);
    }
    t.renormalized_decreasing = t.unrenormalized_decreasing = true;
    for (std::size_t i = 1; i < Ns.size(); ++i) {
        t.renormalized_decreasing &= t.renormalized[i] < t.renormalized[i - 1];
        t.unrenormalized_decreasing &= t.unrenormalized[i] < t.unrenormalized[i - 1];
    }
    return t;
}

}  // namespace aphi
