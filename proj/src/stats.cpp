#include "aphi/stats.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace aphi {

MeanEstimate estimate_mean(const std::vector<double>& x) {
    MeanEstimate r;
    r.samples = long(x.size());
    if (x.empty()) return r;
    double s = 0.0;
    for (double v : x) s += v;
    r.mean = s / double(x.size());
    r.stderr_ = x.size() > 1 ? std::sqrt(sample_variance(x) / double(x.size())) : 0.0;
    return r;
}

double sample_variance(const std::vector<double>& x) {
    if (x.size() < 2) return 0.0;
    double m = 0.0;
    for (double v : x) m += v;
    m /= double(x.size());
    double s = 0.0;
    for (double v : x) s += (v - m) * (v - m);
    return s / double(x.size() - 1);
}

MeanEstimate paired_difference(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("paired samples differ in length");
    std::vector<double> d(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
    return estimate_mean(d);
}

double joint_z(const MeanEstimate& a, const MeanEstimate& b) {
    const double se = std::sqrt(a.stderr_ * a.stderr_ + b.stderr_ * b.stderr_);
    const double diff = std::abs(a.mean - b.mean);
    if (se == 0.0) return diff == 0.0 ? 0.0 : INFINITY;
    return diff / se;
}

LinearFit linear_fit(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("linear_fit needs >= 2 points");
    const double n = double(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) mx += x[i], my += y[i];
    mx /= n;
    my /= n;
    double sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    LinearFit f;
    f.slope = sxx > 0 ? sxy / sxx : 0.0;
    f.intercept = my - f.slope * mx;
    f.r_squared = (sxx > 0 && syy > 0) ? (sxy * sxy) / (sxx * syy) : (syy == 0 ? 1.0 : 0.0);
    return f;
}

double kolmogorov_tail(double lambda) {
    if (lambda < 1e-3) return 1.0;
    double s = 0.0;
    for (int k = 1; k <= 100; ++k) {
        const double term = std::exp(-2.0 * k * k * lambda * lambda);
        s += (k % 2 == 1 ? 2.0 : -2.0) * term;
        if (term < 1e-16) break;
    }
    return std::clamp(s, 0.0, 1.0);
}

KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) throw std::invalid_argument("KS needs non-empty samples");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = double(a.size()), nb = double(b.size());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        const double v = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= v) ++i;
        while (j < b.size() && b[j] <= v) ++j;
        d = std::max(d, std::abs(i / na - j / nb));
    }
    const double ne = std::sqrt(na * nb / (na + nb));
    return {d, kolmogorov_tail((ne + 0.12 + 0.11 / ne) * d)};
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace aphi
