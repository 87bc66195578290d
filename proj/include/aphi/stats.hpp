#pragma once

#include <vector>

namespace aphi {

struct MeanEstimate {
    double mean = 0.0;
    double stderr_ = 0.0;
    long samples = 0;
};

MeanEstimate estimate_mean(const std::vector<double>& x);
double sample_variance(const std::vector<double>& x);
// Standard error of the mean of the paired difference a - b.
MeanEstimate paired_difference(const std::vector<double>& a, const std::vector<double>& b);
// |a - b| in units of the joint standard error sqrt(se_a^2 + se_b^2).
double joint_z(const MeanEstimate& a, const MeanEstimate& b);

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
};
LinearFit linear_fit(const std::vector<double>& x, const std::vector<double>& y);

struct KsResult {
    double statistic = 0.0;
    double p_value = 1.0;
};
// Two-sample Kolmogorov-Smirnov with the asymptotic Kolmogorov tail.
KsResult ks_two_sample(std::vector<double> a, std::vector<double> b);
// One-sample KS against a continuous CDF.
template <class Cdf>
KsResult ks_one_sample(std::vector<double> a, Cdf&& cdf);
double kolmogorov_tail(double lambda);
double normal_cdf(double x);

}  // namespace aphi

#include <algorithm>
#include <cmath>

template <class Cdf>
aphi::KsResult aphi::ks_one_sample(std::vector<double> a, Cdf&& cdf) {
    std::sort(a.begin(), a.end());
    const double n = double(a.size());
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double F = cdf(a[i]);
        d = std::max({d, (i + 1) / n - F, F - i / n});
    }
    const double sn = std::sqrt(n);
    return {d, kolmogorov_tail((sn + 0.12 + 0.11 / sn) * d)};
}
