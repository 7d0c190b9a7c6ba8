#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace shapegd {

inline double normal_pdf(double x) {
    return 0.3989422804014327 * std::exp(-0.5 * x * x);
}

inline double normal_cdf(double x) {
    return 0.5 * std::erfc(-x * 0.7071067811865476);
}

// Inverse standard normal CDF, Acklam's rational approximation refined with
// one Halley step; absolute error < 1e-15 over (0, 1).
inline double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) {
        throw std::domain_error("normal_quantile: p must be in (0, 1)");
    }
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    const double p_low = 0.02425;
    double x;
    if (p < p_low) {
        double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - p_low) {
        double q = p - 0.5;
        double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        double q = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    double e = normal_cdf(x) - p;
    double u = e * std::sqrt(2.0 * 3.141592653589793) * std::exp(0.5 * x * x);
    x = x - u / (1.0 + 0.5 * x * u);
    return x;
}

inline double binomial_log_pmf(std::uint64_t n, std::uint64_t k, double p) {
    if (p <= 0.0) return k == 0 ? 0.0 : -std::numeric_limits<double>::infinity();
    if (p >= 1.0) return k == n ? 0.0 : -std::numeric_limits<double>::infinity();
    double nd = static_cast<double>(n), kd = static_cast<double>(k);
    return std::lgamma(nd + 1.0) - std::lgamma(kd + 1.0) - std::lgamma(nd - kd + 1.0) +
           kd * std::log(p) + (nd - kd) * std::log1p(-p);
}

// Smallest k with P(X <= k) >= q for X ~ Binomial(n, p). The CDF is summed in
// the probability domain from pmf values computed via lgamma, so it stays
// correct for n ~ 1e5 where naive pmf recurrences from k = 0 underflow only in
// irrelevant tails; terms more than ~12 sigma below the mean contribute less
// than machine epsilon and are skipped.
inline std::uint64_t binomial_quantile(std::uint64_t n, double p, double q) {
    if (!(q > 0.0 && q < 1.0)) {
        throw std::domain_error("binomial_quantile: q must be in (0, 1)");
    }
    if (!(p >= 0.0 && p <= 1.0)) {
        throw std::domain_error("binomial_quantile: p must be in [0, 1]");
    }
    if (n == 0 || p == 0.0) return 0;
    if (p == 1.0) return n;
    double mean = static_cast<double>(n) * p;
    double sd = std::sqrt(mean * (1.0 - p));
    std::uint64_t lo = 0;
    if (mean - 12.0 * sd > 1.0) lo = static_cast<std::uint64_t>(mean - 12.0 * sd);
    double cdf = 0.0;
    for (std::uint64_t k = lo; k <= n; ++k) {
        cdf += std::exp(binomial_log_pmf(n, k, p));
        if (cdf >= q) return k;
    }
    return n;
}

// Nearest-rank percentile: the ceil(p * n)-th smallest value. p in (0, 1].
inline double percentile_nearest_rank(std::vector<double> values, double p) {
    if (values.empty()) {
        throw std::invalid_argument("percentile_nearest_rank: empty sample");
    }
    if (!(p > 0.0 && p <= 1.0)) {
        throw std::domain_error("percentile_nearest_rank: p must be in (0, 1]");
    }
    std::size_t rank = static_cast<std::size_t>(
        std::ceil(p * static_cast<double>(values.size())));
    if (rank == 0) rank = 1;
    std::nth_element(values.begin(), values.begin() + (rank - 1), values.end());
    return values[rank - 1];
}

inline double median(std::vector<double> values) {
    if (values.empty()) throw std::invalid_argument("median: empty sample");
    std::size_t mid = values.size() / 2;
    std::nth_element(values.begin(), values.begin() + mid, values.end());
    double hi = values[mid];
    if (values.size() % 2 == 1) return hi;
    double lo = *std::max_element(values.begin(), values.begin() + mid);
    return 0.5 * (lo + hi);
}

inline double mean_of(const std::vector<double>& values) {
    if (values.empty()) throw std::invalid_argument("mean_of: empty sample");
    double s = 0.0;
    for (double v : values) s += v;
    return s / static_cast<double>(values.size());
}

}  // namespace shapegd
