#include "mmdiff/normal.hpp"

#include <boost/math/special_functions/erf.hpp>

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace mmdiff {

namespace {
constexpr double kInvSqrt2 = 1.0 / std::numbers::sqrt2;
}

double normal_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

double normal_log_pdf(double x) { return -0.5 * x * x - kLogSqrt2Pi; }

double normal_cdf(double x) { return 0.5 * std::erfc(-x * kInvSqrt2); }

double normal_sf(double x) { return 0.5 * std::erfc(x * kInvSqrt2); }

double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) {
        throw std::domain_error("normal_quantile: probability must lie in (0, 1)");
    }
    if (p <= 0.5) {
        return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
    }
    return std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * (1.0 - p));
}

double normal_quantile_upper(double q) {
    if (!(q > 0.0 && q < 1.0)) {
        throw std::domain_error("normal_quantile_upper: probability must lie in (0, 1)");
    }
    if (q <= 0.5) {
        return std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * q);
    }
    return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * (1.0 - q));
}

double normal_pdf(double x, double mean, double sd) { return normal_pdf((x - mean) / sd) / sd; }

double normal_cdf(double x, double mean, double sd) { return normal_cdf((x - mean) / sd); }

double normal_sf(double x, double mean, double sd) { return normal_sf((x - mean) / sd); }

}  // namespace mmdiff
