#pragma once

// Standard normal density, distribution and quantile functions.

namespace mmdiff {

inline constexpr double kInvSqrt2Pi = 0.398942280401432677939946059934;
inline constexpr double kSqrt2Pi = 2.50662827463100050241576528481;
inline constexpr double kLogSqrt2Pi = 0.918938533204672741780329736406;

double normal_pdf(double x);
double normal_log_pdf(double x);
double normal_cdf(double x);
/// Upper tail 1 - Phi(x), accurate for large positive x.
double normal_sf(double x);

/// Inverse of normal_cdf. Requires p in (0, 1).
double normal_quantile(double p);
/// Inverse of normal_sf: returns x with 1 - Phi(x) = q. Requires q in (0, 1).
double normal_quantile_upper(double q);

/// Density, cdf and survival of N(mean, sd^2).
double normal_pdf(double x, double mean, double sd);
double normal_cdf(double x, double mean, double sd);
double normal_sf(double x, double mean, double sd);

}  // namespace mmdiff
