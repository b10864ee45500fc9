#pragma once

#include "mmdiff/mixture.hpp"
#include "mmdiff/simulate.hpp"
#include "mmdiff/transform.hpp"

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace mmdiff {

/// Printed with every KS statistic computed on a time series.
inline constexpr const char* kDependentDataCaveat =
    "KS critical values assume independent observations; for serially dependent data the "
    "statistic is descriptive and the nominal level does not hold.";

/// One-step probability integral transforms of an observed path.
struct ResidualReport {
    /// u_i = Phi(z_i), i = 1..n-1.
    std::vector<double> u;
    /// Standardized base innovations z_i.
    std::vector<double> z;
    double ks = 0.0;
    /// 5% asymptotic critical value for the KS statistic against U(0,1).
    double ks_critical = 0.0;
    /// Spearman correlation of (u_{i-1}, u_i).
    double lag1_rank_correlation = 0.0;
    /// Approximate standard error 1/sqrt(m - 1) of that correlation under independence.
    double lag1_rank_se = 0.0;
    bool empty() const { return u.empty(); }
};

/// For an OU base, z_i = (x_i - e^{-nu dt} x_{i-1}) / sqrt(1 - e^{-2 nu dt})
/// with x = tau^{-1}(y), and u_i = Phi(z_i). Under the model the u_i are iid
/// uniform. A path with fewer than two observations gives an empty report.
/// Throws NumericRangeError when tau^{-1} saturates.
ResidualReport uniform_residuals(const TransformedDiffusion& model, const Path& path);

/// Inverse of one residual: the y_i whose transform from y_prev is u.
double residual_quantile(const TransformedDiffusion& model, double y_prev, double u, double dt);

enum class GridStatus {
    Ok,
    /// The local design was degenerate; a local-constant estimate is used.
    LocalConstant,
    /// No observation carries weight near the grid point.
    Skipped,
};

struct LocalLinearEstimate {
    std::vector<double> grid;
    std::vector<double> drift;
    /// Squared diffusion coefficient.
    std::vector<double> diffusion2;
    std::vector<GridStatus> status;
    /// Kish effective sample size sum(w)^2 / sum(w^2) at each grid point.
    std::vector<double> effective_n;
};

/// Local-linear regressions with a Gaussian kernel of (y_i - y_{i-1}) / dt and
/// (y_i - y_{i-1})^2 / dt on y_{i-1}. Skipped points carry NaN.
LocalLinearEstimate local_linear_coefficients(const Path& path, double bandwidth,
                                              std::span<const double> grid);

/// `points` equally spaced values between the 1% and 99% sample quantiles.
std::vector<double> interior_grid(const Path& path, std::size_t points);

struct HistogramBin {
    double lower;
    double upper;
    std::size_t count;
    double density;        ///< count / (n width)
    double model_density;  ///< mixture probability of the bin / width
};

struct GofReport {
    std::size_t n = 0;
    double ks = 0.0;
    double ks_critical = 0.0;
    std::vector<HistogramBin> histogram;
    std::string caveat = kDependentDataCaveat;
};

/// KS distance between the empirical cdf of the path values and the mixture,
/// and a histogram with ceil(2 n^{1/3}) bins (at most 200). Requires n >= 100.
GofReport marginal_gof(const NormalMixture& mixture, const Path& path);

}  // namespace mmdiff
