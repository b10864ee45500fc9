#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace mmdiff {

double sample_mean(std::span<const double> x);
/// Variance with 1/n normalisation.
double sample_variance(std::span<const double> x);

/// Autocorrelations at lags 0..max_lag with the biased (1/n) autocovariance,
/// which keeps the sequence positive semidefinite. A constant series yields
/// 1 at lag 0 and 0 elsewhere.
std::vector<double> autocorrelation(std::span<const double> x, std::size_t max_lag);

struct AutocorrelationEstimate {
    std::vector<double> rho;
    /// Delete-one-block jackknife standard errors.
    std::vector<double> se;
};

/// Biased autocorrelations at the given lags with jackknife standard errors
/// from `blocks` contiguous blocks: dropping block b removes its terms from
/// both the lagged cross-products and the variance.
AutocorrelationEstimate autocorrelation_with_se(std::span<const double> x,
                                                std::span<const std::size_t> lags,
                                                std::size_t blocks = 20);

/// sup_y |F_n(y) - F(y)|.
double ks_statistic(std::span<const double> data, const std::function<double(double)>& cdf);
/// Two-sample Kolmogorov-Smirnov distance.
double ks_two_sample(std::span<const double> a, std::span<const double> b);
/// Asymptotic one-sample critical value sqrt(-log(alpha/2)/2)/sqrt(n).
double ks_critical_value(std::size_t n, double alpha = 0.05);

double pearson_correlation(std::span<const double> a, std::span<const double> b);
/// Pearson correlation of mid-ranks.
double spearman_correlation(std::span<const double> a, std::span<const double> b);

}  // namespace mmdiff
