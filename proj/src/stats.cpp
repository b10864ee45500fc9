#include "mmdiff/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace mmdiff {

double sample_mean(std::span<const double> x) {
    if (x.empty()) throw std::invalid_argument("sample_mean: empty input");
    return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double sample_variance(std::span<const double> x) {
    const double m = sample_mean(x);
    double s = 0.0;
    for (double v : x) s += (v - m) * (v - m);
    return s / static_cast<double>(x.size());
}

std::vector<double> autocorrelation(std::span<const double> x, std::size_t max_lag) {
    const std::size_t n = x.size();
    if (n == 0) throw std::invalid_argument("autocorrelation: empty input");
    const double m = sample_mean(x);
    std::vector<double> centred(n);
    for (std::size_t i = 0; i < n; ++i) centred[i] = x[i] - m;
    std::vector<double> acf(max_lag + 1, 0.0);
    double c0 = 0.0;
    for (double v : centred) c0 += v * v;
    acf[0] = 1.0;
    if (c0 <= 0.0) return acf;
    for (std::size_t lag = 1; lag <= max_lag && lag < n; ++lag) {
        double s = 0.0;
        for (std::size_t i = 0; i + lag < n; ++i) s += centred[i] * centred[i + lag];
        acf[lag] = s / c0;
    }
    return acf;
}

AutocorrelationEstimate autocorrelation_with_se(std::span<const double> x,
                                                std::span<const std::size_t> lags, std::size_t blocks) {
    const std::size_t n = x.size();
    if (blocks < 2 || n < 2 * blocks) throw std::invalid_argument("autocorrelation_with_se: series too short");
    const double m = sample_mean(x);
    std::vector<double> d(n);
    for (std::size_t i = 0; i < n; ++i) d[i] = x[i] - m;
    const std::size_t width = n / blocks;
    auto block_of = [&](std::size_t i) { return std::min(i / width, blocks - 1); };

    std::vector<double> var_block(blocks, 0.0);
    for (std::size_t i = 0; i < n; ++i) var_block[block_of(i)] += d[i] * d[i];
    const double var_total = std::accumulate(var_block.begin(), var_block.end(), 0.0);

    AutocorrelationEstimate out;
    for (std::size_t lag : lags) {
        if (lag == 0 || !(var_total > 0.0)) {
            out.rho.push_back(lag == 0 ? 1.0 : 0.0);
            out.se.push_back(0.0);
            continue;
        }
        std::vector<double> cov_block(blocks, 0.0);
        for (std::size_t i = 0; i + lag < n; ++i) cov_block[block_of(i)] += d[i] * d[i + lag];
        const double cov_total = std::accumulate(cov_block.begin(), cov_block.end(), 0.0);
        std::vector<double> loo(blocks);
        double loo_mean = 0.0;
        for (std::size_t b = 0; b < blocks; ++b) {
            loo[b] = (cov_total - cov_block[b]) / (var_total - var_block[b]);
            loo_mean += loo[b] / static_cast<double>(blocks);
        }
        double ss = 0.0;
        for (double v : loo) ss += (v - loo_mean) * (v - loo_mean);
        out.rho.push_back(cov_total / var_total);
        out.se.push_back(std::sqrt(ss * static_cast<double>(blocks - 1) / static_cast<double>(blocks)));
    }
    return out;
}

double ks_statistic(std::span<const double> data, const std::function<double(double)>& cdf) {
    if (data.empty()) throw std::invalid_argument("ks_statistic: empty input");
    std::vector<double> sorted(data.begin(), data.end());
    std::sort(sorted.begin(), sorted.end());
    const double n = static_cast<double>(sorted.size());
    double d = 0.0;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        double f = cdf(sorted[i]);
        d = std::max(d, std::max(static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n));
    }
    return d;
}

double ks_two_sample(std::span<const double> a, std::span<const double> b) {
    if (a.empty() || b.empty()) throw std::invalid_argument("ks_two_sample: empty input");
    std::vector<double> x(a.begin(), a.end());
    std::vector<double> y(b.begin(), b.end());
    std::sort(x.begin(), x.end());
    std::sort(y.begin(), y.end());
    std::size_t i = 0;
    std::size_t j = 0;
    double d = 0.0;
    while (i < x.size() && j < y.size()) {
        double v = std::min(x[i], y[j]);
        while (i < x.size() && x[i] <= v) ++i;
        while (j < y.size() && y[j] <= v) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / static_cast<double>(x.size()) -
                                 static_cast<double>(j) / static_cast<double>(y.size())));
    }
    return d;
}

double ks_critical_value(std::size_t n, double alpha) {
    return std::sqrt(-0.5 * std::log(alpha / 2.0)) / std::sqrt(static_cast<double>(n));
}

double pearson_correlation(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.size() < 2) {
        throw std::invalid_argument("pearson_correlation: need two equal-length samples");
    }
    const double ma = sample_mean(a);
    const double mb = sample_mean(b);
    double sab = 0.0;
    double saa = 0.0;
    double sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa <= 0.0 || sbb <= 0.0) return 0.0;
    return sab / std::sqrt(saa * sbb);
}

namespace {

std::vector<double> mid_ranks(std::span<const double> v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
    std::vector<double> ranks(v.size());
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
        double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

}  // namespace

double spearman_correlation(std::span<const double> a, std::span<const double> b) {
    auto ra = mid_ranks(a);
    auto rb = mid_ranks(b);
    return pearson_correlation(ra, rb);
}

}  // namespace mmdiff
