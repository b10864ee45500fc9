#include "mmdiff/diagnostics.hpp"

#include "mmdiff/error.hpp"
#include "mmdiff/normal.hpp"
#include "mmdiff/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace mmdiff {

namespace {

struct OuStep {
    double rho;
    double sd;
};

OuStep ou_step(const TransformedDiffusion& model, double dt) {
    const double nu = model.ou_rate();
    return {std::exp(-nu * dt), std::sqrt(-std::expm1(-2.0 * nu * dt))};
}

}  // namespace

ResidualReport uniform_residuals(const TransformedDiffusion& model, const Path& path) {
    ResidualReport r;
    if (path.size() < 2) return r;
    const OuStep s = ou_step(model, path.dt);

    std::vector<double> x(path.size());
    for (std::size_t i = 0; i < path.size(); ++i) {
        try {
            x[i] = model.tau_inv(path.values[i]);
        } catch (const NumericRangeError&) {
            throw NumericRangeError("uniform_residuals: tau^{-1} saturates", i);
        }
    }
    const std::size_t m = path.size() - 1;
    r.z.resize(m);
    r.u.resize(m);
    for (std::size_t i = 1; i < path.size(); ++i) {
        r.z[i - 1] = (x[i] - s.rho * x[i - 1]) / s.sd;
        r.u[i - 1] = normal_cdf(r.z[i - 1]);
    }
    r.ks = ks_statistic(r.u, [](double v) { return std::clamp(v, 0.0, 1.0); });
    r.ks_critical = ks_critical_value(m);
    if (m >= 3) {
        std::span<const double> u(r.u);
        r.lag1_rank_correlation = spearman_correlation(u.first(m - 1), u.subspan(1));
        r.lag1_rank_se = 1.0 / std::sqrt(static_cast<double>(m - 2));
    } else {
        r.lag1_rank_correlation = std::numeric_limits<double>::quiet_NaN();
        r.lag1_rank_se = std::numeric_limits<double>::quiet_NaN();
    }
    return r;
}

double residual_quantile(const TransformedDiffusion& model, double y_prev, double u, double dt) {
    if (!(u > 0.0 && u < 1.0)) throw std::invalid_argument("residual_quantile: u must lie in (0, 1)");
    const OuStep s = ou_step(model, dt);
    const double z = u < 0.5 ? normal_quantile(u) : normal_quantile_upper(1.0 - u);
    return model.tau(s.rho * model.tau_inv(y_prev) + s.sd * z);
}

LocalLinearEstimate local_linear_coefficients(const Path& path, double bandwidth,
                                              std::span<const double> grid) {
    if (!(bandwidth > 0.0)) throw std::invalid_argument("local_linear_coefficients: bandwidth must be positive");
    if (path.size() < 2) throw std::invalid_argument("local_linear_coefficients: needs at least 2 observations");
    const auto [lo, hi] = std::minmax_element(path.values.begin(), path.values.end());
    for (double g : grid) {
        if (g < *lo || g > *hi) {
            throw std::invalid_argument("local_linear_coefficients: grid point outside the data range");
        }
    }

    const std::size_t m = path.size() - 1;
    std::vector<double> d1(m), d2(m);
    for (std::size_t i = 0; i < m; ++i) {
        const double dy = path.values[i + 1] - path.values[i];
        d1[i] = dy / path.dt;
        d2[i] = dy * dy / path.dt;
    }

    LocalLinearEstimate out;
    out.grid.assign(grid.begin(), grid.end());
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (double g : grid) {
        // weighted moments of the centred regressor and responses
        double s0 = 0, s1 = 0, s2 = 0, w2 = 0;
        double t0a = 0, t1a = 0, t0b = 0, t1b = 0;
        for (std::size_t i = 0; i < m; ++i) {
            const double c = path.values[i] - g;
            const double k = std::exp(-0.5 * (c / bandwidth) * (c / bandwidth));
            if (k == 0.0) continue;
            s0 += k;
            s1 += k * c;
            s2 += k * c * c;
            w2 += k * k;
            t0a += k * d1[i];
            t1a += k * c * d1[i];
            t0b += k * d2[i];
            t1b += k * c * d2[i];
        }
        const double neff = s0 > 0.0 ? s0 * s0 / w2 : 0.0;
        out.effective_n.push_back(neff);
        if (neff < 2.0) {
            out.drift.push_back(nan);
            out.diffusion2.push_back(nan);
            out.status.push_back(GridStatus::Skipped);
            continue;
        }
        const double det = s0 * s2 - s1 * s1;
        if (det <= 1e-12 * s0 * s2 || det <= 0.0) {
            out.drift.push_back(t0a / s0);
            out.diffusion2.push_back(t0b / s0);
            out.status.push_back(GridStatus::LocalConstant);
            continue;
        }
        out.drift.push_back((s2 * t0a - s1 * t1a) / det);
        out.diffusion2.push_back((s2 * t0b - s1 * t1b) / det);
        out.status.push_back(GridStatus::Ok);
    }
    return out;
}

std::vector<double> interior_grid(const Path& path, std::size_t points) {
    if (path.size() == 0 || points == 0) return {};
    std::vector<double> v = path.values;
    std::sort(v.begin(), v.end());
    auto q = [&](double p) { return v[static_cast<std::size_t>(p * static_cast<double>(v.size() - 1))]; };
    const double a = q(0.01);
    const double b = q(0.99);
    if (points == 1) return {0.5 * (a + b)};
    std::vector<double> g(points);
    for (std::size_t i = 0; i < points; ++i) {
        g[i] = a + (b - a) * static_cast<double>(i) / static_cast<double>(points - 1);
    }
    return g;
}

GofReport marginal_gof(const NormalMixture& mixture, const Path& path) {
    if (path.size() < 100) throw std::invalid_argument("marginal_gof: needs at least 100 observations");
    GofReport r;
    r.n = path.size();
    r.ks = ks_statistic(path.values, [&](double y) { return mixture.cdf(y); });
    r.ks_critical = ks_critical_value(r.n);

    const auto [lo_it, hi_it] = std::minmax_element(path.values.begin(), path.values.end());
    double lo = *lo_it;
    double hi = *hi_it;
    std::size_t bins = std::min<std::size_t>(
        200, static_cast<std::size_t>(std::ceil(2.0 * std::cbrt(static_cast<double>(r.n)))));
    if (hi == lo) {
        lo -= 0.5;
        hi += 0.5;
        bins = 1;
    }
    const double width = (hi - lo) / static_cast<double>(bins);
    std::vector<std::size_t> counts(bins, 0);
    for (double y : path.values) {
        auto b = static_cast<std::size_t>((y - lo) / width);
        counts[std::min(b, bins - 1)]++;
    }
    const double n = static_cast<double>(r.n);
    for (std::size_t b = 0; b < bins; ++b) {
        const double a = lo + width * static_cast<double>(b);
        const double e = b + 1 == bins ? hi : a + width;
        r.histogram.push_back({a, e, counts[b], static_cast<double>(counts[b]) / (n * (e - a)),
                               (mixture.cdf(e) - mixture.cdf(a)) / (e - a)});
    }
    return r;
}

}  // namespace mmdiff
