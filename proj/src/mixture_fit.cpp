#include "mmdiff/mixture_fit.hpp"

#include "mmdiff/normal.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace mmdiff {

EmResult fit_normal_mixture_em(std::span<const double> data, const EmOptions& options) {
    EmResult result;
    const std::size_t n = data.size();
    const std::size_t k = options.components;
    if (n < 2 * k || k == 0) {
        result.degenerate = true;
        return result;
    }

    std::vector<double> sorted(data.begin(), data.end());
    std::sort(sorted.begin(), sorted.end());
    const double spread = sorted.back() - sorted.front();
    if (!(spread > 0.0)) {
        result.degenerate = true;
        return result;
    }

    double total_mean = 0.0;
    for (double y : data) total_mean += y;
    total_mean /= static_cast<double>(n);
    double total_var = 0.0;
    for (double y : data) total_var += (y - total_mean) * (y - total_mean);
    total_var /= static_cast<double>(n);

    std::vector<double> w(k, 1.0 / static_cast<double>(k));
    std::vector<double> mu(k);
    std::vector<double> var(k, total_var / static_cast<double>(k * k));
    for (std::size_t j = 0; j < k; ++j) {
        double q = (static_cast<double>(j) + 0.5) / static_cast<double>(k);
        mu[j] = sorted[static_cast<std::size_t>(q * static_cast<double>(n - 1))];
    }

    std::vector<double> resp(n * k);
    double previous = -INFINITY;
    const double var_floor = 1e-16 * spread * spread;

    for (int iter = 1; iter <= options.max_iterations; ++iter) {
        // E step in log space
        double loglik = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double best = -INFINITY;
            for (std::size_t j = 0; j < k; ++j) {
                double sd = std::sqrt(var[j]);
                double z = (data[i] - mu[j]) / sd;
                double t = std::log(w[j]) - std::log(sd) + normal_log_pdf(z);
                resp[i * k + j] = t;
                best = std::max(best, t);
            }
            double s = 0.0;
            for (std::size_t j = 0; j < k; ++j) {
                resp[i * k + j] = std::exp(resp[i * k + j] - best);
                s += resp[i * k + j];
            }
            for (std::size_t j = 0; j < k; ++j) resp[i * k + j] /= s;
            loglik += best + std::log(s);
        }
        loglik /= static_cast<double>(n);

        // M step
        for (std::size_t j = 0; j < k; ++j) {
            double nj = 0.0;
            double sum = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                nj += resp[i * k + j];
                sum += resp[i * k + j] * data[i];
            }
            if (nj <= 0.0) {
                result.degenerate = true;
                result.iterations = iter;
                return result;
            }
            double m = sum / nj;
            double ss = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                double d = data[i] - m;
                ss += resp[i * k + j] * d * d;
            }
            w[j] = nj / static_cast<double>(n);
            mu[j] = m;
            var[j] = std::max(ss / nj, var_floor);
        }

        result.iterations = iter;
        result.loglik = loglik * static_cast<double>(n);
        if (std::abs(loglik - previous) < options.tolerance) {
            result.converged = true;
            break;
        }
        previous = loglik;
    }

    for (std::size_t j = 0; j < k; ++j) {
        if (w[j] < 1e-3 || std::sqrt(var[j]) < 1e-8 * spread) {
            result.degenerate = true;
        }
    }
    if (result.degenerate) return result;

    std::vector<NormalComponent> comps(k);
    double wsum = 0.0;
    for (std::size_t j = 0; j < k; ++j) wsum += w[j];
    for (std::size_t j = 0; j < k; ++j) comps[j] = {w[j] / wsum, mu[j], std::sqrt(var[j])};
    // renormalise so the last weight absorbs rounding
    double rest = 1.0;
    for (std::size_t j = 0; j + 1 < k; ++j) rest -= comps[j].weight;
    comps.back().weight = rest;
    result.mixture = NormalMixture(std::move(comps)).sorted_by_mean();
    return result;
}

}  // namespace mmdiff
