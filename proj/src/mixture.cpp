#include "mmdiff/mixture.hpp"

#include "mmdiff/normal.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mmdiff {

NormalMixture::NormalMixture(std::vector<NormalComponent> components)
    : components_(std::move(components)) {
    if (components_.empty()) {
        throw std::invalid_argument("NormalMixture: at least one component is required");
    }
    double total = 0.0;
    for (const auto& c : components_) {
        if (!std::isfinite(c.mean)) {
            throw std::invalid_argument("NormalMixture: component mean must be finite");
        }
        if (!(c.sd > 0.0) || !std::isfinite(c.sd)) {
            throw std::invalid_argument("NormalMixture: component sd must be positive");
        }
        bool single = components_.size() == 1;
        if (!(c.weight > 0.0) || (!single && !(c.weight < 1.0))) {
            throw std::invalid_argument("NormalMixture: weights must lie in (0, 1)");
        }
        total += c.weight;
    }
    if (std::abs(total - 1.0) > 1e-12) {
        throw std::invalid_argument("NormalMixture: weights must sum to one");
    }
}

NormalMixture NormalMixture::bimodal(double alpha, double mu1, double sigma1, double mu2,
                                     double sigma2) {
    return NormalMixture({{alpha, mu1, sigma1}, {1.0 - alpha, mu2, sigma2}});
}

NormalMixture NormalMixture::standard_normal() { return NormalMixture({{1.0, 0.0, 1.0}}); }

NormalMixture NormalMixture::from_parameters(std::span<const double> params,
                                             std::size_t components) {
    if (components == 0 || params.size() != 3 * components - 1) {
        throw std::invalid_argument("NormalMixture::from_parameters: wrong parameter count");
    }
    std::vector<NormalComponent> out(components);
    double rest = 1.0;
    for (std::size_t i = 0; i + 1 < components; ++i) {
        out[i].weight = params[i];
        rest -= params[i];
    }
    out.back().weight = rest;
    for (std::size_t i = 0; i < components; ++i) {
        out[i].mean = params[components - 1 + 2 * i];
        out[i].sd = params[components + 2 * i];
    }
    return NormalMixture(std::move(out));
}

Eigen::VectorXd NormalMixture::parameters() const {
    const std::size_t k = components_.size();
    Eigen::VectorXd p(parameter_count());
    for (std::size_t i = 0; i + 1 < k; ++i) p[i] = components_[i].weight;
    for (std::size_t i = 0; i < k; ++i) {
        p[k - 1 + 2 * i] = components_[i].mean;
        p[k + 2 * i] = components_[i].sd;
    }
    return p;
}

double NormalMixture::pdf(double y) const {
    double s = 0.0;
    for (const auto& c : components_) s += c.weight * normal_pdf(y, c.mean, c.sd);
    return s;
}

double NormalMixture::log_pdf(double y) const {
    // log-sum-exp keeps far-tail values finite
    double best = -INFINITY;
    std::vector<double> terms;
    terms.reserve(components_.size());
    for (const auto& c : components_) {
        double z = (y - c.mean) / c.sd;
        double t = std::log(c.weight) - std::log(c.sd) + normal_log_pdf(z);
        terms.push_back(t);
        best = std::max(best, t);
    }
    double s = 0.0;
    for (double t : terms) s += std::exp(t - best);
    return best + std::log(s);
}

double NormalMixture::pdf_derivative(double y) const {
    double s = 0.0;
    for (const auto& c : components_) {
        double z = (y - c.mean) / c.sd;
        s -= c.weight * z / c.sd * normal_pdf(y, c.mean, c.sd);
    }
    return s;
}

double NormalMixture::cdf(double y) const {
    double s = 0.0;
    for (const auto& c : components_) s += c.weight * normal_cdf(y, c.mean, c.sd);
    return s;
}

double NormalMixture::sf(double y) const {
    double s = 0.0;
    for (const auto& c : components_) s += c.weight * normal_sf(y, c.mean, c.sd);
    return s;
}

namespace {

// g is increasing with g(lo) <= 0 <= g(hi); slope is g'.
template <class G, class Slope>
double safeguarded_newton(G g, Slope slope, double lo, double hi) {
    if (lo == hi) return lo;
    double y = 0.5 * (lo + hi);
    for (int iter = 0; iter < 300; ++iter) {
        double gy = g(y);
        if (gy == 0.0) return y;
        if (gy < 0.0) {
            lo = y;
        } else {
            hi = y;
        }
        double d = slope(y);
        double next = y - gy / d;
        if (!(d > 0.0) || !(next > lo && next < hi)) next = 0.5 * (lo + hi);
        double tol = 4e-16 * (1.0 + std::abs(next));
        if (std::abs(next - y) <= tol || hi - lo <= tol) return next;
        y = next;
    }
    return y;
}

}  // namespace

double NormalMixture::solve_lower(double p) const {
    double lo = INFINITY;
    double hi = -INFINITY;
    double z = normal_quantile(p);
    for (const auto& c : components_) {
        lo = std::min(lo, c.mean + c.sd * z);
        hi = std::max(hi, c.mean + c.sd * z);
    }
    return safeguarded_newton([&](double y) { return cdf(y) - p; },
                              [&](double y) { return pdf(y); }, lo, hi);
}

double NormalMixture::solve_upper(double q) const {
    double lo = INFINITY;
    double hi = -INFINITY;
    double z = normal_quantile_upper(q);
    for (const auto& c : components_) {
        lo = std::min(lo, c.mean + c.sd * z);
        hi = std::max(hi, c.mean + c.sd * z);
    }
    return safeguarded_newton([&](double y) { return q - sf(y); },
                              [&](double y) { return pdf(y); }, lo, hi);
}

double NormalMixture::quantile(double p) const {
    if (!(p > 0.0 && p < 1.0)) {
        throw std::domain_error("NormalMixture::quantile: probability must lie in (0, 1)");
    }
    return p <= 0.5 ? solve_lower(p) : solve_upper(1.0 - p);
}

double NormalMixture::quantile_upper(double q) const {
    if (!(q > 0.0 && q < 1.0)) {
        throw std::domain_error("NormalMixture::quantile_upper: probability must lie in (0, 1)");
    }
    return q <= 0.5 ? solve_upper(q) : solve_lower(1.0 - q);
}

Eigen::VectorXd NormalMixture::grad_cdf_params(double y) const {
    const std::size_t k = components_.size();
    Eigen::VectorXd g(parameter_count());
    const auto& last = components_.back();
    double last_cdf = normal_cdf(y, last.mean, last.sd);
    for (std::size_t i = 0; i + 1 < k; ++i) {
        const auto& c = components_[i];
        g[i] = normal_cdf(y, c.mean, c.sd) - last_cdf;
    }
    for (std::size_t i = 0; i < k; ++i) {
        const auto& c = components_[i];
        double dens = normal_pdf((y - c.mean) / c.sd);
        g[k - 1 + 2 * i] = -c.weight / c.sd * dens;
        g[k + 2 * i] = -c.weight * (y - c.mean) / (c.sd * c.sd) * dens;
    }
    return g;
}

Eigen::VectorXd NormalMixture::grad_pdf_params(double y) const {
    const std::size_t k = components_.size();
    Eigen::VectorXd g(parameter_count());
    const auto& last = components_.back();
    double last_pdf = normal_pdf(y, last.mean, last.sd);
    for (std::size_t i = 0; i + 1 < k; ++i) {
        const auto& c = components_[i];
        g[i] = normal_pdf(y, c.mean, c.sd) - last_pdf;
    }
    for (std::size_t i = 0; i < k; ++i) {
        const auto& c = components_[i];
        double z = (y - c.mean) / c.sd;
        double dens = normal_pdf(y, c.mean, c.sd);
        g[k - 1 + 2 * i] = c.weight * dens * z / c.sd;
        g[k + 2 * i] = c.weight * dens * (z * z - 1.0) / c.sd;
    }
    return g;
}

double NormalMixture::raw_moment(int k) const {
    if (k < 1) throw std::invalid_argument("raw_moment: order must be >= 1");
    double total = 0.0;
    for (const auto& c : components_) {
        // m_j = mu m_{j-1} + (j-1) sd^2 m_{j-2}
        double prev = 1.0;
        double cur = c.mean;
        for (int j = 2; j <= k; ++j) {
            double next = c.mean * cur + (j - 1) * c.sd * c.sd * prev;
            prev = cur;
            cur = next;
        }
        total += c.weight * cur;
    }
    return total;
}

double NormalMixture::mean() const {
    double m = 0.0;
    for (const auto& c : components_) m += c.weight * c.mean;
    return m;
}

double NormalMixture::variance() const {
    const double m = mean();
    double v = 0.0;
    for (const auto& c : components_) {
        double d = c.mean - m;
        v += c.weight * (c.sd * c.sd + d * d);
    }
    return v;
}

std::vector<double> NormalMixture::modes() const {
    const double centre = mean();
    const double spread = std::sqrt(variance());
    const double lo = centre - 8.0 * spread;
    const double hi = centre + 8.0 * spread;
    constexpr int kGrid = 10000;
    const double h = (hi - lo) / kGrid;

    std::vector<double> out;
    double prev_y = lo;
    double prev_d = pdf_derivative(lo);
    for (int i = 1; i <= kGrid; ++i) {
        double y = lo + i * h;
        double d = pdf_derivative(y);
        if (prev_d > 0.0 && d <= 0.0) {
            double a = prev_y;
            double b = y;
            for (int it = 0; it < 80; ++it) {
                double m = 0.5 * (a + b);
                if (pdf_derivative(m) > 0.0) {
                    a = m;
                } else {
                    b = m;
                }
            }
            out.push_back(0.5 * (a + b));
        }
        prev_y = y;
        prev_d = d;
    }
    return out;
}

std::vector<double> NormalMixture::component_means() const {
    std::vector<double> m;
    for (const auto& c : components_) m.push_back(c.mean);
    std::sort(m.begin(), m.end());
    return m;
}

NormalMixture NormalMixture::sorted_by_mean() const {
    auto c = components_;
    std::stable_sort(c.begin(), c.end(),
                     [](const NormalComponent& a, const NormalComponent& b) {
                         return a.mean < b.mean;
                     });
    return NormalMixture(std::move(c));
}

NormalMixture NormalMixture::shifted(double c) const {
    auto comps = components_;
    for (auto& x : comps) x.mean += c;
    return NormalMixture(std::move(comps));
}

}  // namespace mmdiff
