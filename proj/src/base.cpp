#include "mmdiff/base.hpp"

#include "mmdiff/error.hpp"
#include "mmdiff/normal.hpp"
#include "mmdiff/quadrature.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace mmdiff {

double EigenPair::value(double x) const {
    double v = 0.0;
    for (auto it = coefficients.rbegin(); it != coefficients.rend(); ++it) v = v * x + *it;
    return v;
}

double EigenPair::derivative(double x) const {
    double v = 0.0;
    for (std::size_t l = coefficients.size(); l-- > 1;) v = v * x + static_cast<double>(l) * coefficients[l];
    return v;
}

double EigenPair::second_derivative(double x) const {
    double v = 0.0;
    for (std::size_t l = coefficients.size(); l-- > 2;) {
        v = v * x + static_cast<double>(l * (l - 1)) * coefficients[l];
    }
    return v;
}

double Diffusion::scale_density(double x) const {
    if (!in_state_space(x)) throw std::domain_error("scale_density: x outside the state space");
    const double ref = reference_point();
    auto ratio = [this](double y) {
        double s = diffusion(y);
        return drift(y) / (s * s);
    };
    double integral = integrate(ratio, ref, x, 1e-12, 1e-15).value;
    return std::exp(-2.0 * integral);
}

double StationaryDiffusion::speed_normalizer() const {
    auto speed = [this](double x) {
        double s = diffusion(x);
        return 1.0 / (scale_density(x) * s * s);
    };
    return integrate(speed, lower(), upper(), 1e-10).value;
}

std::vector<EigenPair> StationaryDiffusion::eigenpairs(int) const {
    throw std::logic_error("eigenpairs: not available for this base diffusion");
}

double StationaryDiffusion::transition_density(double, double, double) const {
    throw std::logic_error("transition_density: no exact transitions for this base diffusion");
}

double StationaryDiffusion::log_transition_density(double x, double x0, double dt) const {
    return std::log(transition_density(x, x0, dt));
}

double StationaryDiffusion::sample_transition(double, double, Rng&) const {
    throw std::logic_error("sample_transition: no exact transitions for this base diffusion");
}

// ---------------------------------------------------------------------------

OrnsteinUhlenbeck::OrnsteinUhlenbeck(double rate) : rate_(rate) {
    if (!(rate > 0.0) || !std::isfinite(rate)) {
        throw std::invalid_argument("OrnsteinUhlenbeck: rate must be positive");
    }
    diffusion_ = std::sqrt(2.0 * rate);
}

double OrnsteinUhlenbeck::scale_density(double x) const { return std::exp(0.5 * x * x); }

double OrnsteinUhlenbeck::stationary_pdf(double x) const { return normal_pdf(x); }

double OrnsteinUhlenbeck::stationary_pdf_derivative(double x) const {
    return -x * normal_pdf(x);
}

double OrnsteinUhlenbeck::stationary_cdf(double x) const { return normal_cdf(x); }

double OrnsteinUhlenbeck::stationary_sf(double x) const { return normal_sf(x); }

double OrnsteinUhlenbeck::stationary_quantile(double p) const { return normal_quantile(p); }

double OrnsteinUhlenbeck::stationary_quantile_upper(double q) const {
    return normal_quantile_upper(q);
}

double OrnsteinUhlenbeck::speed_normalizer() const { return kSqrt2Pi / (2.0 * rate_); }

Eigen::VectorXd OrnsteinUhlenbeck::parameters() const {
    Eigen::VectorXd p(1);
    p[0] = rate_;
    return p;
}

std::shared_ptr<const StationaryDiffusion> OrnsteinUhlenbeck::with_parameters(
    const Eigen::VectorXd& nu) const {
    if (nu.size() != 1) throw std::invalid_argument("OrnsteinUhlenbeck: one parameter expected");
    return std::make_shared<OrnsteinUhlenbeck>(nu[0]);
}

std::vector<EigenPair> OrnsteinUhlenbeck::eigenpairs(int k) const {
    if (k < 1) throw std::invalid_argument("eigenpairs: k must be >= 1");
    // He_{j+1} = x He_j - j He_{j-1}
    std::vector<std::vector<double>> he{{1.0}, {0.0, 1.0}};
    for (int j = 1; j < k; ++j) {
        std::vector<double> next(j + 2, 0.0);
        for (int l = 0; l <= j; ++l) next[l + 1] += he[j][l];
        for (int l = 0; l < j; ++l) next[l] -= j * he[j - 1][l];
        he.push_back(std::move(next));
    }
    std::vector<EigenPair> out;
    for (int j = 1; j <= k; ++j) out.push_back({he[j], j * rate_});
    return out;
}

double OrnsteinUhlenbeck::transition_mean(double x0, double dt) const {
    return std::exp(-rate_ * dt) * x0;
}

double OrnsteinUhlenbeck::transition_variance(double dt) const {
    return -std::expm1(-2.0 * rate_ * dt);
}

double OrnsteinUhlenbeck::transition_density(double x, double x0, double dt) const {
    return std::exp(log_transition_density(x, x0, dt));
}

double OrnsteinUhlenbeck::log_transition_density(double x, double x0, double dt) const {
    const double v = transition_variance(dt);
    const double z = (x - transition_mean(x0, dt)) / std::sqrt(v);
    return normal_log_pdf(z) - 0.5 * std::log(v);
}

double OrnsteinUhlenbeck::sample_transition(double x0, double dt, Rng& rng) const {
    std::normal_distribution<double> norm(0.0, 1.0);
    return transition_mean(x0, dt) + std::sqrt(transition_variance(dt)) * norm(rng);
}

// ---------------------------------------------------------------------------

FunctionalDiffusion::FunctionalDiffusion(Coefficient drift, Coefficient diffusion, double lower,
                                         double upper, double reference_point)
    : drift_(std::move(drift)), diffusion_(std::move(diffusion)), lower_(lower), upper_(upper),
      reference_(reference_point) {
    if (!(lower < reference_point && reference_point < upper)) {
        throw std::invalid_argument("FunctionalDiffusion: reference point must be interior");
    }
}

namespace {

struct WindowSum {
    double value;
    bool divergent;
};

enum class Measure { Scale, Speed };

// Thrown from inside an integrand to stop adaptive refinement on overflow.
struct IntegrandOverflow {};

// -2 int_a^b mu / sigma^2, or +-inf when the integral leaves double range.
double log_scale_increment(const Diffusion& d, double a, double b) {
    if (a == b) return 0.0;
    auto ratio = [&d](double y) {
        double s = d.diffusion(y);
        return d.drift(y) / (s * s);
    };
    try {
        double v = -2.0 * integrate(ratio, a, b, 1e-10, 1e-300).value;
        return std::isnan(v) ? INFINITY : v;
    } catch (const ConvergenceError&) {
        double mid = ratio(0.5 * (a + b));
        return (mid > 0.0) == (b > a) ? -INFINITY : INFINITY;
    }
}

// Sums int s or int 1/(s sigma^2) over windows marching from the reference
// point toward `boundary`. log s is carried from window to window so each
// inner integral only spans one window.
WindowSum expanding_integral(const Diffusion& d, Measure m, double start, double boundary,
                             double threshold) {
    const bool infinite = std::isinf(boundary);
    const double direction = boundary > start ? 1.0 : -1.0;
    double sum = 0.0;
    double prev = start;
    double log_s = 0.0;
    for (int k = 0; k < 48; ++k) {
        double next = infinite ? start + direction * (std::ldexp(1.0, k + 1) - 1.0)
                               : boundary - (boundary - start) * std::ldexp(1.0, -(k + 1));
        auto integrand = [&](double x) {
            double l = log_s + log_scale_increment(d, prev, x);
            double e = m == Measure::Scale ? l : -l;
            if (e > 700.0) throw IntegrandOverflow{};
            if (m == Measure::Scale) return std::exp(e);
            double sigma = d.diffusion(x);
            return std::exp(e) / (sigma * sigma);
        };
        double piece = 0.0;
        try {
            piece = integrate(integrand, std::min(prev, next), std::max(prev, next), 1e-8, 1e-300)
                        .value;
        } catch (const ConvergenceError&) {
            return {INFINITY, true};
        } catch (const IntegrandOverflow&) {
            return {INFINITY, true};
        }
        if (!std::isfinite(piece)) return {INFINITY, true};
        sum += piece;
        if (sum > threshold) return {INFINITY, true};
        log_s += log_scale_increment(d, prev, next);
        if (k > 6 && piece <= 1e-16 * sum) break;
        // the integrand has underflowed for good
        if (m == Measure::Scale ? log_s < -745.0 : log_s > 745.0) break;
        prev = next;
    }
    return {sum, false};
}

}  // namespace

StationarityReport stationary_check(const Diffusion& d, double divergence_threshold) {
    StationarityReport r;
    const double ref = d.reference_point();

    auto up = expanding_integral(d, Measure::Scale, ref, d.upper(), divergence_threshold);
    auto down = expanding_integral(d, Measure::Scale, ref, d.lower(), divergence_threshold);
    auto speed_up = expanding_integral(d, Measure::Speed, ref, d.upper(), divergence_threshold);
    auto speed_down = expanding_integral(d, Measure::Speed, ref, d.lower(), divergence_threshold);

    r.upper_scale_integral = up.value;
    r.lower_scale_integral = down.value;
    r.upper_scale_divergent = up.divergent;
    r.lower_scale_divergent = down.divergent;
    r.speed_finite = !speed_up.divergent && !speed_down.divergent;
    r.speed_integral = r.speed_finite ? speed_up.value + speed_down.value : INFINITY;
    r.stationary = r.upper_scale_divergent && r.lower_scale_divergent && r.speed_finite;
    return r;
}

}  // namespace mmdiff
