#include "mmdiff/transform.hpp"

#include "mmdiff/error.hpp"
#include "mmdiff/quadrature.hpp"

#include <cmath>
#include <stdexcept>

namespace mmdiff {

double TauTable::operator()(double x) const {
    double s = (x - lo_) / step_;
    auto i = static_cast<std::size_t>(s);
    if (i >= kKnots - 1) i = kKnots - 2;
    double t = s - static_cast<double>(i);
    double t2 = t * t;
    double t3 = t2 * t;
    double h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    double h10 = t3 - 2.0 * t2 + t;
    double h01 = -2.0 * t3 + 3.0 * t2;
    double h11 = t3 - t2;
    return h00 * values_[i] + h10 * step_ * slopes_[i] + h01 * values_[i + 1] +
           h11 * step_ * slopes_[i + 1];
}

TransformedDiffusion::TransformedDiffusion(std::shared_ptr<const StationaryDiffusion> base,
                                           NormalMixture target, bool accelerate)
    : base_(std::move(base)), target_(std::move(target)),
      clamps_(std::make_shared<std::atomic<std::size_t>>(0)) {
    if (!base_) throw std::invalid_argument("TransformedDiffusion: base must not be null");
    if (accelerate) {
        double lo = base_->stationary_quantile(TauTable::kTailProbability);
        double hi = base_->stationary_quantile_upper(TauTable::kTailProbability);
        table_ = std::make_shared<TauTable>(
            lo, hi, [this](double x) { return tau(x); },
            [this](double x) { return tau_prime(x); });
    }
}

TransformedDiffusion TransformedDiffusion::ou(double nu, NormalMixture target, bool accelerate) {
    return TransformedDiffusion(std::make_shared<OrnsteinUhlenbeck>(nu), std::move(target),
                                accelerate);
}

double TransformedDiffusion::ou_rate() const {
    const auto* ou = dynamic_cast<const OrnsteinUhlenbeck*>(base_.get());
    if (ou == nullptr) throw std::logic_error("TransformedDiffusion: base is not an OU process");
    return ou->rate();
}

double TransformedDiffusion::tau(double x) const {
    double p = base_->stationary_cdf(x);
    if (p <= 0.5) {
        if (!(p >= kClamp)) {
            clamps_->fetch_add(1, std::memory_order_relaxed);
            p = kClamp;
        }
        return target_.quantile(p);
    }
    double q = base_->stationary_sf(x);
    if (!(q >= kClamp)) {
        clamps_->fetch_add(1, std::memory_order_relaxed);
        q = kClamp;
    }
    return target_.quantile_upper(q);
}

double TransformedDiffusion::tau_fast(double x) const {
    if (table_ && table_->covers(x)) return (*table_)(x);
    return tau(x);
}

double TransformedDiffusion::tau_inv(double y) const {
    double p = target_.cdf(y);
    if (p <= 0.5) {
        if (!(p > 0.0)) throw NumericRangeError("tau_inv: F(y) underflows to zero");
        return base_->stationary_quantile(p);
    }
    double q = target_.sf(y);
    if (!(q > 0.0)) throw NumericRangeError("tau_inv: 1 - F(y) underflows to zero");
    return base_->stationary_quantile_upper(q);
}

double TransformedDiffusion::tau_prime(double x) const {
    return base_->stationary_pdf(x) / target_.pdf(tau(x));
}

double TransformedDiffusion::tau_second(double x) const {
    double y = tau(x);
    double f = target_.pdf(y);
    double pi = base_->stationary_pdf(x);
    return base_->stationary_pdf_derivative(x) / f -
           pi * pi * target_.pdf_derivative(y) / (f * f * f);
}

TransformedCoefficients TransformedDiffusion::coefficients(double y) const {
    const double f = target_.pdf(y);
    if (!(f >= 1e-300)) throw NumericRangeError("coefficients: target density underflows");
    const double x = tau_inv(y);
    const double pi = base_->stationary_pdf(x);
    const double first = pi / f;
    const double second =
        base_->stationary_pdf_derivative(x) / f - pi * pi * target_.pdf_derivative(y) / (f * f * f);
    const double sigma = base_->diffusion(x);
    return {first * base_->drift(x) + 0.5 * second * sigma * sigma, sigma * first};
}

double TransformedDiffusion::log_transition_density(double y, double y0, double dt) const {
    const double x = tau_inv(y);
    const double x0 = tau_inv(y0);
    return base_->log_transition_density(x, x0, dt) + target_.log_pdf(y) -
           std::log(base_->stationary_pdf(x));
}

double TransformedDiffusion::transition_density(double y, double y0, double dt) const {
    return std::exp(log_transition_density(y, y0, dt));
}

Eigen::VectorXd TransformedDiffusion::grad_tau_inv_target(double y) const {
    return target_.grad_cdf_params(y) / base_->stationary_pdf(tau_inv(y));
}

LampertiPair TransformedDiffusion::lamperti(double x) const {
    const double ref = base_->reference_point();
    auto base_integrand = [this](double u) { return 1.0 / base_->diffusion(u); };
    auto transformed_integrand = [this](double v) { return 1.0 / coefficients(v).diffusion; };
    double base_value = integrate(base_integrand, ref, x, 1e-12, 1e-300).value;
    double transformed_value =
        integrate(transformed_integrand, tau(ref), tau(x), 1e-12, 1e-300).value;
    return {transformed_value, base_value};
}

}  // namespace mmdiff
