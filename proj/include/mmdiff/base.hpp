#pragma once

#include "mmdiff/random.hpp"

#include <Eigen/Core>

#include <functional>
#include <limits>
#include <memory>
#include <vector>

namespace mmdiff {

/// Polynomial eigenfunction g(x) = sum_l coefficients[l] x^l of a diffusion
/// generator, with L g = -eigenvalue * g.
struct EigenPair {
    std::vector<double> coefficients;
    double eigenvalue;

    double value(double x) const;
    double derivative(double x) const;
    double second_derivative(double x) const;
};

/// dX = mu(X) dt + sigma(X) dB on the open interval (lower, upper).
class Diffusion {
public:
    virtual ~Diffusion() = default;

    virtual double drift(double x) const = 0;
    virtual double diffusion(double x) const = 0;
    virtual double lower() const { return -std::numeric_limits<double>::infinity(); }
    virtual double upper() const { return std::numeric_limits<double>::infinity(); }
    /// Reference point x# of the scale density.
    virtual double reference_point() const { return 0.0; }

    /// s(x) = exp(-2 int_{x#}^x mu/sigma^2). The default integrates numerically.
    /// Throws std::domain_error outside the state space.
    virtual double scale_density(double x) const;

    bool in_state_space(double x) const { return x > lower() && x < upper(); }
};

/// A diffusion with a known invariant law and, optionally, exact transitions
/// and polynomial eigenfunctions.
class StationaryDiffusion : public Diffusion {
public:
    virtual double stationary_pdf(double x) const = 0;
    virtual double stationary_pdf_derivative(double x) const = 0;
    virtual double stationary_cdf(double x) const = 0;
    virtual double stationary_sf(double x) const = 0;
    virtual double stationary_quantile(double p) const = 0;
    /// x with stationary_sf(x) = q.
    virtual double stationary_quantile_upper(double q) const = 0;

    /// int (s sigma^2)^{-1} over the state space. The default integrates numerically.
    virtual double speed_normalizer() const;

    /// Parameter vector nu of the base.
    virtual Eigen::VectorXd parameters() const = 0;
    virtual std::shared_ptr<const StationaryDiffusion> with_parameters(
        const Eigen::VectorXd& nu) const = 0;

    /// First k polynomial eigenpairs (degrees 1..k). Throws std::logic_error when
    /// the base provides none.
    virtual std::vector<EigenPair> eigenpairs(int k) const;

    virtual bool has_exact_transitions() const { return false; }
    /// p(x | x0, dt). Throws std::logic_error unless has_exact_transitions().
    virtual double transition_density(double x, double x0, double dt) const;
    virtual double log_transition_density(double x, double x0, double dt) const;
    virtual double sample_transition(double x0, double dt, Rng& rng) const;
};

/// dX = -nu X dt + sqrt(2 nu) dB with N(0, 1) invariant law and autocorrelation
/// exp(-nu t).
class OrnsteinUhlenbeck final : public StationaryDiffusion {
public:
    /// Throws std::invalid_argument unless rate > 0.
    explicit OrnsteinUhlenbeck(double rate);

    double rate() const { return rate_; }

    double drift(double x) const override { return -rate_ * x; }
    double diffusion(double) const override { return diffusion_; }
    /// e^{x^2/2} with x# = 0.
    double scale_density(double x) const override;

    double stationary_pdf(double x) const override;
    double stationary_pdf_derivative(double x) const override;
    double stationary_cdf(double x) const override;
    double stationary_sf(double x) const override;
    double stationary_quantile(double p) const override;
    double stationary_quantile_upper(double q) const override;
    double speed_normalizer() const override;

    Eigen::VectorXd parameters() const override;
    std::shared_ptr<const StationaryDiffusion> with_parameters(
        const Eigen::VectorXd& nu) const override;

    /// Probabilists' Hermite polynomials He_1..He_k with eigenvalues j * nu.
    std::vector<EigenPair> eigenpairs(int k) const override;

    bool has_exact_transitions() const override { return true; }
    double transition_density(double x, double x0, double dt) const override;
    double log_transition_density(double x, double x0, double dt) const override;
    double sample_transition(double x0, double dt, Rng& rng) const override;

    /// Conditional mean e^{-nu dt} x0 and variance 1 - e^{-2 nu dt}.
    double transition_mean(double x0, double dt) const;
    double transition_variance(double dt) const;

private:
    double rate_;
    double diffusion_;
};

/// Coefficients given as callables; used for models without a closed-form
/// stationary law and for checks of the stationarity conditions.
class FunctionalDiffusion final : public Diffusion {
public:
    using Coefficient = std::function<double(double)>;

    FunctionalDiffusion(Coefficient drift, Coefficient diffusion,
                        double lower = -std::numeric_limits<double>::infinity(),
                        double upper = std::numeric_limits<double>::infinity(),
                        double reference_point = 0.0);

    double drift(double x) const override { return drift_(x); }
    double diffusion(double x) const override { return diffusion_(x); }
    double lower() const override { return lower_; }
    double upper() const override { return upper_; }
    double reference_point() const override { return reference_; }

private:
    Coefficient drift_;
    Coefficient diffusion_;
    double lower_;
    double upper_;
    double reference_;
};

struct StationarityReport {
    bool stationary = false;
    /// Estimates of int_{x#}^r s, int_l^{x#} s and int_l^r (s sigma^2)^{-1};
    /// +inf once a window sum passes the divergence threshold.
    double upper_scale_integral = 0.0;
    double lower_scale_integral = 0.0;
    double speed_integral = 0.0;
    bool upper_scale_divergent = false;
    bool lower_scale_divergent = false;
    bool speed_finite = false;
};

/// Numerical check of the conditions for a stationary solution: both scale
/// integrals diverge and the speed integral is finite. An integral is declared
/// divergent once its running sum over expanding windows toward the boundary
/// exceeds `divergence_threshold` (or overflows).
StationarityReport stationary_check(const Diffusion& diffusion,
                                    double divergence_threshold = 1e8);

}  // namespace mmdiff
