#pragma once

#include "mmdiff/base.hpp"
#include "mmdiff/mixture.hpp"

#include <Eigen/Core>

#include <atomic>
#include <cstddef>
#include <memory>
#include <vector>

namespace mmdiff {

struct TransformedCoefficients {
    double drift;
    double diffusion;
};

/// Values of the Lamperti coordinate int 1/sigma for the transformed process and
/// for its base, at corresponding points y = tau(x).
struct LampertiPair {
    double transformed;
    double base;
};

/// Cubic Hermite interpolant of tau on 2048 knots spanning base probabilities
/// [1e-10, 1 - 1e-10], with exact knot slopes. Outside that range callers fall
/// back to the exact map.
class TauTable {
public:
    static constexpr std::size_t kKnots = 2048;
    static constexpr double kTailProbability = 1e-10;

    TauTable() = default;
    template <class TauFn, class SlopeFn>
    TauTable(double lo, double hi, TauFn tau, SlopeFn slope) : lo_(lo), hi_(hi) {
        step_ = (hi - lo) / static_cast<double>(kKnots - 1);
        values_.resize(kKnots);
        slopes_.resize(kKnots);
        for (std::size_t i = 0; i < kKnots; ++i) {
            double x = lo + static_cast<double>(i) * step_;
            values_[i] = tau(x);
            slopes_[i] = slope(x);
        }
    }

    bool covers(double x) const { return !values_.empty() && x >= lo_ && x <= hi_; }
    double operator()(double x) const;

private:
    double lo_ = 0.0;
    double hi_ = 0.0;
    double step_ = 0.0;
    std::vector<double> values_;
    std::vector<double> slopes_;
};

/// Y = tau(X) with tau = F^{-1} o Pi, where X is a stationary base diffusion with
/// invariant cdf Pi and F is the target mixture cdf. Immutable after
/// construction; the tail-clamp counter is the only mutable state and is atomic.
class TransformedDiffusion {
public:
    /// Probabilities handed to F^{-1} are clamped to [kClamp, 1 - kClamp].
    static constexpr double kClamp = 1e-15;

    TransformedDiffusion(std::shared_ptr<const StationaryDiffusion> base, NormalMixture target,
                         bool accelerate = false);

    /// OU base with rate nu.
    static TransformedDiffusion ou(double nu, NormalMixture target, bool accelerate = false);

    const StationaryDiffusion& base() const { return *base_; }
    std::shared_ptr<const StationaryDiffusion> base_ptr() const { return base_; }
    const NormalMixture& target() const { return target_; }
    /// Rate of an OU base; throws std::logic_error for other bases.
    double ou_rate() const;

    double tau(double x) const;
    /// Uses the TauTable when built and x inside its range, otherwise tau(x).
    double tau_fast(double x) const;
    /// Throws NumericRangeError when F(y) or 1 - F(y) underflows to zero.
    double tau_inv(double y) const;
    /// tau'(x) = pi(x) / f(tau x).
    double tau_prime(double x) const;
    /// tau''(x) = pi'(x) / f - pi(x)^2 f'(tau x) / f^3.
    double tau_second(double x) const;

    /// Drift and diffusion of Y at y, via the Ito form tau' mu + tau'' sigma^2 / 2
    /// and sigma tau'. Throws NumericRangeError when f(y) < 1e-300.
    TransformedCoefficients coefficients(double y) const;

    /// q(y | y0, dt) = p(tau^{-1} y | tau^{-1} y0, dt) f(y) / pi(tau^{-1} y).
    double transition_density(double y, double y0, double dt) const;
    double log_transition_density(double y, double y0, double dt) const;

    /// d tau^{-1}(y) / d psi = (d F_psi(y) / d psi) / pi(tau^{-1} y), in the
    /// target's parameters() order. Valid when Pi does not depend on psi.
    Eigen::VectorXd grad_tau_inv_target(double y) const;

    /// Lamperti coordinates at y = tau(x): int_{tau(x#)}^{y} 1/sigma^tau and
    /// int_{x#}^{x} 1/sigma, both by adaptive quadrature.
    LampertiPair lamperti(double x) const;

    /// Number of probabilities clamped so far.
    std::size_t clamp_count() const { return clamps_->load(std::memory_order_relaxed); }

private:
    std::shared_ptr<const StationaryDiffusion> base_;
    NormalMixture target_;
    std::shared_ptr<TauTable> table_;
    std::shared_ptr<std::atomic<std::size_t>> clamps_;
};

}  // namespace mmdiff
