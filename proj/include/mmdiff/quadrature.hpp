#pragma once

#include <functional>

namespace mmdiff {

struct QuadratureResult {
    double value;
    double error;
};

/// Globally adaptive 61-point Gauss-Kronrod on [a, b]; either limit may be
/// infinite. Panels are bisected worst-first until the summed error estimate
/// is below max(rel_tol * |value|, abs_tol, 50 eps L1), where L1 = int |f|, or
/// until `max_panels` panels exist. Throws ConvergenceError on a non-finite
/// integrand value or when the final error exceeds that bound by more than a
/// factor of 100.
QuadratureResult integrate(const std::function<double(double)>& f, double a, double b,
                           double rel_tol = 1e-12, double abs_tol = 0.0,
                           unsigned max_panels = 4000);

}  // namespace mmdiff
