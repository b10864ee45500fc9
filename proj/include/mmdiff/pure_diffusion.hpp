#pragma once

#include "mmdiff/mixture.hpp"
#include "mmdiff/simulate.hpp"
#include "mmdiff/transform.hpp"

namespace mmdiff {

/// Drift-free diffusion dX = sigma / sqrt(f(X)) dB, ergodic with invariant
/// density f. Returns (0, sigma / sqrt(f(y))); throws NumericRangeError when
/// f(y) < 1e-300.
TransformedCoefficients pure_diffusion_coefficients(const NormalMixture& target, double sigma,
                                                    double y);

/// Coefficients for simulate_euler. The diffusion coefficient grows like
/// exp(y^2 / 4) in Gaussian tails, so the Euler step must keep sigma^2 * step
/// small enough that tail excursions do not overshoot.
SdeCoefficients pure_diffusion_model(const NormalMixture& target, double sigma);

}  // namespace mmdiff
