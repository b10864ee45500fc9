#pragma once

#include "mmdiff/random.hpp"
#include "mmdiff/transform.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <variant>
#include <vector>

namespace mmdiff {

/// Equally spaced observations y_0, ..., y_{n-1} at times i * dt.
struct Path {
    double dt = 1.0;
    std::vector<double> values;
    /// Seed of the stream that generated the path, when known.
    std::optional<std::uint64_t> seed;

    std::size_t size() const { return values.size(); }
};

struct StationaryStart {};
using InitialState = std::variant<double, StationaryStart>;

/// Exact simulation of tau(X) for an OU base: X advances by exact Gaussian
/// transitions. A stationary start draws X_0 ~ N(0, 1); a numeric start y0 is
/// reproduced exactly as the first value.
Path simulate_transformed_ou(const TransformedDiffusion& model, std::size_t n, double dt,
                             InitialState start, Rng& rng);
Path simulate_transformed_ou(const TransformedDiffusion& model, std::size_t n, double dt,
                             InitialState start, std::uint64_t seed);

struct SdeCoefficients {
    std::function<double(double)> drift;
    std::function<double(double)> diffusion;
};

/// Euler-Maruyama with internal step dt / substeps, recording every dt.
/// Throws NumericRangeError carrying the index of the first non-finite value.
Path simulate_euler(const SdeCoefficients& sde, std::size_t n, double dt, int substeps, double x0,
                    Rng& rng);

inline constexpr int kDefaultEulerSubsteps = 32;

struct ErrorPaths {
    Path observed;  ///< Z = Y + eps
    Path latent;    ///< Y
    Path error;     ///< eps
};

/// Z = Y + eps with Y an exact stationary transformed OU path and eps an
/// independent OU process with rate kappa and N(0, gamma2) marginal, also
/// simulated exactly. gamma2 = 0 gives eps = 0.
ErrorPaths simulate_with_error(const TransformedDiffusion& model, double kappa, double gamma2,
                               std::size_t n, double dt, Rng& rng);

/// dY = -V'(Y) dt + sigma dB with V(y) = theta y^2 (y^2 - 2); invariant density
/// proportional to exp(-2 V / sigma^2).
SdeCoefficients double_well_model(double theta, double sigma);
double double_well_potential(double theta, double y);

/// Coefficients of the transformed diffusion, for Euler comparisons.
SdeCoefficients transformed_model(const TransformedDiffusion& model);

struct NonlinearDiffusionParams {
    double a_minus1 = 0.0;
    double a0 = 0.0;
    double a1 = -1.0;
    double a2 = 0.0;
    double b0 = 1.0;
    double b1 = 0.0;
    double b2 = 0.0;
    double gamma = 2.0;
};

/// dX = (a_{-1}/X + a0 + a1 X + a2 X^2) dt + sqrt(b0 + b1 X + b2 X^gamma) dB.
/// Demonstration only; no stationarity constraints are checked.
SdeCoefficients nonlinear_model(const NonlinearDiffusionParams& p);

/// CSV with header "index,time,value".
void write_path_csv(std::ostream& out, const Path& path);

}  // namespace mmdiff
