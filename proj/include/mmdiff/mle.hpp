#pragma once

#include "mmdiff/fit_result.hpp"
#include "mmdiff/simulate.hpp"

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <optional>

namespace mmdiff {

struct LikelihoodOptions {
    /// Adds log f(y_0), treating the first observation as a stationary draw.
    /// Off by default: the likelihood conditions on y_0.
    bool stationary_start = false;
};

/// Exact log-likelihood of an OU base mapped onto a normal mixture, for theta
/// in the layout of parameters.hpp. When `gradient` is non-null it receives the
/// analytic derivative with respect to theta. Throws NumericRangeError carrying
/// the observation index when tau^{-1} saturates, std::invalid_argument for an
/// inadmissible theta or a path shorter than 2.
double loglik_transformed_ou(const Eigen::VectorXd& theta, const Path& path,
                             std::size_t components = 2, Eigen::VectorXd* gradient = nullptr,
                             const LikelihoodOptions& options = {});

struct InitialValues {
    Eigen::VectorXd theta;
    /// Set when the marginal could not support a proper mixture fit (constant
    /// data, a vanishing component); theta is then a unimodal placeholder.
    bool degenerate = false;
};

/// Starting values: a mixture by EM on the marginal sample, and nu from the
/// lag-1 autocorrelation of the normal scores of the empirical ranks.
InitialValues auto_init(const Path& path, std::size_t components = 2);

struct MleOptions {
    std::size_t components = 2;
    /// Number of starting points; the first is the initial value itself, the
    /// others are jittered copies in unconstrained coordinates.
    int starts = 5;
    double jitter = 0.15;
    std::uint64_t seed = 20240611;
    int max_iterations = 2000;
    /// Gradient norm of the per-transition log-likelihood in unconstrained
    /// coordinates at which the search stops.
    double gradient_tolerance = 1e-7;
    /// Central-difference step for the observed information.
    double hessian_step = 1e-4;
    LikelihoodOptions likelihood;
};

/// Maximum-likelihood fit. Without `init` the starting value is auto_init. The
/// output is relabelled so that the component means increase. Throws
/// std::invalid_argument for paths shorter than 50 observations.
FitResult fit_mle(const Path& path, const std::optional<Eigen::VectorXd>& init = std::nullopt,
                  const MleOptions& options = {});

/// Observed information -d^2 loglik / d theta^2 by central differences of the
/// analytic gradient in unconstrained coordinates (mapped back to theta).
Eigen::MatrixXd observed_information(const Eigen::VectorXd& theta, const Path& path,
                                     std::size_t components = 2, double step = 1e-4,
                                     const LikelihoodOptions& options = {});

}  // namespace mmdiff
