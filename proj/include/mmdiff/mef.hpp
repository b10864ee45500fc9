#pragma once

#include "mmdiff/fit_result.hpp"
#include "mmdiff/simulate.hpp"

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <vector>

namespace mmdiff {

enum class WeightMode {
    /// w = B V^{-1} with the conditional expectations in B estimated by
    /// antithetic Monte Carlo.
    OptimalSimulated,
    /// w = B V^{-1} with the Monte Carlo part of B replaced by its first-order
    /// generator expansion, which is proportional to dt.
    DeltaExpansion,
    /// A constant weight matrix supplied by the caller.
    Fixed,
};

/// Martingale estimating function for an OU base mapped onto a normal mixture,
/// built from the base eigenfunctions g_j = He_j (Hermite polynomials,
/// eigenvalues j nu). theta follows parameters.hpp.
struct EstimatingFunctionSpec {
    /// Number of eigenfunctions k.
    std::size_t eigenfunctions = 2;
    /// Mixture components of the target.
    std::size_t components = 2;
    WeightMode weights = WeightMode::OptimalSimulated;
    /// Monte Carlo size for conditional expectations (rounded up to even; the
    /// draws are used in antithetic pairs). At least 1000 for OptimalSimulated.
    std::size_t monte_carlo = 2000;
    /// Seed of the common random numbers reused for every point and theta.
    std::uint64_t seed = 7;
    /// When false the target is held at the supplied values and only nu is
    /// estimated; the estimating function then has one row.
    bool estimate_target = true;
    /// Rows-by-k matrix used in Fixed mode.
    Eigen::MatrixXd fixed_weights;
    /// Use the interpolated transform inside Monte Carlo loops.
    bool accelerate = true;
    /// Finite-difference step in base coordinates for the generator expansion.
    double fd_step = 1e-3;
};

/// Number of estimated parameters: 1 + 3m - 1 = 3m, or 1 with a fixed target.
std::size_t estimated_size(const EstimatingFunctionSpec& spec);

/// Throws std::invalid_argument when the spec is inconsistent.
void validate(const EstimatingFunctionSpec& spec);

/// Probabilists' Hermite polynomial He_j(x).
double hermite(std::size_t j, double x);

/// V(y): k x k conditional covariance of h_j = g_j(X_dt) - e^{-j nu dt} g_j(x)
/// given x = tau^{-1}(y), from Gaussian moments.
Eigen::MatrixXd conditional_covariance(const EstimatingFunctionSpec& spec, const Eigen::VectorXd& theta,
                                       double y, double dt);

/// B(y) = E[d h / d theta | y], rows = estimated parameters, columns = k. The nu
/// row is exact; the target rows use Monte Carlo (OptimalSimulated and Fixed)
/// or the generator expansion (DeltaExpansion).
Eigen::MatrixXd sensitivity(const EstimatingFunctionSpec& spec, const Eigen::VectorXd& theta, double y,
                            double dt);

/// Monte Carlo part of B: E[g_j'(X_dt) d tau^{-1}(Y_dt)/d psi | y] - e^{-j nu dt} g_j'(x) d tau^{-1}(y)/d psi.
/// Columns = k, rows = target parameters.
Eigen::MatrixXd target_sensitivity_simulated(const EstimatingFunctionSpec& spec,
                                             const Eigen::VectorXd& theta, double y, double dt);
/// dt (L u + j nu u)(y) with u = g_j'(tau^{-1} y) d tau^{-1}(y)/d psi.
Eigen::MatrixXd target_sensitivity_expansion(const EstimatingFunctionSpec& spec,
                                             const Eigen::VectorXd& theta, double y, double dt);

/// w*(y) = B V^{-1} with Monte Carlo B. Throws SingularMatrixError when V is
/// not invertible.
Eigen::MatrixXd optimal_weights(const EstimatingFunctionSpec& spec, const Eigen::VectorXd& theta, double y,
                                double dt);
/// B V^{-1} with the expansion in place of the Monte Carlo part.
Eigen::MatrixXd delta_expansion_weights(const EstimatingFunctionSpec& spec, const Eigen::VectorXd& theta,
                                        double y, double dt);
/// Weights according to spec.weights.
Eigen::MatrixXd weights(const EstimatingFunctionSpec& spec, const Eigen::VectorXd& theta, double y,
                        double dt);

/// Eigenfunction increments h(y_{i-1}, y_i) for i = 1..n-1, one row per
/// transition.
Eigen::MatrixXd increments(const EstimatingFunctionSpec& spec, const Eigen::VectorXd& theta,
                           const Path& path);

/// G_N(theta) = sum_i w(y_{i-1}; theta) h(y_{i-1}, y_i; theta). Errors raised at
/// a point carry the observation index.
Eigen::VectorXd gn(const EstimatingFunctionSpec& spec, const Eigen::VectorXd& theta, const Path& path);

/// Per-transition terms w(y_{i-1}) h_i, one row per transition.
Eigen::MatrixXd gn_terms(const EstimatingFunctionSpec& spec, const Eigen::VectorXd& theta,
                         const Path& path);

/// Observed Godambe information (1/N) sum B V^{-1} B^T at theta. In Fixed mode
/// the sandwich S^T Sigma^{-1} S with S = (1/N) sum w B^T and
/// Sigma = (1/N) sum w V w^T is returned instead; it reduces to the former for
/// optimal weights.
Eigen::MatrixXd godambe_information(const EstimatingFunctionSpec& spec, const Eigen::VectorXd& theta,
                                    const Path& path);

struct MefOptions {
    /// Weight refreshes: the weights are frozen at the current estimate, the
    /// estimating equation is solved, and the weights are recomputed there.
    int max_outer_iterations = 25;
    double outer_tolerance = 1e-9;
    int max_inner_iterations = 500;
};

/// Root of G_N. With estimate_target false, theta_init supplies the fixed
/// target. Standard errors come from the Godambe information. The objective
/// field holds ||G_N(theta_hat)|| / N with weights evaluated at theta_hat.
FitResult solve_mef(const EstimatingFunctionSpec& spec, const Path& path, const Eigen::VectorXd& theta_init,
                    const MefOptions& options = {});

}  // namespace mmdiff
