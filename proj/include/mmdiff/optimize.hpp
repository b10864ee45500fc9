#pragma once

// Thin wrappers over the GSL multidimensional minimisers, root finders and
// nonlinear least squares, taking Eigen vectors and std::function callbacks.

#include <Eigen/Core>

#include <functional>
#include <string>

namespace mmdiff::optim {

struct Result {
    Eigen::VectorXd x;
    /// Objective value (minimise), residual norm (roots) or half sum of squares
    /// (least squares) at x.
    double value = 0.0;
    int iterations = 0;
    bool converged = false;
    std::string message;
};

using Objective = std::function<double(const Eigen::VectorXd&)>;
/// Returns f(x) and writes the gradient into the second argument.
using ObjectiveWithGradient = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>;
using VectorFunction = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

struct BfgsOptions {
    int max_iterations = 500;
    double gradient_tolerance = 1e-6;
    double initial_step = 0.05;
    double line_tolerance = 0.1;
};

/// Minimises with GSL's vector_bfgs2. Converged when ||grad||_2 < gradient_tolerance.
Result minimize_bfgs(const ObjectiveWithGradient& fg, const Eigen::VectorXd& x0,
                     const BfgsOptions& options = {});

struct SimplexOptions {
    int max_iterations = 5000;
    double size_tolerance = 1e-8;
    double initial_step = 0.1;
};

/// Nelder-Mead (GSL nmsimplex2).
Result minimize_simplex(const Objective& f, const Eigen::VectorXd& x0,
                        const SimplexOptions& options = {});

struct RootOptions {
    int max_iterations = 200;
    double residual_tolerance = 1e-10;
};

/// Powell hybrid method with finite-difference Jacobian (GSL hybrids).
Result solve_root(const VectorFunction& f, const Eigen::VectorXd& x0,
                  const RootOptions& options = {});

struct LeastSquaresOptions {
    int max_iterations = 200;
    double x_tolerance = 1e-10;
    double g_tolerance = 1e-12;
    double f_tolerance = 0.0;
};

struct LeastSquaresResult : Result {
    /// Jacobian of the residuals at the solution (m x p).
    Eigen::MatrixXd jacobian;
};

/// Levenberg-Marquardt trust region (GSL multifit_nlinear) on residuals r(x).
LeastSquaresResult least_squares(const VectorFunction& residuals, const Eigen::VectorXd& x0,
                                 std::size_t residual_count,
                                 const LeastSquaresOptions& options = {});

/// Central-difference gradient of f with per-coordinate step h.
Eigen::VectorXd numeric_gradient(const Objective& f, const Eigen::VectorXd& x, double h);
/// Central-difference Jacobian of a vector function.
Eigen::MatrixXd numeric_jacobian(const VectorFunction& f, const Eigen::VectorXd& x, double h);

}  // namespace mmdiff::optim
