#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <string>
#include <vector>

namespace mmdiff {

/// Outcome of an estimation routine. theta follows the layout of
/// parameters.hpp (nu first, then the mixture parameters).
struct FitResult {
    std::string method;
    std::vector<std::string> names;
    Eigen::VectorXd theta;
    /// Square roots of the covariance diagonal; NaN when the information
    /// matrix could not be inverted.
    Eigen::VectorXd std_errors;
    Eigen::MatrixXd covariance;
    /// Log-likelihood for likelihood fits, norm of the estimating function for
    /// estimating-function fits.
    double objective = 0.0;
    int iterations = 0;
    bool converged = false;
    std::string message;
    double dt = 1.0;
    std::size_t observations = 0;
    /// Objective reached from each start of a multi-start search.
    std::vector<double> start_objectives;
};

}  // namespace mmdiff
