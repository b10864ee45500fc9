#pragma once

#include "mmdiff/mixture.hpp"

#include <Eigen/Core>

#include <cstddef>
#include <string>
#include <vector>

namespace mmdiff {

/// theta = (nu, w_1..w_{k-1}, mu_1, sigma_1, ..., mu_k, sigma_k) for an OU base
/// with rate nu and a k-component normal mixture target. For k = 2 this is
/// (nu, alpha, mu1, sigma1, mu2, sigma2).
struct OuMixtureParams {
    double nu;
    NormalMixture target;
};

std::size_t theta_size(std::size_t components);
Eigen::VectorXd to_theta(double nu, const NormalMixture& target);
/// Throws std::invalid_argument for inadmissible values.
OuMixtureParams from_theta(const Eigen::VectorXd& theta, std::size_t components);
std::vector<std::string> theta_names(std::size_t components);

/// Unconstrained coordinates eta: log nu, additive log-ratios of the weights
/// (logit alpha for k = 2), means unchanged, log sigmas.
Eigen::VectorXd to_unconstrained(const Eigen::VectorXd& theta, std::size_t components);
Eigen::VectorXd from_unconstrained(const Eigen::VectorXd& eta, std::size_t components);
/// d theta / d eta evaluated at eta.
Eigen::MatrixXd theta_jacobian(const Eigen::VectorXd& eta, std::size_t components);

/// Relabels components so that means increase, permuting a covariance matrix
/// in theta coordinates alongside. Returns true when the order changed.
bool sort_components(Eigen::VectorXd& theta, Eigen::MatrixXd* covariance, std::size_t components);

}  // namespace mmdiff
