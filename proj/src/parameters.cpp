#include "mmdiff/parameters.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace mmdiff {

std::size_t theta_size(std::size_t components) { return 3 * components; }

Eigen::VectorXd to_theta(double nu, const NormalMixture& target) {
    Eigen::VectorXd psi = target.parameters();
    Eigen::VectorXd theta(psi.size() + 1);
    theta[0] = nu;
    theta.tail(psi.size()) = psi;
    return theta;
}

OuMixtureParams from_theta(const Eigen::VectorXd& theta, std::size_t components) {
    if (static_cast<std::size_t>(theta.size()) != theta_size(components)) {
        throw std::invalid_argument("from_theta: wrong parameter count");
    }
    if (!(theta[0] > 0.0) || !std::isfinite(theta[0])) {
        throw std::invalid_argument("from_theta: nu must be positive");
    }
    Eigen::VectorXd psi = theta.tail(theta.size() - 1);
    return {theta[0], NormalMixture::from_parameters({psi.data(), static_cast<std::size_t>(psi.size())},
                                                     components)};
}

std::vector<std::string> theta_names(std::size_t components) {
    std::vector<std::string> names{"nu"};
    if (components == 2) {
        names.emplace_back("alpha");
    } else {
        for (std::size_t i = 1; i < components; ++i) names.push_back("w" + std::to_string(i));
    }
    for (std::size_t i = 1; i <= components; ++i) {
        names.push_back("mu" + std::to_string(i));
        names.push_back("sigma" + std::to_string(i));
    }
    return names;
}

Eigen::VectorXd to_unconstrained(const Eigen::VectorXd& theta, std::size_t k) {
    Eigen::VectorXd eta = theta;
    eta[0] = std::log(theta[0]);
    double last = 1.0;
    for (std::size_t i = 0; i + 1 < k; ++i) last -= theta[1 + static_cast<Eigen::Index>(i)];
    for (std::size_t i = 0; i + 1 < k; ++i) {
        auto j = static_cast<Eigen::Index>(1 + i);
        eta[j] = std::log(theta[j] / last);
    }
    for (std::size_t i = 0; i < k; ++i) {
        auto s = static_cast<Eigen::Index>(k + 1 + 2 * i);
        eta[s] = std::log(theta[s]);
    }
    return eta;
}

Eigen::VectorXd from_unconstrained(const Eigen::VectorXd& eta, std::size_t k) {
    Eigen::VectorXd theta = eta;
    theta[0] = std::exp(eta[0]);
    // softmax against an implicit zero for the last component
    double top = 0.0;
    for (std::size_t i = 0; i + 1 < k; ++i) top = std::max(top, eta[1 + static_cast<Eigen::Index>(i)]);
    double denom = std::exp(-top);
    for (std::size_t i = 0; i + 1 < k; ++i) denom += std::exp(eta[1 + static_cast<Eigen::Index>(i)] - top);
    for (std::size_t i = 0; i + 1 < k; ++i) {
        auto j = static_cast<Eigen::Index>(1 + i);
        theta[j] = std::exp(eta[j] - top) / denom;
    }
    for (std::size_t i = 0; i < k; ++i) {
        auto s = static_cast<Eigen::Index>(k + 1 + 2 * i);
        theta[s] = std::exp(eta[s]);
    }
    return theta;
}

Eigen::MatrixXd theta_jacobian(const Eigen::VectorXd& eta, std::size_t k) {
    Eigen::VectorXd theta = from_unconstrained(eta, k);
    const Eigen::Index n = theta.size();
    Eigen::MatrixXd jac = Eigen::MatrixXd::Identity(n, n);
    jac(0, 0) = theta[0];
    for (std::size_t i = 0; i + 1 < k; ++i) {
        auto a = static_cast<Eigen::Index>(1 + i);
        for (std::size_t m = 0; m + 1 < k; ++m) {
            auto b = static_cast<Eigen::Index>(1 + m);
            jac(a, b) = theta[a] * ((a == b ? 1.0 : 0.0) - theta[b]);
        }
    }
    for (std::size_t i = 0; i < k; ++i) {
        auto s = static_cast<Eigen::Index>(k + 1 + 2 * i);
        jac(s, s) = theta[s];
    }
    return jac;
}

bool sort_components(Eigen::VectorXd& theta, Eigen::MatrixXd* covariance, std::size_t k) {
    const Eigen::Index n = theta.size();
    std::vector<std::size_t> order(k);
    std::iota(order.begin(), order.end(), 0);
    auto mean_of = [&](std::size_t c) { return theta[static_cast<Eigen::Index>(k + 2 * c)]; };
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return mean_of(a) < mean_of(b); });
    bool changed = false;
    for (std::size_t i = 0; i < k; ++i) changed |= order[i] != i;
    if (!changed) return false;

    // new theta = A theta + c; the last weight is 1 - sum of the free ones
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
    Eigen::VectorXd c = Eigen::VectorXd::Zero(n);
    a(0, 0) = 1.0;
    for (std::size_t i = 0; i + 1 < k; ++i) {
        auto row = static_cast<Eigen::Index>(1 + i);
        std::size_t src = order[i];
        if (src + 1 < k) {
            a(row, static_cast<Eigen::Index>(1 + src)) = 1.0;
        } else {
            c[row] = 1.0;
            for (std::size_t m = 0; m + 1 < k; ++m) a(row, static_cast<Eigen::Index>(1 + m)) = -1.0;
        }
    }
    for (std::size_t i = 0; i < k; ++i) {
        auto dst = static_cast<Eigen::Index>(k + 2 * i);
        auto src = static_cast<Eigen::Index>(k + 2 * order[i]);
        a(dst, src) = 1.0;
        a(dst + 1, src + 1) = 1.0;
    }
    theta = a * theta + c;
    if (covariance != nullptr && covariance->size() > 0) *covariance = a * (*covariance) * a.transpose();
    return true;
}

}  // namespace mmdiff
