#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <random>
#include <span>
#include <vector>

namespace mmdiff {

struct NormalComponent {
    double weight;
    double mean;
    double sd;
};

/// Finite mixture of normal densities, f = sum_i w_i * phi(y; mu_i, sd_i^2).
///
/// The parameter vector used for gradients and fitting is
/// (w_1, ..., w_{k-1}, mu_1, sd_1, ..., mu_k, sd_k); the last weight is implied.
/// For two components this is (alpha, mu1, sigma1, mu2, sigma2).
class NormalMixture {
public:
    /// Throws std::invalid_argument unless weights lie in (0, 1) and sum to one
    /// (tolerance 1e-12) and every sd is positive and finite.
    explicit NormalMixture(std::vector<NormalComponent> components);

    static NormalMixture bimodal(double alpha, double mu1, double sigma1, double mu2,
                                 double sigma2);
    static NormalMixture standard_normal();

    /// Inverse of parameters(); `components` is k.
    static NormalMixture from_parameters(std::span<const double> params, std::size_t components);

    std::span<const NormalComponent> components() const { return components_; }
    std::size_t size() const { return components_.size(); }
    std::size_t parameter_count() const { return 3 * components_.size() - 1; }
    Eigen::VectorXd parameters() const;

    double pdf(double y) const;
    double log_pdf(double y) const;
    /// f'(y).
    double pdf_derivative(double y) const;
    double cdf(double y) const;
    /// 1 - F(y), computed without cancellation in the upper tail.
    double sf(double y) const;

    /// F^{-1}(p) for p in (0, 1), by safeguarded Newton on the cdf bracketed by the
    /// component quantiles. Upper-half probabilities are solved on the survival
    /// function.
    double quantile(double p) const;
    /// y with sf(y) = q.
    double quantile_upper(double q) const;

    /// d F(y) / d params, in parameters() order.
    Eigen::VectorXd grad_cdf_params(double y) const;
    /// d f(y) / d params, in parameters() order.
    Eigen::VectorXd grad_pdf_params(double y) const;

    /// k-th raw moment E[Y^k], k >= 1.
    double raw_moment(int k) const;
    double mean() const;
    double variance() const;

    /// Local maxima of the density, ascending. Grid scan of 10^4 points over
    /// mean +- 8 sd, refined by bisection on f'.
    std::vector<double> modes() const;
    /// Component locations sorted ascending.
    std::vector<double> component_means() const;

    template <class Rng>
    double sample(Rng& rng) const {
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        double u = unif(rng);
        std::size_t i = 0;
        for (; i + 1 < components_.size(); ++i) {
            if (u < components_[i].weight) break;
            u -= components_[i].weight;
        }
        std::normal_distribution<double> norm(components_[i].mean, components_[i].sd);
        return norm(rng);
    }

    /// Same mixture with components reordered by ascending mean.
    NormalMixture sorted_by_mean() const;
    /// Same mixture with every location shifted by c.
    NormalMixture shifted(double c) const;

private:
    double solve_lower(double p) const;
    double solve_upper(double q) const;

    std::vector<NormalComponent> components_;
};

}  // namespace mmdiff
