#pragma once

#include "mmdiff/fit_result.hpp"
#include "mmdiff/mixture.hpp"
#include "mmdiff/random.hpp"
#include "mmdiff/simulate.hpp"

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mmdiff {

/// Z = Y + eps: Y a transformed OU process (rate nu, marginal `target`) and eps
/// an independent OU error dEps = -kappa Eps dt + sqrt(2 kappa gamma2) dW.
struct ErrorModelParams {
    double nu;
    NormalMixture target;
    double kappa;
    double gamma2;
};

/// Throws std::invalid_argument unless nu > 0, kappa > 0 and gamma2 >= 0.
void validate(const ErrorModelParams& p);

/// The marginal law of Z: the target with every variance inflated by gamma2.
NormalMixture marginal_z_mixture(const NormalMixture& target, double gamma2);
double marginal_z_pdf(const ErrorModelParams& p, double z);
/// Var(Z) = Var(Y) + gamma2.
double marginal_z_variance(const ErrorModelParams& p);

/// beta = gamma2 / Var(Z), the share of the observed variance due to the error.
double beta_fraction(const ErrorModelParams& p);

/// rho_Z(t) = (1 - beta) rho_Y(t) + beta exp(-kappa t).
double rho_z(double beta, double kappa, double t, double rho_y);

/// Exact autocorrelation of Y = tau(X) for an OU base. With orthonormal
/// Hermite polynomials h_k and a_k = E[tau(X) h_k(X)],
/// rho_Y(t) = sum_{k >= 1} a_k^2 r^k / Var(Y) with r = exp(-nu t). The
/// coefficients depend only on the target, so one table serves every nu.
class HermiteAutocorrelation {
public:
    /// Terms are added until the unexplained variance falls below
    /// 1e-12 Var(Y) or `max_terms` is reached. The remainder is carried by a
    /// tail term r^{K+1} (Var - sum a_k^2).
    explicit HermiteAutocorrelation(const NormalMixture& target, std::size_t max_terms = 4000);

    /// Correlation at r = exp(-nu t), r in [0, 1].
    double operator()(double r) const;
    double at(double nu, double t) const { return (*this)(std::exp(-nu * t)); }
    /// d rho / d r.
    double derivative(double r) const;

    std::size_t terms() const { return squares_.size(); }
    /// Var(Y) - sum a_k^2 relative to Var(Y).
    double relative_remainder() const { return remainder_ / variance_; }

private:
    std::vector<double> squares_;  // a_k^2 for k = 1..K
    double variance_ = 0.0;
    double remainder_ = 0.0;
};

struct RhoYTable {
    std::vector<double> lags;  ///< in steps
    std::vector<double> rho;
    std::vector<double> se;    ///< delete-block jackknife over 20 blocks
};

/// Empirical autocorrelation of one exact stationary transformed-OU path of
/// length n_sim at spacing dt. Requires every lag <= n_sim / 10.
RhoYTable simulate_rho_y(const TransformedDiffusion& model, std::span<const std::size_t> lags,
                         std::size_t n_sim, double dt, Rng& rng);

/// Result of the marginal pseudo-likelihood stage: the data are treated as iid
/// draws from the inflated mixture.
struct MarginalFit {
    /// Components ordered by mean; variances are sigma_i^2 + gamma2.
    NormalMixture inflated = NormalMixture::standard_normal();
    /// Two components: (alpha, mu1, mu2, s1^2, s2^2). General k:
    /// (w_1..w_{k-1}, mu_1..mu_k, s_1^2..s_k^2).
    std::vector<std::string> names;
    Eigen::VectorXd estimates;
    /// Sandwich H^{-1} S H^{-1} / n. S is the long-run covariance of the
    /// per-observation scores by overlapping batch means (equivalent to a
    /// Bartlett window of the same width), so serial dependence is accounted for.
    Eigen::MatrixXd covariance;
    Eigen::VectorXd std_errors;
    /// Batch length: twice the first lag at which |acf(z)| < 0.05, at least
    /// 4 (n/100)^{2/9} and at most n/4.
    std::size_t bandwidth = 0;
    double loglik = 0.0;
    int iterations = 0;
    bool converged = false;
    /// A component weight or variance collapsed.
    bool degenerate = false;
    double variance() const { return inflated.variance(); }
};

/// Requires at least 500 observations.
MarginalFit fit_marginal(const Path& z, std::size_t components = 2);

enum class RhoYMethod {
    /// HermiteAutocorrelation, recomputed for the latent target implied by beta.
    Exact,
    /// Simulated tables on a log-nu grid with monotone interpolation per lag;
    /// the latent target is held at the starting value of beta.
    Simulated,
};

struct AcfFitOptions {
    /// Lags 1..L enter the least squares; at least 20.
    std::size_t lags = 100;
    RhoYMethod method = RhoYMethod::Exact;
    /// Simulated method: path length and log-nu grid.
    std::size_t simulation_length = 1000000;
    std::size_t grid_nodes = 21;
    double grid_half_width = 3.0;
    std::uint64_t seed = 20240611;
    /// Minimum profiled change of the sum of squares when beta moves by 0.05;
    /// below it beta is flagged as weakly identified.
    double curvature_threshold = 1e-4;
    /// Starting point (nu, kappa, beta) replacing the two heuristic starts.
    std::optional<std::array<double, 3>> start;
};

struct AcfFit {
    double nu = 0.0;
    double kappa = 0.0;
    double beta = 0.0;
    double gamma2 = 0.0;
    /// Latent target: inflated variances minus gamma2.
    NormalMixture latent = NormalMixture::standard_normal();
    double sum_of_squares = 0.0;
    int iterations = 0;
    bool converged = false;
    /// Profiled sum-of-squares change for a beta step of 0.05.
    double beta_curvature = 0.0;
    bool weakly_identified = false;
    std::vector<double> empirical;  ///< lags 0..L
    std::vector<double> fitted;     ///< lags 0..L
    std::vector<double> fitted_y;   ///< rho_Y at lags 0..L
};

/// Least squares fit of rho_Z to empirical autocorrelations at lags 1..L
/// (`empirical` holds lags 0..L, biased normalization). gamma2 = beta Var(Z)
/// is kept below the smallest inflated variance.
AcfFit fit_acf(std::span<const double> empirical, double dt, const MarginalFit& marginal,
               const AcfFitOptions& options = {});
/// Same, from the observed path.
AcfFit fit_acf(const Path& z, const MarginalFit& marginal, const AcfFitOptions& options = {});

struct ErrorFitOptions {
    std::size_t components = 2;
    AcfFitOptions acf;
    /// Parametric bootstrap replicates for the standard errors; 0 skips them.
    std::size_t bootstrap = 50;
    std::uint64_t seed = 20240611;
};

struct ErrorModelFit {
    MarginalFit marginal;
    AcfFit acf;
    /// theta = (nu, weights, mu_1, sigma_1, ..., kappa, gamma2) with bootstrap
    /// standard errors and covariance.
    FitResult result;
    std::size_t bootstrap_failures = 0;
};

/// Marginal stage, then the autocorrelation stage, then a parametric bootstrap
/// that simulates from the fitted model and repeats both stages.
ErrorModelFit fit_error_model(const Path& z, const ErrorFitOptions& options = {});

/// Parameter names of the error model for k components.
std::vector<std::string> error_model_names(std::size_t components);

}  // namespace mmdiff
