#include "mmdiff/errorfit.hpp"

#include "mmdiff/error.hpp"
#include "mmdiff/mixture_fit.hpp"
#include "mmdiff/normal.hpp"
#include "mmdiff/optimize.hpp"
#include "mmdiff/parameters.hpp"
#include "mmdiff/stats.hpp"
#include "mmdiff/transform.hpp"

#include <Eigen/Dense>
#include <math.h>  // boost 1.74 pchip calls isnan unqualified
#include <boost/math/interpolators/pchip.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <stdexcept>

namespace mmdiff {

void validate(const ErrorModelParams& p) {
    if (!(p.nu > 0.0) || !std::isfinite(p.nu)) throw std::invalid_argument("error model: nu must be positive");
    if (!(p.kappa > 0.0) || !std::isfinite(p.kappa)) {
        throw std::invalid_argument("error model: kappa must be positive");
    }
    if (!(p.gamma2 >= 0.0) || !std::isfinite(p.gamma2)) {
        throw std::invalid_argument("error model: gamma2 must be non-negative");
    }
}

NormalMixture marginal_z_mixture(const NormalMixture& target, double gamma2) {
    if (!(gamma2 >= 0.0)) throw std::invalid_argument("marginal_z_mixture: gamma2 must be non-negative");
    std::vector<NormalComponent> comps(target.components().begin(), target.components().end());
    for (auto& c : comps) c.sd = std::sqrt(c.sd * c.sd + gamma2);
    return NormalMixture(std::move(comps));
}

double marginal_z_pdf(const ErrorModelParams& p, double z) {
    validate(p);
    return marginal_z_mixture(p.target, p.gamma2).pdf(z);
}

double marginal_z_variance(const ErrorModelParams& p) {
    validate(p);
    return p.target.variance() + p.gamma2;
}

double beta_fraction(const ErrorModelParams& p) {
    if (std::isinf(p.gamma2)) return 1.0;
    return p.gamma2 / marginal_z_variance(p);
}

double rho_z(double beta, double kappa, double t, double rho_y) {
    return (1.0 - beta) * rho_y + beta * std::exp(-kappa * t);
}

// ---------------------------------------------------------------------------

HermiteAutocorrelation::HermiteAutocorrelation(const NormalMixture& target, std::size_t max_terms) {
    constexpr double kHalfWidth = 12.0;
    constexpr double kStep = 0.005;
    const auto points = static_cast<std::size_t>(std::lround(2.0 * kHalfWidth / kStep)) + 1;
    const double mean = target.mean();
    variance_ = target.variance();

    // w(x) = (tau(x) - mean) sqrt(phi(x)) dx; psi_k = h_k sqrt(phi) stays bounded
    std::vector<double> x(points), w(points), prev(points), cur(points);
    const double root_norm = std::pow(2.0 * M_PI, -0.25);
    for (std::size_t i = 0; i < points; ++i) {
        x[i] = -kHalfWidth + kStep * static_cast<double>(i);
        double y = x[i] < 0.0 ? target.quantile(normal_cdf(x[i])) : target.quantile_upper(normal_sf(x[i]));
        double root_phi = root_norm * std::exp(-0.25 * x[i] * x[i]);
        w[i] = (y - mean) * root_phi * kStep;
        prev[i] = root_phi;         // psi_0
        cur[i] = x[i] * root_phi;   // psi_1
    }
    double explained = 0.0;
    for (std::size_t k = 1; k <= max_terms; ++k) {
        double a = 0.0;
        for (std::size_t i = 0; i < points; ++i) a += w[i] * cur[i];
        squares_.push_back(a * a);
        explained += a * a;
        if (variance_ - explained < 1e-12 * variance_) break;
        // psi_{k+1} = (x psi_k - sqrt(k) psi_{k-1}) / sqrt(k+1)
        const double sk = std::sqrt(static_cast<double>(k));
        const double sk1 = 1.0 / std::sqrt(static_cast<double>(k + 1));
        for (std::size_t i = 0; i < points; ++i) {
            double next = (x[i] * cur[i] - sk * prev[i]) * sk1;
            prev[i] = cur[i];
            cur[i] = next;
        }
    }
    remainder_ = std::max(variance_ - explained, 0.0);
}

double HermiteAutocorrelation::operator()(double r) const {
    if (!(r >= 0.0 && r <= 1.0)) throw std::invalid_argument("HermiteAutocorrelation: r must lie in [0, 1]");
    double s = remainder_ * r;
    for (std::size_t k = squares_.size(); k-- > 0;) s = (s + squares_[k]) * r;
    return s / variance_;
}

double HermiteAutocorrelation::derivative(double r) const {
    const auto K = static_cast<double>(squares_.size());
    double s = remainder_ * (K + 1.0);
    for (std::size_t k = squares_.size(); k-- > 0;) {
        s = s * r + static_cast<double>(k + 1) * squares_[k];
    }
    return s / variance_;
}

// ---------------------------------------------------------------------------

RhoYTable simulate_rho_y(const TransformedDiffusion& model, std::span<const std::size_t> lags,
                         std::size_t n_sim, double dt, Rng& rng) {
    for (std::size_t l : lags) {
        if (l > n_sim / 10) throw std::invalid_argument("simulate_rho_y: lags must not exceed n_sim / 10");
    }
    Path y = simulate_transformed_ou(model, n_sim, dt, StationaryStart{}, rng);
    AutocorrelationEstimate est = autocorrelation_with_se(y.values, lags, 20);
    RhoYTable out;
    for (std::size_t l : lags) out.lags.push_back(static_cast<double>(l));
    out.rho = std::move(est.rho);
    out.se = std::move(est.se);
    return out;
}

// ---------------------------------------------------------------------------

namespace {

// Marginal estimates in (w_1..w_{k-1}, mu_1..mu_k, s_1^2..s_k^2) order.
Eigen::VectorXd marginal_vector(const NormalMixture& m) {
    const std::size_t k = m.size();
    Eigen::VectorXd v(static_cast<Eigen::Index>(3 * k - 1));
    auto comps = m.components();
    for (std::size_t j = 0; j + 1 < k; ++j) v[static_cast<Eigen::Index>(j)] = comps[j].weight;
    for (std::size_t j = 0; j < k; ++j) {
        v[static_cast<Eigen::Index>(k - 1 + j)] = comps[j].mean;
        v[static_cast<Eigen::Index>(2 * k - 1 + j)] = comps[j].sd * comps[j].sd;
    }
    return v;
}

NormalMixture marginal_mixture(const Eigen::VectorXd& v, std::size_t k) {
    std::vector<NormalComponent> comps(k);
    double rest = 1.0;
    for (std::size_t j = 0; j < k; ++j) {
        double w = j + 1 < k ? v[static_cast<Eigen::Index>(j)] : rest;
        rest -= j + 1 < k ? w : 0.0;
        double var = v[static_cast<Eigen::Index>(2 * k - 1 + j)];
        if (!(var > 0.0)) throw std::invalid_argument("marginal: variance must be positive");
        comps[j] = {w, v[static_cast<Eigen::Index>(k - 1 + j)], std::sqrt(var)};
    }
    return NormalMixture(std::move(comps));
}

// Per-observation score of log f in marginal_vector coordinates.
Eigen::VectorXd marginal_score(const NormalMixture& m, double z) {
    const std::size_t k = m.size();
    const Eigen::VectorXd g = m.grad_pdf_params(z) / m.pdf(z);  // (w.., mu1, sd1, mu2, sd2, ..)
    Eigen::VectorXd s(g.size());
    auto comps = m.components();
    for (std::size_t j = 0; j + 1 < k; ++j) s[static_cast<Eigen::Index>(j)] = g[static_cast<Eigen::Index>(j)];
    for (std::size_t j = 0; j < k; ++j) {
        const auto base = static_cast<Eigen::Index>(k - 1 + 2 * j);
        s[static_cast<Eigen::Index>(k - 1 + j)] = g[base];
        s[static_cast<Eigen::Index>(2 * k - 1 + j)] = g[base + 1] / (2.0 * comps[j].sd);
    }
    return s;
}

std::size_t dependence_window(std::span<const double> z) {
    const std::size_t n = z.size();
    const double mean = sample_mean(z);
    double var = 0.0;
    for (double v : z) var += (v - mean) * (v - mean);
    const std::size_t lo = static_cast<std::size_t>(std::ceil(4.0 * std::pow(static_cast<double>(n) / 100.0, 2.0 / 9.0)));
    const std::size_t hi = std::max<std::size_t>(n / 4, 1);
    std::size_t first = hi;
    if (var > 0.0) {
        for (std::size_t l = 1; l < hi; ++l) {
            double c = 0.0;
            for (std::size_t i = 0; i + l < n; ++i) c += (z[i] - mean) * (z[i + l] - mean);
            if (std::abs(c / var) < 0.05) {
                first = l;
                break;
            }
        }
    }
    return std::clamp(2 * first, lo, hi);
}

std::vector<std::string> marginal_names(std::size_t k) {
    if (k == 2) return {"alpha", "mu1", "mu2", "s1^2", "s2^2"};
    std::vector<std::string> names;
    for (std::size_t j = 1; j < k; ++j) names.push_back("w" + std::to_string(j));
    for (std::size_t j = 1; j <= k; ++j) names.push_back("mu" + std::to_string(j));
    for (std::size_t j = 1; j <= k; ++j) names.push_back("s" + std::to_string(j) + "^2");
    return names;
}

MarginalFit fit_marginal_impl(const Path& z, std::size_t components, bool with_covariance) {
    const std::size_t n = z.size();
    if (n < 500) throw std::invalid_argument("fit_marginal: needs at least 500 observations");
    EmResult em = fit_normal_mixture_em(z.values, EmOptions{components});
    MarginalFit out;
    out.names = marginal_names(components);
    out.degenerate = em.degenerate || !em.mixture;
    out.iterations = em.iterations;
    out.converged = em.converged;
    if (!em.mixture) {
        throw ConvergenceError("fit_marginal: the mixture fit degenerated (a component vanished)");
    }
    out.inflated = em.mixture->sorted_by_mean();
    out.estimates = marginal_vector(out.inflated);
    out.loglik = em.loglik * static_cast<double>(n);
    const auto p = out.estimates.size();
    if (!with_covariance) return out;

    // H = -(1/n) sum d score / d params by central differences of the mean score
    auto mean_score = [&](const Eigen::VectorXd& v) {
        NormalMixture m = marginal_mixture(v, components);
        Eigen::VectorXd s = Eigen::VectorXd::Zero(p);
        for (double y : z.values) s += marginal_score(m, y);
        return Eigen::VectorXd(s / static_cast<double>(n));
    };
    Eigen::MatrixXd H(p, p);
    for (Eigen::Index j = 0; j < p; ++j) {
        double h = 1e-5 * std::max(1.0, std::abs(out.estimates[j]));
        if (j < static_cast<Eigen::Index>(components - 1)) h = 1e-6;
        Eigen::VectorXd up = out.estimates, down = out.estimates;
        up[j] += h;
        down[j] -= h;
        H.col(j) = -(mean_score(up) - mean_score(down)) / (2.0 * h);
    }
    H = 0.5 * (H + H.transpose());

    // overlapping batch means of the scores
    Eigen::MatrixXd scores(static_cast<Eigen::Index>(n), p);
    for (std::size_t i = 0; i < n; ++i) scores.row(static_cast<Eigen::Index>(i)) = marginal_score(out.inflated, z.values[i]).transpose();
    const Eigen::RowVectorXd center = scores.colwise().mean();
    const std::size_t b = dependence_window(z.values);
    out.bandwidth = b;
    Eigen::RowVectorXd window = Eigen::RowVectorXd::Zero(p);
    for (std::size_t i = 0; i < b; ++i) window += scores.row(static_cast<Eigen::Index>(i)) - center;
    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(p, p);
    for (std::size_t start = 0;; ++start) {
        Eigen::RowVectorXd m = window / static_cast<double>(b);
        S += m.transpose() * m;
        if (start + b >= n) break;
        window += scores.row(static_cast<Eigen::Index>(start + b)) - scores.row(static_cast<Eigen::Index>(start));
    }
    const double nd = static_cast<double>(n);
    const double bd = static_cast<double>(b);
    S *= nd * bd / ((nd - bd) * (nd - bd + 1.0));

    Eigen::FullPivLU<Eigen::MatrixXd> lu(H);
    if (!lu.isInvertible()) {
        out.covariance = Eigen::MatrixXd::Constant(p, p, std::numeric_limits<double>::quiet_NaN());
    } else {
        Eigen::MatrixXd Hinv = lu.inverse();
        out.covariance = Hinv * S * Hinv.transpose() / nd;
    }
    out.std_errors = out.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
    return out;
}

}  // namespace

MarginalFit fit_marginal(const Path& z, std::size_t components) {
    return fit_marginal_impl(z, components, true);
}

// ---------------------------------------------------------------------------

namespace {

double logistic(double u) { return 1.0 / (1.0 + std::exp(-u)); }

NormalMixture latent_target(const NormalMixture& inflated, double gamma2) {
    std::vector<NormalComponent> comps(inflated.components().begin(), inflated.components().end());
    for (auto& c : comps) {
        double var = c.sd * c.sd - gamma2;
        if (!(var > 0.0)) throw std::invalid_argument("latent_target: gamma2 exceeds an inflated variance");
        c.sd = std::sqrt(var);
    }
    return NormalMixture(std::move(comps));
}

// rho_Y at lags 1..L as a function of (nu, beta).
class RhoYModel {
public:
    RhoYModel(const NormalMixture& inflated, double var_z, double beta_max, double dt, std::size_t lags,
              const AcfFitOptions& options, double beta0, double nu0)
        : inflated_(inflated), var_z_(var_z), beta_max_(beta_max), dt_(dt), lags_(lags),
          method_(options.method) {
        if (method_ == RhoYMethod::Simulated) build_grid(options, beta0, nu0);
    }

    std::vector<double> operator()(double nu, double beta) {
        std::vector<double> out(lags_ + 1, 1.0);
        if (method_ == RhoYMethod::Exact) {
            // quadratic interpolation in beta between three exact tables
            recentre(beta);
            const double s = (beta - center_) / step_;
            const double wm = 0.5 * s * (s - 1.0);
            const double w0 = 1.0 - s * s;
            const double wp = 0.5 * s * (s + 1.0);
            for (std::size_t j = 1; j <= lags_; ++j) {
                const double r = std::exp(-nu * dt_ * static_cast<double>(j));
                out[j] = wm * (*nodes_[0])(r) + w0 * (*nodes_[1])(r) + wp * (*nodes_[2])(r);
            }
        } else {
            double u = std::clamp(std::log(nu), grid_lo_, grid_hi_);
            for (std::size_t j = 1; j <= lags_; ++j) out[j] = (*grid_[j - 1])(u);
        }
        return out;
    }

    /// rho_Y at lags 0..L from a table built exactly at beta.
    std::vector<double> exact(double nu, double beta) const {
        HermiteAutocorrelation h(latent_target(inflated_, beta * var_z_));
        std::vector<double> out(lags_ + 1, 1.0);
        for (std::size_t j = 1; j <= lags_; ++j) out[j] = h.at(nu, dt_ * static_cast<double>(j));
        return out;
    }

private:
    void recentre(double beta) {
        if (!nodes_.empty() && std::abs(beta - center_) <= 2.0 * step_) return;
        step_ = 0.01 * beta_max_;
        // keep all three nodes inside (0, beta_max)
        center_ = std::clamp(beta, step_ * 1.01, beta_max_ - step_ * 1.01);
        nodes_.clear();
        for (int i = -1; i <= 1; ++i) {
            double b = center_ + step_ * i;
            nodes_.push_back(std::make_unique<HermiteAutocorrelation>(latent_target(inflated_, b * var_z_)));
        }
    }

    void build_grid(const AcfFitOptions& options, double beta0, double nu0) {
        NormalMixture latent = latent_target(inflated_, beta0 * var_z_);
        const std::size_t nodes = std::max<std::size_t>(options.grid_nodes, 4);
        grid_lo_ = std::log(nu0) - options.grid_half_width;
        grid_hi_ = std::log(nu0) + options.grid_half_width;
        std::vector<double> log_nu(nodes);
        std::vector<std::vector<double>> values(lags_, std::vector<double>(nodes));
        std::vector<std::size_t> lag_list(lags_);
        std::iota(lag_list.begin(), lag_list.end(), std::size_t{1});
        for (std::size_t i = 0; i < nodes; ++i) {
            log_nu[i] = grid_lo_ + (grid_hi_ - grid_lo_) * static_cast<double>(i) / static_cast<double>(nodes - 1);
            auto model = TransformedDiffusion::ou(std::exp(log_nu[i]), latent, true);
            Rng rng(options.seed);  // common random numbers across nodes
            RhoYTable t = simulate_rho_y(model, lag_list, options.simulation_length, dt_, rng);
            for (std::size_t j = 0; j < lags_; ++j) values[j][i] = t.rho[j];
        }
        for (std::size_t j = 0; j < lags_; ++j) {
            grid_.push_back(std::make_unique<boost::math::interpolators::pchip<std::vector<double>>>(
                std::vector<double>(log_nu), std::move(values[j])));
        }
    }

    NormalMixture inflated_;
    double var_z_;
    double beta_max_;
    double dt_;
    std::size_t lags_;
    RhoYMethod method_;
    double center_ = 0.0;
    double step_ = 0.0;
    std::vector<std::unique_ptr<HermiteAutocorrelation>> nodes_;
    double grid_lo_ = 0.0;
    double grid_hi_ = 0.0;
    std::vector<std::unique_ptr<boost::math::interpolators::pchip<std::vector<double>>>> grid_;
};

}  // namespace

AcfFit fit_acf(std::span<const double> empirical, double dt, const MarginalFit& marginal,
               const AcfFitOptions& options) {
    if (options.lags < 20) throw std::invalid_argument("fit_acf: at least 20 lags are required");
    if (empirical.size() < options.lags + 1) throw std::invalid_argument("fit_acf: too few empirical lags");
    if (!(dt > 0.0)) throw std::invalid_argument("fit_acf: dt must be positive");
    const std::size_t L = options.lags;
    const NormalMixture& inflated = marginal.inflated;
    const double var_z = inflated.variance();
    double min_var = std::numeric_limits<double>::infinity();
    for (const auto& c : inflated.components()) min_var = std::min(min_var, c.sd * c.sd);
    // gamma2 = beta var_z must stay below every inflated variance
    const double beta_max = (1.0 - 1e-6) * min_var / var_z;

    // Starting values. Beyond the fast decay rho_Z ~ (1 - beta) exp(-m nu t),
    // where m = rho_Y'(1) converts nu into the initial exponential rate.
    double nu0 = 0.0, beta0 = 0.0, kappa0 = 0.0;
    if (options.start) {
        nu0 = (*options.start)[0];
        kappa0 = (*options.start)[1];
        beta0 = std::clamp((*options.start)[2], 0.01 * beta_max, 0.99 * beta_max);
        if (!(nu0 > 0.0) || !(kappa0 > 0.0)) throw std::invalid_argument("fit_acf: start rates must be positive");
    } else {
        NormalMixture guess = latent_target(inflated, 0.5 * beta_max * var_z);
        const double m1 = HermiteAutocorrelation(guess).derivative(1.0);
        double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0, cnt = 0.0;
        for (std::size_t j = L / 2; j <= L; ++j) {
            double t = dt * static_cast<double>(j);
            double v = std::log(std::max(empirical[j], 1e-3));
            sx += t; sy += v; sxx += t * t; sxy += t * v; cnt += 1.0;
        }
        double slope = (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
        double intercept = (sy - slope * sx) / cnt;
        nu0 = std::max(-slope / m1, 1e-6 / (dt * static_cast<double>(L)));
        beta0 = std::clamp(1.0 - std::exp(intercept), 0.02 * beta_max, 0.98 * beta_max);
        double fast = empirical[1] - (1.0 - beta0) * std::exp(-m1 * nu0 * dt);
        kappa0 = -std::log(std::clamp(fast / beta0, 1e-6, 1.0 - 1e-6)) / dt;
        kappa0 = std::max(kappa0, 10.0 * nu0);
    }

    RhoYModel rho_y(inflated, var_z, beta_max, dt, L, options, beta0, nu0);
    auto unpack = [&](const Eigen::VectorXd& x) {
        return std::array<double, 3>{std::exp(x[0]), std::exp(x[1]), beta_max * logistic(x[2])};
    };
    auto residuals = [&](const Eigen::VectorXd& x) {
        auto [nu, kappa, beta] = unpack(x);
        std::vector<double> ry = rho_y(nu, beta);
        Eigen::VectorXd r(static_cast<Eigen::Index>(L));
        for (std::size_t j = 1; j <= L; ++j) {
            r[static_cast<Eigen::Index>(j - 1)] =
                rho_z(beta, kappa, dt * static_cast<double>(j), ry[j]) - empirical[j];
        }
        return r;
    };

    auto to_u = [&](double beta) { double q = beta / beta_max; return std::log(q / (1.0 - q)); };
    std::vector<Eigen::VectorXd> starts;
    starts.push_back(Eigen::Vector3d(std::log(nu0), std::log(kappa0), to_u(beta0)));
    if (!options.start) starts.push_back(Eigen::Vector3d(std::log(nu0), std::log(kappa0), to_u(0.5 * beta_max)));

    optim::LeastSquaresOptions ls;
    ls.max_iterations = 300;
    ls.x_tolerance = 1e-10;
    optim::LeastSquaresResult best;
    best.value = std::numeric_limits<double>::infinity();
    int iterations = 0;
    for (const auto& x0 : starts) {
        optim::LeastSquaresResult r;
        try {
            r = optim::least_squares(residuals, x0, L, ls);
        } catch (const std::exception&) {
            continue;
        }
        iterations += r.iterations;
        if (std::isfinite(r.value) && r.value < best.value) best = r;
    }
    if (!std::isfinite(best.value)) throw ConvergenceError("fit_acf: no start produced a finite fit");

    AcfFit out;
    auto [nu, kappa, beta] = unpack(best.x);
    out.nu = nu;
    out.kappa = kappa;
    out.beta = beta;
    out.gamma2 = beta * var_z;
    out.latent = latent_target(inflated, out.gamma2);
    out.iterations = iterations;
    out.converged = best.converged;
    out.empirical.assign(empirical.begin(), empirical.begin() + static_cast<std::ptrdiff_t>(L + 1));
    out.fitted_y = options.method == RhoYMethod::Exact ? rho_y.exact(nu, beta) : rho_y(nu, beta);
    out.fitted.resize(L + 1, 1.0);
    for (std::size_t j = 1; j <= L; ++j) {
        out.fitted[j] = rho_z(beta, kappa, dt * static_cast<double>(j), out.fitted_y[j]);
        out.sum_of_squares += (out.fitted[j] - empirical[j]) * (out.fitted[j] - empirical[j]);
    }

    // profiled Gauss-Newton curvature in raw beta units
    Eigen::MatrixXd J = best.jacobian;
    if (J.rows() == static_cast<Eigen::Index>(L) && J.cols() == 3) {
        const double q = logistic(best.x[2]);
        const double dbeta_du = beta_max * q * (1.0 - q);
        if (dbeta_du > 0.0) J.col(2) /= dbeta_du;
        Eigen::Matrix3d info = J.transpose() * J;
        Eigen::FullPivLU<Eigen::Matrix3d> lu(info);
        if (lu.isInvertible()) {
            double inv_bb = lu.inverse()(2, 2);
            out.beta_curvature = inv_bb > 0.0 ? 0.0025 / inv_bb : 0.0;
        }
    }
    out.weakly_identified = !(out.beta_curvature >= options.curvature_threshold);
    return out;
}

AcfFit fit_acf(const Path& z, const MarginalFit& marginal, const AcfFitOptions& options) {
    if (z.size() < 10 * options.lags) throw std::invalid_argument("fit_acf: path too short for the lag window");
    std::vector<double> acf = autocorrelation(z.values, options.lags);
    return fit_acf(acf, z.dt, marginal, options);
}

// ---------------------------------------------------------------------------

std::vector<std::string> error_model_names(std::size_t components) {
    std::vector<std::string> names = theta_names(components);
    names.push_back("kappa");
    names.push_back("gamma2");
    return names;
}

namespace {

Eigen::VectorXd error_theta(const AcfFit& acf) {
    Eigen::VectorXd base = to_theta(acf.nu, acf.latent);
    Eigen::VectorXd theta(base.size() + 2);
    theta.head(base.size()) = base;
    theta[base.size()] = acf.kappa;
    theta[base.size() + 1] = acf.gamma2;
    return theta;
}

}  // namespace

ErrorModelFit fit_error_model(const Path& z, const ErrorFitOptions& options) {
    ErrorModelFit out;
    out.marginal = fit_marginal(z, options.components);
    out.acf = fit_acf(z, out.marginal, options.acf);

    FitResult& res = out.result;
    res.method = "errorfit";
    res.names = error_model_names(options.components);
    res.theta = error_theta(out.acf);
    res.objective = out.acf.sum_of_squares;
    res.iterations = out.acf.iterations;
    res.converged = out.acf.converged && !out.marginal.degenerate;
    res.dt = z.dt;
    res.observations = z.size();
    if (out.acf.weakly_identified) res.message = "error variance share weakly identified (flat in beta)";

    const auto p = res.theta.size();
    res.covariance = Eigen::MatrixXd::Constant(p, p, std::numeric_limits<double>::quiet_NaN());
    res.std_errors = Eigen::VectorXd::Constant(p, std::numeric_limits<double>::quiet_NaN());
    if (options.bootstrap == 0) return out;

    auto model = TransformedDiffusion::ou(out.acf.nu, out.acf.latent, true);
    std::vector<Eigen::VectorXd> draws;
    for (std::size_t b = 0; b < options.bootstrap; ++b) {
        std::seed_seq seq{static_cast<std::uint64_t>(options.seed), static_cast<std::uint64_t>(b)};
        Rng rng(seq);
        try {
            ErrorPaths sim = simulate_with_error(model, out.acf.kappa, out.acf.gamma2, z.size(), z.dt, rng);
            MarginalFit m = fit_marginal_impl(sim.observed, options.components, false);
            AcfFitOptions refit = options.acf;
            refit.start = std::array<double, 3>{out.acf.nu, out.acf.kappa, out.acf.beta};
            AcfFit a = fit_acf(sim.observed, m, refit);
            draws.push_back(error_theta(a));
        } catch (const std::exception&) {
            ++out.bootstrap_failures;
        }
    }
    if (draws.size() >= 2) {
        Eigen::VectorXd mean = Eigen::VectorXd::Zero(p);
        for (const auto& d : draws) mean += d;
        mean /= static_cast<double>(draws.size());
        Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(p, p);
        for (const auto& d : draws) cov += (d - mean) * (d - mean).transpose();
        cov /= static_cast<double>(draws.size() - 1);
        res.covariance = cov;
        res.std_errors = cov.diagonal().cwiseSqrt();
    }
    if (out.bootstrap_failures > 0) {
        if (!res.message.empty()) res.message += "; ";
        res.message += std::to_string(out.bootstrap_failures) + " bootstrap refits failed";
    }
    return out;
}

}  // namespace mmdiff
