#include "mmdiff/mle.hpp"

#include "mmdiff/error.hpp"
#include "mmdiff/mixture_fit.hpp"
#include "mmdiff/normal.hpp"
#include "mmdiff/optimize.hpp"
#include "mmdiff/parameters.hpp"
#include "mmdiff/random.hpp"
#include "mmdiff/stats.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace mmdiff {

namespace {

// Base coordinate x = Phi^{-1}(F(y)) computed from whichever tail keeps
// precision, with d x / d psi when requested.
struct BasePoint {
    double x;
    double log_f;
    Eigen::VectorXd dx;     // d x / d psi
    Eigen::VectorXd dlogf;  // d log f / d psi
};

BasePoint base_point(const NormalMixture& target, double y, std::size_t index, bool with_grad) {
    double lower = target.cdf(y);
    double upper = target.sf(y);
    if (!(lower > 0.0) || !(upper > 0.0)) {
        throw NumericRangeError("inverse transform saturates: target cdf is 0 or 1", index);
    }
    BasePoint p;
    p.x = lower < 0.5 ? normal_quantile(lower) : normal_quantile_upper(upper);
    p.log_f = target.log_pdf(y);
    if (!std::isfinite(p.log_f)) throw NumericRangeError("target density underflows", index);
    if (with_grad) {
        p.dx = target.grad_cdf_params(y) / normal_pdf(p.x);
        p.dlogf = target.grad_pdf_params(y) / std::exp(p.log_f);
    }
    return p;
}

}  // namespace

double loglik_transformed_ou(const Eigen::VectorXd& theta, const Path& path,
                             std::size_t components, Eigen::VectorXd* gradient,
                             const LikelihoodOptions& options) {
    if (path.size() < 2) throw std::invalid_argument("loglik_transformed_ou: path needs 2 points");
    if (!(path.dt > 0.0)) throw std::invalid_argument("loglik_transformed_ou: dt must be positive");
    const auto params = from_theta(theta, components);
    const double nu = params.nu;
    const NormalMixture& target = params.target;
    const double dt = path.dt;
    const bool want = gradient != nullptr;

    const double rho = std::exp(-nu * dt);
    const double v = -std::expm1(-2.0 * nu * dt);
    const double dv = 2.0 * dt * rho * rho;
    const double half_log_v = 0.5 * std::log(v);

    const Eigen::Index p = theta.size();
    Eigen::VectorXd g;
    if (want) g = Eigen::VectorXd::Zero(p);

    BasePoint prev = base_point(target, path.values[0], 0, want);
    double total = 0.0;
    if (options.stationary_start) {
        total += prev.log_f;
        if (want) g.tail(p - 1) += prev.dlogf;
    }
    for (std::size_t i = 1; i < path.size(); ++i) {
        BasePoint cur = base_point(target, path.values[i], i, want);
        const double r = cur.x - rho * prev.x;
        total += -half_log_v - r * r / (2.0 * v) + cur.log_f + 0.5 * cur.x * cur.x;
        if (want) {
            g[0] += -dv / (2.0 * v) - r * dt * rho * prev.x / v + r * r * dv / (2.0 * v * v);
            g.tail(p - 1) += -r * (cur.dx - rho * prev.dx) / v + cur.dlogf + cur.x * cur.dx;
        }
        prev = std::move(cur);
    }
    if (want) *gradient = g;
    return total;
}

InitialValues auto_init(const Path& path, std::size_t components) {
    const std::size_t n = path.size();
    if (n < 2) throw std::invalid_argument("auto_init: path needs at least 2 points");
    if (!(path.dt > 0.0)) throw std::invalid_argument("auto_init: dt must be positive");
    const std::size_t k = components;

    InitialValues out;
    out.theta.resize(static_cast<Eigen::Index>(theta_size(k)));

    double mean = sample_mean(path.values);
    double sd = std::sqrt(sample_variance(path.values));

    EmResult em;
    if (sd > 0.0) em = fit_normal_mixture_em(path.values, EmOptions{k});
    if (em.mixture && !em.degenerate) {
        Eigen::VectorXd psi = em.mixture->parameters();
        out.theta.tail(psi.size()) = psi;
    } else {
        // unimodal placeholder: equal weights, means spread over one sd
        out.degenerate = true;
        double spread = sd > 0.0 ? sd : std::max(1.0, std::abs(mean)) * 1e-6;
        for (std::size_t c = 0; c + 1 < k; ++c) {
            out.theta[static_cast<Eigen::Index>(1 + c)] = 1.0 / static_cast<double>(k);
        }
        for (std::size_t c = 0; c < k; ++c) {
            double offset = k == 1 ? 0.0 : (static_cast<double>(c) / static_cast<double>(k - 1) - 0.5);
            out.theta[static_cast<Eigen::Index>(k + 2 * c)] = mean + spread * offset;
            out.theta[static_cast<Eigen::Index>(k + 2 * c + 1)] = spread;
        }
    }

    // normal scores of mid-ranks
    double rho1 = 0.0;
    if (sd > 0.0) {
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return path.values[a] < path.values[b]; });
        std::vector<double> scores(n);
        std::size_t i = 0;
        while (i < n) {
            std::size_t j = i;
            while (j + 1 < n && path.values[order[j + 1]] == path.values[order[i]]) ++j;
            double rank = 0.5 * static_cast<double>(i + j) + 1.0;
            double z = normal_quantile(rank / static_cast<double>(n + 1));
            for (std::size_t m = i; m <= j; ++m) scores[order[m]] = z;
            i = j + 1;
        }
        rho1 = autocorrelation(scores, 1)[1];
    }
    rho1 = std::clamp(rho1, 1e-6, 1.0 - 1e-9);
    out.theta[0] = -std::log(rho1) / path.dt;
    return out;
}

namespace {

Eigen::VectorXd eta_gradient(const Eigen::VectorXd& eta, const Path& path, std::size_t k,
                             const LikelihoodOptions& options, double* value) {
    Eigen::VectorXd theta = from_unconstrained(eta, k);
    Eigen::VectorXd g;
    double ll = loglik_transformed_ou(theta, path, k, &g, options);
    if (value) *value = ll;
    return theta_jacobian(eta, k).transpose() * g;
}

Eigen::MatrixXd eta_information(const Eigen::VectorXd& eta, const Path& path, std::size_t k,
                                double h, const LikelihoodOptions& options) {
    const Eigen::Index p = eta.size();
    Eigen::MatrixXd info(p, p);
    for (Eigen::Index j = 0; j < p; ++j) {
        Eigen::VectorXd up = eta;
        Eigen::VectorXd down = eta;
        up[j] += h;
        down[j] -= h;
        info.col(j) = -(eta_gradient(up, path, k, options, nullptr) -
                        eta_gradient(down, path, k, options, nullptr)) /
                      (2.0 * h);
    }
    return 0.5 * (info + info.transpose());
}

bool all_finite(const Eigen::MatrixXd& m) { return m.allFinite(); }

}  // namespace

Eigen::MatrixXd observed_information(const Eigen::VectorXd& theta, const Path& path,
                                     std::size_t components, double step,
                                     const LikelihoodOptions& options) {
    Eigen::VectorXd eta = to_unconstrained(theta, components);
    Eigen::MatrixXd info_eta = eta_information(eta, path, components, step, options);
    Eigen::MatrixXd jinv = theta_jacobian(eta, components).inverse();
    return jinv.transpose() * info_eta * jinv;
}

FitResult fit_mle(const Path& path, const std::optional<Eigen::VectorXd>& init,
                  const MleOptions& options) {
    if (path.size() < 50) throw std::invalid_argument("fit_mle: path needs at least 50 observations");
    const std::size_t k = options.components;
    const double n_trans = static_cast<double>(path.size() - 1);

    Eigen::VectorXd theta0 = init ? *init : auto_init(path, k).theta;
    if (static_cast<std::size_t>(theta0.size()) != theta_size(k)) {
        throw std::invalid_argument("fit_mle: initial value has the wrong length");
    }
    // the initial value must be feasible; this throws with an index otherwise
    loglik_transformed_ou(theta0, path, k, nullptr, options.likelihood);

    optim::ObjectiveWithGradient objective = [&](const Eigen::VectorXd& eta, Eigen::VectorXd& grad) {
        try {
            double ll = 0.0;
            Eigen::VectorXd g = eta_gradient(eta, path, k, options.likelihood, &ll);
            if (!std::isfinite(ll) || !g.allFinite()) throw NumericRangeError("non-finite likelihood");
            grad = -g / n_trans;
            return -ll / n_trans;
        } catch (const NumericRangeError&) {
        } catch (const std::invalid_argument&) {
        }
        grad = Eigen::VectorXd::Zero(eta.size());
        return std::numeric_limits<double>::infinity();
    };

    optim::BfgsOptions bfgs;
    bfgs.max_iterations = options.max_iterations;
    bfgs.gradient_tolerance = options.gradient_tolerance;
    bfgs.initial_step = 0.1;
    bfgs.line_tolerance = 0.1;

    Rng rng(options.seed);
    std::normal_distribution<double> gauss;
    const Eigen::VectorXd eta0 = to_unconstrained(theta0, k);

    FitResult best;
    best.objective = -std::numeric_limits<double>::infinity();
    Eigen::VectorXd best_eta = eta0;
    int total_iterations = 0;
    for (int s = 0; s < std::max(1, options.starts); ++s) {
        Eigen::VectorXd eta = eta0;
        if (s > 0) {
            for (Eigen::Index j = 0; j < eta.size(); ++j) {
                bool is_mean = j >= static_cast<Eigen::Index>(k) && (j - static_cast<Eigen::Index>(k)) % 2 == 0;
                double scale = is_mean ? theta0[j + 1] : 1.0;
                eta[j] += options.jitter * scale * gauss(rng);
            }
        }
        // restart the quasi-Newton search while it stalls yet still improves
        optim::Result r;
        double last = std::numeric_limits<double>::infinity();
        for (int attempt = 0; attempt < 6; ++attempt) {
            r = optim::minimize_bfgs(objective, eta, bfgs);
            total_iterations += r.iterations;
            eta = r.x;
            if (r.converged || !(r.value < last - 1e-14 * std::abs(last))) break;
            last = r.value;
        }
        double ll = -r.value * n_trans;
        best.start_objectives.push_back(ll);
        if (std::isfinite(ll) && ll > best.objective) {
            best.objective = ll;
            best_eta = r.x;
            best.converged = r.converged;
            best.message = r.message;
        }
    }
    if (!std::isfinite(best.objective)) {
        throw ConvergenceError("fit_mle: no start reached a finite likelihood");
    }

    best.method = "mle";
    best.names = theta_names(k);
    best.iterations = total_iterations;
    best.dt = path.dt;
    best.observations = path.size();
    best.theta = from_unconstrained(best_eta, k);

    Eigen::MatrixXd info = eta_information(best_eta, path, k, options.hessian_step, options.likelihood);
    Eigen::LLT<Eigen::MatrixXd> llt(info);
    if (!best.converged && llt.info() == Eigen::Success && all_finite(info)) {
        // BFGS can stall on rounding just short of the gradient tolerance.
        // Newton steps with the observed information finish the job, and the
        // Newton decrement g' I^{-1} g / 2 bounds the remaining log-likelihood gain.
        double ll = 0.0;
        Eigen::VectorXd g = eta_gradient(best_eta, path, k, options.likelihood, &ll);
        double decrement = 0.5 * g.dot(llt.solve(g));
        for (int step = 0; step < 5 && decrement > 1e-10; ++step) {
            Eigen::VectorXd trial = best_eta + llt.solve(g);
            double trial_ll = 0.0;
            Eigen::VectorXd trial_g;
            try {
                trial_g = eta_gradient(trial, path, k, options.likelihood, &trial_ll);
            } catch (const std::exception&) {
                break;
            }
            if (!(trial_ll >= ll) || !trial_g.allFinite()) break;
            best_eta = trial;
            ll = trial_ll;
            g = trial_g;
            info = eta_information(best_eta, path, k, options.hessian_step, options.likelihood);
            llt.compute(info);
            if (llt.info() != Eigen::Success || !all_finite(info)) break;
            decrement = 0.5 * g.dot(llt.solve(g));
        }
        if (llt.info() == Eigen::Success && decrement < 1e-6) {
            best.converged = true;
            best.objective = ll;
            best.theta = from_unconstrained(best_eta, k);
            best.message = "Newton decrement below 1e-6 after a stalled line search";
        }
    }
    const Eigen::Index p = best.theta.size();
    if (llt.info() == Eigen::Success && all_finite(info)) {
        Eigen::MatrixXd cov_eta = llt.solve(Eigen::MatrixXd::Identity(p, p));
        Eigen::MatrixXd jac = theta_jacobian(best_eta, k);
        best.covariance = jac * cov_eta * jac.transpose();
    } else {
        best.covariance = Eigen::MatrixXd::Constant(p, p, std::numeric_limits<double>::quiet_NaN());
        best.message += "; observed information not positive definite";
    }
    sort_components(best.theta, &best.covariance, k);
    best.std_errors = best.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
    if (!best.covariance.allFinite()) {
        best.std_errors = Eigen::VectorXd::Constant(p, std::numeric_limits<double>::quiet_NaN());
    }
    return best;
}

}  // namespace mmdiff
