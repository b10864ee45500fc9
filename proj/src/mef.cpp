#include "mmdiff/mef.hpp"

#include "mmdiff/error.hpp"
#include "mmdiff/normal.hpp"
#include "mmdiff/optimize.hpp"
#include "mmdiff/parameters.hpp"
#include "mmdiff/random.hpp"
#include "mmdiff/transform.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>

namespace mmdiff {

std::size_t estimated_size(const EstimatingFunctionSpec& spec) {
    return spec.estimate_target ? theta_size(spec.components) : 1;
}

void validate(const EstimatingFunctionSpec& spec) {
    if (spec.eigenfunctions < 1) throw std::invalid_argument("mef: need at least one eigenfunction");
    if (spec.components < 1) throw std::invalid_argument("mef: need at least one mixture component");
    if (spec.weights == WeightMode::OptimalSimulated && spec.monte_carlo < 1000) {
        throw std::invalid_argument("mef: Monte Carlo size must be at least 1000 for simulated weights");
    }
    if (spec.weights == WeightMode::Fixed) {
        if (static_cast<std::size_t>(spec.fixed_weights.rows()) != estimated_size(spec) ||
            static_cast<std::size_t>(spec.fixed_weights.cols()) != spec.eigenfunctions) {
            throw std::invalid_argument("mef: fixed weight matrix has the wrong shape");
        }
    }
    if (!(spec.fd_step > 0.0)) throw std::invalid_argument("mef: finite-difference step must be positive");
}

double hermite(std::size_t j, double x) {
    double prev = 1.0;
    if (j == 0) return prev;
    double cur = x;
    for (std::size_t n = 1; n < j; ++n) {
        double next = x * cur - static_cast<double>(n) * prev;
        prev = cur;
        cur = next;
    }
    return cur;
}

namespace {

// He_0..He_k at x.
Eigen::VectorXd hermite_all(std::size_t k, double x) {
    Eigen::VectorXd h(static_cast<Eigen::Index>(k + 1));
    h[0] = 1.0;
    if (k >= 1) h[1] = x;
    for (std::size_t n = 1; n < k; ++n) {
        auto i = static_cast<Eigen::Index>(n);
        h[i + 1] = x * h[i] - static_cast<double>(n) * h[i - 1];
    }
    return h;
}

// Monomial coefficients of He_0..He_k; row j holds He_j.
Eigen::MatrixXd hermite_coefficients(std::size_t k) {
    const auto n = static_cast<Eigen::Index>(k + 1);
    Eigen::MatrixXd c = Eigen::MatrixXd::Zero(n, n);
    c(0, 0) = 1.0;
    if (k >= 1) c(1, 1) = 1.0;
    for (Eigen::Index j = 1; j + 1 < n; ++j) {
        for (Eigen::Index m = 0; m < n; ++m) {
            double v = -static_cast<double>(j) * c(j - 1, m);
            if (m > 0) v += c(j, m - 1);
            c(j + 1, m) = v;
        }
    }
    return c;
}

// Everything that depends on theta alone, built once and shared by all points.
class Model {
public:
    Model(const EstimatingFunctionSpec& spec, const Eigen::VectorXd& theta, double dt, bool need_mc)
        : spec_(spec),
          params_(from_theta(theta, spec.components)),
          dt_(dt),
          k_(spec.eigenfunctions),
          rows_(estimated_size(spec)),
          p2_(theta_size(spec.components) - 1),
          transform_(TransformedDiffusion::ou(params_.nu, params_.target, spec.accelerate && need_mc)),
          coeffs_(hermite_coefficients(spec.eigenfunctions)) {
        if (!(dt > 0.0)) throw std::invalid_argument("mef: dt must be positive");
        rho_ = std::exp(-params_.nu * dt);
        var_ = -std::expm1(-2.0 * params_.nu * dt);
        decay_.resize(static_cast<Eigen::Index>(k_ + 1));
        for (std::size_t j = 0; j <= k_; ++j) decay_[static_cast<Eigen::Index>(j)] = std::pow(rho_, static_cast<double>(j));
        if (need_mc) {
            Rng rng(spec.seed);
            std::normal_distribution<double> gauss;
            draws_.resize((spec.monte_carlo + 1) / 2);
            for (double& z : draws_) z = gauss(rng);
        }
    }

    std::size_t k() const { return k_; }
    std::size_t rows() const { return rows_; }
    double nu() const { return params_.nu; }
    double dt() const { return dt_; }
    double decay(std::size_t j) const { return decay_[static_cast<Eigen::Index>(j)]; }
    const NormalMixture& target() const { return params_.target; }

    double to_base(double y, std::optional<std::size_t> index = std::nullopt) const {
        const auto& f = params_.target;
        double lower = f.cdf(y);
        double upper = f.sf(y);
        if (!(lower > 0.0) || !(upper > 0.0)) {
            throw NumericRangeError("inverse transform saturates: target cdf is 0 or 1", index);
        }
        return lower < 0.5 ? normal_quantile(lower) : normal_quantile_upper(upper);
    }

    // d tau^{-1}(y) / d psi given x = tau^{-1}(y).
    Eigen::VectorXd dtau_inv(double x, double y) const {
        return params_.target.grad_cdf_params(y) / normal_pdf(x);
    }

    Eigen::VectorXd h(double x_prev, double x_cur) const {
        Eigen::VectorXd a = hermite_all(k_, x_cur);
        Eigen::VectorXd b = hermite_all(k_, x_prev);
        Eigen::VectorXd out(static_cast<Eigen::Index>(k_));
        for (std::size_t j = 1; j <= k_; ++j) {
            auto i = static_cast<Eigen::Index>(j);
            out[i - 1] = a[i] - decay_[i] * b[i];
        }
        return out;
    }

    Eigen::MatrixXd covariance(double x) const {
        const std::size_t top = 2 * k_;
        // raw moments of X_dt given x
        std::vector<double> m(top + 1);
        const double mean = rho_ * x;
        m[0] = 1.0;
        if (top >= 1) m[1] = mean;
        for (std::size_t n = 2; n <= top; ++n) {
            m[n] = mean * m[n - 1] + static_cast<double>(n - 1) * var_ * m[n - 2];
        }
        Eigen::VectorXd he = hermite_all(k_, x);
        const auto kk = static_cast<Eigen::Index>(k_);
        Eigen::MatrixXd v(kk, kk);
        for (Eigen::Index a = 1; a <= kk; ++a) {
            for (Eigen::Index b = a; b <= kk; ++b) {
                double e = 0.0;
                for (Eigen::Index i = 0; i <= a; ++i) {
                    if (coeffs_(a, i) == 0.0) continue;
                    for (Eigen::Index j = 0; j <= b; ++j) {
                        if (coeffs_(b, j) == 0.0) continue;
                        e += coeffs_(a, i) * coeffs_(b, j) * m[static_cast<std::size_t>(i + j)];
                    }
                }
                v(a - 1, b - 1) = e - decay_[a] * decay_[b] * he[a] * he[b];
                v(b - 1, a - 1) = v(a - 1, b - 1);
            }
        }
        return v;
    }

    Eigen::MatrixXd simulated_target_rows(double x, double y) const {
        const auto kk = static_cast<Eigen::Index>(k_);
        const auto p2 = static_cast<Eigen::Index>(p2_);
        Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(p2, kk);
        const double sd = std::sqrt(var_);
        for (double z : draws_) {
            for (double s : {-1.0, 1.0}) {
                double xd = rho_ * x + s * sd * z;
                double yd = transform_.tau_fast(xd);
                Eigen::VectorXd d = dtau_inv(xd, yd);
                Eigen::VectorXd he = hermite_all(k_ - 1, xd);
                for (Eigen::Index j = 1; j <= kk; ++j) acc.col(j - 1) += static_cast<double>(j) * he[j - 1] * d;
            }
        }
        acc /= static_cast<double>(2 * draws_.size());
        Eigen::VectorXd d0 = dtau_inv(x, y);
        Eigen::VectorXd he0 = hermite_all(k_ - 1, x);
        for (Eigen::Index j = 1; j <= kk; ++j) {
            acc.col(j - 1) -= decay_[j] * static_cast<double>(j) * he0[j - 1] * d0;
        }
        return acc;
    }

    // u_j(x) = g_j'(x) d tau^{-1}/d psi at tau(x), as a p2 x k matrix.
    Eigen::MatrixXd u(double x) const {
        const auto kk = static_cast<Eigen::Index>(k_);
        Eigen::VectorXd d = dtau_inv(x, transform_.tau(x));
        Eigen::VectorXd he = hermite_all(k_ - 1, x);
        Eigen::MatrixXd out(static_cast<Eigen::Index>(p2_), kk);
        for (Eigen::Index j = 1; j <= kk; ++j) out.col(j - 1) = static_cast<double>(j) * he[j - 1] * d;
        return out;
    }

    // The generator of Y applied to u o tau^{-1} equals the base generator
    // -nu x d/dx + nu d^2/dx^2 applied to u, so the derivatives are taken in x.
    Eigen::MatrixXd expansion_target_rows(double x) const {
        const double step = spec_.fd_step;
        Eigen::MatrixXd mid = u(x);
        Eigen::MatrixXd up = u(x + step);
        Eigen::MatrixXd down = u(x - step);
        Eigen::MatrixXd first = (up - down) / (2.0 * step);
        Eigen::MatrixXd second = (up - 2.0 * mid + down) / (step * step);
        const double nu = params_.nu;
        Eigen::MatrixXd gen = -nu * x * first + nu * second;
        for (Eigen::Index j = 1; j <= static_cast<Eigen::Index>(k_); ++j) {
            gen.col(j - 1) += static_cast<double>(j) * nu * mid.col(j - 1);
        }
        return dt_ * gen;
    }

    Eigen::MatrixXd sensitivity(double x, double y, WeightMode mode) const {
        const auto kk = static_cast<Eigen::Index>(k_);
        Eigen::MatrixXd b = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows_), kk);
        Eigen::VectorXd he = hermite_all(k_, x);
        for (Eigen::Index j = 1; j <= kk; ++j) {
            b(0, j - 1) = static_cast<double>(j) * dt_ * decay_[j] * he[j];
        }
        if (spec_.estimate_target) {
            b.bottomRows(static_cast<Eigen::Index>(p2_)) =
                mode == WeightMode::DeltaExpansion ? expansion_target_rows(x) : simulated_target_rows(x, y);
        }
        return b;
    }

private:
    const EstimatingFunctionSpec& spec_;
    OuMixtureParams params_;
    double dt_;
    std::size_t k_;
    std::size_t rows_;
    std::size_t p2_;
    TransformedDiffusion transform_;
    Eigen::MatrixXd coeffs_;
    double rho_ = 0.0;
    double var_ = 0.0;
    Eigen::VectorXd decay_;
    std::vector<double> draws_;
};

bool needs_monte_carlo(const EstimatingFunctionSpec& spec) {
    return spec.estimate_target && spec.weights != WeightMode::DeltaExpansion;
}

Eigen::MatrixXd solve_weights(const Eigen::MatrixXd& b, const Eigen::MatrixXd& v,
                              std::optional<std::size_t> index) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(v);
    double lo = es.eigenvalues().minCoeff();
    double hi = es.eigenvalues().maxCoeff();
    double cond = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
    if (!(cond < 1e13)) throw SingularMatrixError("conditional covariance V is singular", cond, index);
    return v.ldlt().solve(b.transpose()).transpose();
}

struct PointQuantities {
    Eigen::MatrixXd b;
    Eigen::MatrixXd v;
    Eigen::MatrixXd w;
};

PointQuantities point_quantities(const EstimatingFunctionSpec& spec, const Model& model, double x, double y,
                                 std::optional<std::size_t> index) {
    PointQuantities q;
    q.v = model.covariance(x);
    WeightMode mode = spec.weights == WeightMode::Fixed ? WeightMode::OptimalSimulated : spec.weights;
    q.b = model.sensitivity(x, y, mode);
    if (spec.weights == WeightMode::Fixed) {
        q.w = spec.fixed_weights;
    } else {
        q.w = solve_weights(q.b, q.v, index);
    }
    return q;
}

std::vector<double> base_path(const Model& model, const Path& path) {
    std::vector<double> x(path.size());
    for (std::size_t i = 0; i < path.size(); ++i) x[i] = model.to_base(path.values[i], i);
    return x;
}

void check_path(const Path& path) {
    if (path.size() < 2) throw std::invalid_argument("mef: path needs at least 2 points");
    if (!(path.dt > 0.0)) throw std::invalid_argument("mef: dt must be positive");
}

}  // namespace

Eigen::MatrixXd conditional_covariance(const EstimatingFunctionSpec& spec, const Eigen::VectorXd& theta,
                                       double y, double dt) {
    validate(spec);
    Model model(spec, theta, dt, false);
    return model.covariance(model.to_base(y));
}

Eigen::MatrixXd sensitivity(const EstimatingFunctionSpec& spec, const Eigen::VectorXd& theta, double y,
                            double dt) {
    validate(spec);
    Model model(spec, theta, dt, needs_monte_carlo(spec));
    WeightMode mode = spec.weights == WeightMode::Fixed ? WeightMode::OptimalSimulated : spec.weights;
    return model.sensitivity(model.to_base(y), y, mode);
}

Eigen::MatrixXd target_sensitivity_simulated(const EstimatingFunctionSpec& spec,
                                             const Eigen::VectorXd& theta, double y, double dt) {
    validate(spec);
    Model model(spec, theta, dt, true);
    return model.simulated_target_rows(model.to_base(y), y);
}

Eigen::MatrixXd target_sensitivity_expansion(const EstimatingFunctionSpec& spec,
                                             const Eigen::VectorXd& theta, double y, double dt) {
    validate(spec);
    Model model(spec, theta, dt, false);
    return model.expansion_target_rows(model.to_base(y));
}

Eigen::MatrixXd optimal_weights(const EstimatingFunctionSpec& spec, const Eigen::VectorXd& theta, double y,
                                double dt) {
    EstimatingFunctionSpec s = spec;
    s.weights = WeightMode::OptimalSimulated;
    validate(s);
    Model model(s, theta, dt, needs_monte_carlo(s));
    double x = model.to_base(y);
    return point_quantities(s, model, x, y, std::nullopt).w;
}

Eigen::MatrixXd delta_expansion_weights(const EstimatingFunctionSpec& spec, const Eigen::VectorXd& theta,
                                        double y, double dt) {
    EstimatingFunctionSpec s = spec;
    s.weights = WeightMode::DeltaExpansion;
    validate(s);
    Model model(s, theta, dt, false);
    double x = model.to_base(y);
    return point_quantities(s, model, x, y, std::nullopt).w;
}

Eigen::MatrixXd weights(const EstimatingFunctionSpec& spec, const Eigen::VectorXd& theta, double y,
                        double dt) {
    validate(spec);
    Model model(spec, theta, dt, needs_monte_carlo(spec));
    double x = model.to_base(y);
    return point_quantities(spec, model, x, y, std::nullopt).w;
}

Eigen::MatrixXd increments(const EstimatingFunctionSpec& spec, const Eigen::VectorXd& theta,
                           const Path& path) {
    validate(spec);
    check_path(path);
    Model model(spec, theta, path.dt, false);
    auto x = base_path(model, path);
    Eigen::MatrixXd out(static_cast<Eigen::Index>(path.size() - 1), static_cast<Eigen::Index>(spec.eigenfunctions));
    for (std::size_t i = 1; i < path.size(); ++i) out.row(static_cast<Eigen::Index>(i - 1)) = model.h(x[i - 1], x[i]).transpose();
    return out;
}

Eigen::MatrixXd gn_terms(const EstimatingFunctionSpec& spec, const Eigen::VectorXd& theta,
                         const Path& path) {
    validate(spec);
    check_path(path);
    Model model(spec, theta, path.dt, needs_monte_carlo(spec));
    auto x = base_path(model, path);
    Eigen::MatrixXd out(static_cast<Eigen::Index>(path.size() - 1), static_cast<Eigen::Index>(model.rows()));
    for (std::size_t i = 1; i < path.size(); ++i) {
        auto q = point_quantities(spec, model, x[i - 1], path.values[i - 1], i - 1);
        out.row(static_cast<Eigen::Index>(i - 1)) = (q.w * model.h(x[i - 1], x[i])).transpose();
    }
    return out;
}

Eigen::VectorXd gn(const EstimatingFunctionSpec& spec, const Eigen::VectorXd& theta, const Path& path) {
    return gn_terms(spec, theta, path).colwise().sum().transpose();
}

Eigen::MatrixXd godambe_information(const EstimatingFunctionSpec& spec, const Eigen::VectorXd& theta,
                                    const Path& path) {
    validate(spec);
    check_path(path);
    Model model(spec, theta, path.dt, needs_monte_carlo(spec));
    auto x = base_path(model, path);
    const auto p = static_cast<Eigen::Index>(model.rows());
    Eigen::MatrixXd s = Eigen::MatrixXd::Zero(p, p);
    Eigen::MatrixXd sigma = Eigen::MatrixXd::Zero(p, p);
    for (std::size_t i = 1; i < path.size(); ++i) {
        auto q = point_quantities(spec, model, x[i - 1], path.values[i - 1], i - 1);
        s += q.w * q.b.transpose();
        sigma += q.w * q.v * q.w.transpose();
    }
    const double n = static_cast<double>(path.size() - 1);
    s /= n;
    sigma /= n;
    Eigen::MatrixXd j;
    if (spec.weights == WeightMode::Fixed) {
        j = s.transpose() * sigma.ldlt().solve(s);
    } else {
        j = s;
    }
    return 0.5 * (j + j.transpose());
}

FitResult solve_mef(const EstimatingFunctionSpec& spec, const Path& path, const Eigen::VectorXd& theta_init,
                    const MefOptions& options) {
    validate(spec);
    check_path(path);
    const std::size_t m = spec.components;
    const std::size_t full = theta_size(m);
    if (static_cast<std::size_t>(theta_init.size()) != full) {
        throw std::invalid_argument("solve_mef: initial value has the wrong length");
    }
    const std::size_t rows = estimated_size(spec);
    const double n = static_cast<double>(path.size() - 1);

    auto to_eta = [&](const Eigen::VectorXd& theta) -> Eigen::VectorXd {
        if (spec.estimate_target) return to_unconstrained(theta, m);
        return Eigen::VectorXd::Constant(1, std::log(theta[0]));
    };
    auto to_th = [&](const Eigen::VectorXd& eta) -> Eigen::VectorXd {
        if (spec.estimate_target) return from_unconstrained(eta, m);
        Eigen::VectorXd theta = theta_init;
        theta[0] = std::exp(eta[0]);
        return theta;
    };

    Eigen::VectorXd eta = to_eta(theta_init);
    std::vector<Eigen::MatrixXd> frozen(path.size() - 1);
    FitResult result;
    result.method = "mef";
    int outer = 0;
    int inner_total = 0;
    bool settled = false;
    std::string inner_message;
    for (; outer < options.max_outer_iterations; ++outer) {
        const Eigen::VectorXd theta_w = to_th(eta);
        {
            Model model(spec, theta_w, path.dt, needs_monte_carlo(spec));
            auto x = base_path(model, path);
            for (std::size_t i = 1; i < path.size(); ++i) {
                frozen[i - 1] = point_quantities(spec, model, x[i - 1], path.values[i - 1], i - 1).w;
            }
        }
        optim::VectorFunction residuals = [&](const Eigen::VectorXd& e) -> Eigen::VectorXd {
            Eigen::VectorXd g = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(rows));
            try {
                Model model(spec, to_th(e), path.dt, false);
                double prev = model.to_base(path.values[0], 0);
                for (std::size_t i = 1; i < path.size(); ++i) {
                    double cur = model.to_base(path.values[i], i);
                    g += frozen[i - 1] * model.h(prev, cur);
                    prev = cur;
                }
                g /= n;
                if (g.allFinite()) return g;
            } catch (const NumericRangeError&) {
            } catch (const std::invalid_argument&) {
            }
            return Eigen::VectorXd::Constant(static_cast<Eigen::Index>(rows), 1e10);
        };
        optim::LeastSquaresOptions ls;
        ls.max_iterations = options.max_inner_iterations;
        ls.x_tolerance = 1e-13;
        ls.g_tolerance = 1e-20;
        auto r = optim::least_squares(residuals, eta, rows, ls);
        inner_total += r.iterations;
        inner_message = r.message;
        double change = (r.x - eta).cwiseAbs().maxCoeff();
        eta = r.x;
        if (change < options.outer_tolerance) {
            settled = true;
            ++outer;
            break;
        }
    }

    Eigen::VectorXd theta = to_th(eta);
    Eigen::VectorXd g = gn(spec, theta, path);
    result.objective = g.norm() / n;
    result.iterations = inner_total;
    result.converged = settled && result.objective < 1e-6;
    result.message = "weight refreshes: " + std::to_string(outer) + "; inner solver: " + inner_message;
    if (!settled) result.message += "; weights did not settle";
    result.dt = path.dt;
    result.observations = path.size();
    result.names = theta_names(m);

    const auto p_full = static_cast<Eigen::Index>(full);
    result.covariance = Eigen::MatrixXd::Zero(p_full, p_full);
    try {
        Eigen::MatrixXd info = godambe_information(spec, theta, path);
        Eigen::LLT<Eigen::MatrixXd> llt(info);
        if (llt.info() != Eigen::Success) throw SingularMatrixError("Godambe information not positive definite", 0.0);
        Eigen::MatrixXd cov = llt.solve(Eigen::MatrixXd::Identity(info.rows(), info.cols())) / n;
        result.covariance.topLeftCorner(cov.rows(), cov.cols()) = cov;
    } catch (const SingularMatrixError& e) {
        result.covariance.setConstant(std::numeric_limits<double>::quiet_NaN());
        result.message += std::string("; ") + e.what();
    }
    if (spec.estimate_target) sort_components(theta, &result.covariance, m);
    result.theta = theta;
    result.std_errors = result.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
    if (!result.covariance.allFinite()) {
        result.std_errors = Eigen::VectorXd::Constant(p_full, std::numeric_limits<double>::quiet_NaN());
    }
    return result;
}

}  // namespace mmdiff
