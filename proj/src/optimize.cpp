#include "mmdiff/optimize.hpp"

#include <gsl/gsl_errno.h>
#include <gsl/gsl_multifit_nlinear.h>
#include <gsl/gsl_multimin.h>
#include <gsl/gsl_multiroots.h>
#include <gsl/gsl_vector.h>

#include <cmath>
#include <memory>

namespace mmdiff::optim {

namespace {

struct GslErrorsOff {
    GslErrorsOff() { gsl_set_error_handler_off(); }
};
const GslErrorsOff gsl_errors_off;

Eigen::VectorXd to_eigen(const gsl_vector* v) {
    Eigen::VectorXd out(v->size);
    for (std::size_t i = 0; i < v->size; ++i) out[i] = gsl_vector_get(v, i);
    return out;
}

void to_gsl(const Eigen::VectorXd& x, gsl_vector* v) {
    for (std::size_t i = 0; i < v->size; ++i) gsl_vector_set(v, i, x[static_cast<Eigen::Index>(i)]);
}

struct VectorDeleter {
    void operator()(gsl_vector* v) const { gsl_vector_free(v); }
};
using GslVector = std::unique_ptr<gsl_vector, VectorDeleter>;

GslVector make_vector(const Eigen::VectorXd& x) {
    GslVector v(gsl_vector_alloc(static_cast<std::size_t>(x.size())));
    to_gsl(x, v.get());
    return v;
}

double fg_value(const gsl_vector* x, void* params) {
    auto* fg = static_cast<const ObjectiveWithGradient*>(params);
    Eigen::VectorXd g(x->size);
    double v = (*fg)(to_eigen(x), g);
    return std::isfinite(v) ? v : GSL_POSINF;
}

void fg_gradient(const gsl_vector* x, void* params, gsl_vector* grad) {
    auto* fg = static_cast<const ObjectiveWithGradient*>(params);
    Eigen::VectorXd g(x->size);
    (*fg)(to_eigen(x), g);
    to_gsl(g, grad);
}

void fg_both(const gsl_vector* x, void* params, double* f, gsl_vector* grad) {
    auto* fg = static_cast<const ObjectiveWithGradient*>(params);
    Eigen::VectorXd g(x->size);
    double v = (*fg)(to_eigen(x), g);
    *f = std::isfinite(v) ? v : GSL_POSINF;
    to_gsl(g, grad);
}

}  // namespace

Result minimize_bfgs(const ObjectiveWithGradient& fg, const Eigen::VectorXd& x0,
                     const BfgsOptions& options) {
    const std::size_t n = static_cast<std::size_t>(x0.size());
    gsl_multimin_function_fdf fdf;
    fdf.n = n;
    fdf.f = fg_value;
    fdf.df = fg_gradient;
    fdf.fdf = fg_both;
    fdf.params = const_cast<ObjectiveWithGradient*>(&fg);

    auto start = make_vector(x0);
    std::unique_ptr<gsl_multimin_fdfminimizer, decltype(&gsl_multimin_fdfminimizer_free)> solver(
        gsl_multimin_fdfminimizer_alloc(gsl_multimin_fdfminimizer_vector_bfgs2, n),
        gsl_multimin_fdfminimizer_free);
    gsl_multimin_fdfminimizer_set(solver.get(), &fdf, start.get(), options.initial_step,
                                  options.line_tolerance);

    Result r;
    int status = GSL_CONTINUE;
    int iter = 0;
    while (iter < options.max_iterations) {
        ++iter;
        status = gsl_multimin_fdfminimizer_iterate(solver.get());
        if (status != GSL_SUCCESS) break;
        status = gsl_multimin_test_gradient(solver->gradient, options.gradient_tolerance);
        if (status == GSL_SUCCESS) break;
    }
    r.x = to_eigen(solver->x);
    r.value = solver->f;
    r.iterations = iter;
    double gnorm = 0.0;
    for (std::size_t i = 0; i < n; ++i) gnorm += std::pow(gsl_vector_get(solver->gradient, i), 2);
    gnorm = std::sqrt(gnorm);
    r.converged = gnorm < options.gradient_tolerance;
    r.message = r.converged ? "gradient tolerance met" : gsl_strerror(status);
    return r;
}

namespace {

double simplex_value(const gsl_vector* x, void* params) {
    auto* f = static_cast<const Objective*>(params);
    double v = (*f)(to_eigen(x));
    return std::isfinite(v) ? v : GSL_POSINF;
}

}  // namespace

Result minimize_simplex(const Objective& f, const Eigen::VectorXd& x0,
                        const SimplexOptions& options) {
    const std::size_t n = static_cast<std::size_t>(x0.size());
    gsl_multimin_function fn;
    fn.n = n;
    fn.f = simplex_value;
    fn.params = const_cast<Objective*>(&f);

    auto start = make_vector(x0);
    auto steps = make_vector(Eigen::VectorXd::Constant(x0.size(), options.initial_step));
    std::unique_ptr<gsl_multimin_fminimizer, decltype(&gsl_multimin_fminimizer_free)> solver(
        gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, n),
        gsl_multimin_fminimizer_free);
    gsl_multimin_fminimizer_set(solver.get(), &fn, start.get(), steps.get());

    Result r;
    int status = GSL_CONTINUE;
    int iter = 0;
    while (iter < options.max_iterations) {
        ++iter;
        status = gsl_multimin_fminimizer_iterate(solver.get());
        if (status != GSL_SUCCESS) break;
        status = gsl_multimin_test_size(gsl_multimin_fminimizer_size(solver.get()),
                                        options.size_tolerance);
        if (status == GSL_SUCCESS) break;
    }
    r.x = to_eigen(solver->x);
    r.value = solver->fval;
    r.iterations = iter;
    r.converged = status == GSL_SUCCESS;
    r.message = gsl_strerror(status);
    return r;
}

namespace {

int root_function(const gsl_vector* x, void* params, gsl_vector* f) {
    auto* fn = static_cast<const VectorFunction*>(params);
    Eigen::VectorXd v = (*fn)(to_eigen(x));
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (!std::isfinite(v[i])) return GSL_EBADFUNC;
    }
    to_gsl(v, f);
    return GSL_SUCCESS;
}

}  // namespace

Result solve_root(const VectorFunction& f, const Eigen::VectorXd& x0, const RootOptions& options) {
    const std::size_t n = static_cast<std::size_t>(x0.size());
    gsl_multiroot_function fn;
    fn.n = n;
    fn.f = root_function;
    fn.params = const_cast<VectorFunction*>(&f);

    auto start = make_vector(x0);
    std::unique_ptr<gsl_multiroot_fsolver, decltype(&gsl_multiroot_fsolver_free)> solver(
        gsl_multiroot_fsolver_alloc(gsl_multiroot_fsolver_hybrids, n), gsl_multiroot_fsolver_free);

    Result r;
    if (gsl_multiroot_fsolver_set(solver.get(), &fn, start.get()) != GSL_SUCCESS) {
        r.x = x0;
        r.value = INFINITY;
        r.message = "root solver could not evaluate the starting point";
        return r;
    }
    int status = GSL_CONTINUE;
    int iter = 0;
    while (iter < options.max_iterations) {
        ++iter;
        status = gsl_multiroot_fsolver_iterate(solver.get());
        if (status != GSL_SUCCESS) break;
        status = gsl_multiroot_test_residual(solver->f, options.residual_tolerance);
        if (status == GSL_SUCCESS) break;
    }
    r.x = to_eigen(solver->x);
    double norm = 0.0;
    for (std::size_t i = 0; i < n; ++i) norm += std::pow(gsl_vector_get(solver->f, i), 2);
    r.value = std::sqrt(norm);
    r.iterations = iter;
    r.converged = status == GSL_SUCCESS;
    r.message = gsl_strerror(status);
    return r;
}

namespace {

int ls_function(const gsl_vector* x, void* params, gsl_vector* f) {
    auto* fn = static_cast<const VectorFunction*>(params);
    Eigen::VectorXd v = (*fn)(to_eigen(x));
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (!std::isfinite(v[i])) return GSL_EBADFUNC;
    }
    to_gsl(v, f);
    return GSL_SUCCESS;
}

}  // namespace

LeastSquaresResult least_squares(const VectorFunction& residuals, const Eigen::VectorXd& x0,
                                 std::size_t residual_count, const LeastSquaresOptions& options) {
    const std::size_t p = static_cast<std::size_t>(x0.size());
    gsl_multifit_nlinear_fdf fdf;
    fdf.f = ls_function;
    fdf.df = nullptr;
    fdf.fvv = nullptr;
    fdf.n = residual_count;
    fdf.p = p;
    fdf.params = const_cast<VectorFunction*>(&residuals);

    gsl_multifit_nlinear_parameters params = gsl_multifit_nlinear_default_parameters();
    std::unique_ptr<gsl_multifit_nlinear_workspace, decltype(&gsl_multifit_nlinear_free)> work(
        gsl_multifit_nlinear_alloc(gsl_multifit_nlinear_trust, &params, residual_count, p),
        gsl_multifit_nlinear_free);

    auto start = make_vector(x0);
    LeastSquaresResult r;
    if (gsl_multifit_nlinear_init(start.get(), &fdf, work.get()) != GSL_SUCCESS) {
        r.x = x0;
        r.value = INFINITY;
        r.message = "least squares could not evaluate the starting point";
        return r;
    }
    int info = 0;
    int status = gsl_multifit_nlinear_driver(static_cast<std::size_t>(options.max_iterations),
                                             options.x_tolerance, options.g_tolerance,
                                             options.f_tolerance, nullptr, nullptr, &info,
                                             work.get());
    r.x = to_eigen(gsl_multifit_nlinear_position(work.get()));
    const gsl_vector* f = gsl_multifit_nlinear_residual(work.get());
    double ss = 0.0;
    for (std::size_t i = 0; i < f->size; ++i) ss += std::pow(gsl_vector_get(f, i), 2);
    r.value = 0.5 * ss;
    r.iterations = static_cast<int>(gsl_multifit_nlinear_niter(work.get()));
    r.converged = status == GSL_SUCCESS;
    r.message = gsl_strerror(status);
    const gsl_matrix* jac = gsl_multifit_nlinear_jac(work.get());
    r.jacobian.resize(static_cast<Eigen::Index>(jac->size1), static_cast<Eigen::Index>(jac->size2));
    for (std::size_t i = 0; i < jac->size1; ++i) {
        for (std::size_t j = 0; j < jac->size2; ++j) {
            r.jacobian(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                gsl_matrix_get(jac, i, j);
        }
    }
    return r;
}

Eigen::VectorXd numeric_gradient(const Objective& f, const Eigen::VectorXd& x, double h) {
    Eigen::VectorXd g(x.size());
    Eigen::VectorXd xp = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        xp[i] = x[i] + h;
        double up = f(xp);
        xp[i] = x[i] - h;
        double down = f(xp);
        xp[i] = x[i];
        g[i] = (up - down) / (2.0 * h);
    }
    return g;
}

Eigen::MatrixXd numeric_jacobian(const VectorFunction& f, const Eigen::VectorXd& x, double h) {
    Eigen::VectorXd xp = x;
    Eigen::MatrixXd jac;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        xp[i] = x[i] + h;
        Eigen::VectorXd up = f(xp);
        xp[i] = x[i] - h;
        Eigen::VectorXd down = f(xp);
        xp[i] = x[i];
        if (jac.size() == 0) jac.resize(up.size(), x.size());
        jac.col(i) = (up - down) / (2.0 * h);
    }
    return jac;
}

}  // namespace mmdiff::optim
