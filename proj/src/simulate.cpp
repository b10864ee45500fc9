#include "mmdiff/simulate.hpp"

#include "mmdiff/error.hpp"

#include <cmath>
#include <ostream>
#include <stdexcept>

namespace mmdiff {

Path simulate_transformed_ou(const TransformedDiffusion& model, std::size_t n, double dt,
                             InitialState start, Rng& rng) {
    if (n == 0) throw std::invalid_argument("simulate_transformed_ou: n must be >= 1");
    if (!(dt > 0.0)) throw std::invalid_argument("simulate_transformed_ou: dt must be positive");
    const double nu = model.ou_rate();
    const double decay = std::exp(-nu * dt);
    const double noise = std::sqrt(-std::expm1(-2.0 * nu * dt));
    std::normal_distribution<double> norm(0.0, 1.0);

    Path path;
    path.dt = dt;
    path.values.resize(n);
    double x = 0.0;
    if (const double* y0 = std::get_if<double>(&start)) {
        x = model.tau_inv(*y0);
        path.values[0] = *y0;
    } else {
        x = norm(rng);
        path.values[0] = model.tau_fast(x);
    }
    for (std::size_t i = 1; i < n; ++i) {
        x = decay * x + noise * norm(rng);
        path.values[i] = model.tau_fast(x);
    }
    return path;
}

Path simulate_transformed_ou(const TransformedDiffusion& model, std::size_t n, double dt,
                             InitialState start, std::uint64_t seed) {
    Rng rng(seed);
    Path p = simulate_transformed_ou(model, n, dt, start, rng);
    p.seed = seed;
    return p;
}

Path simulate_euler(const SdeCoefficients& sde, std::size_t n, double dt, int substeps, double x0,
                    Rng& rng) {
    if (substeps < 1) throw std::invalid_argument("simulate_euler: substeps must be >= 1");
    if (n == 0) throw std::invalid_argument("simulate_euler: n must be >= 1");
    if (!(dt > 0.0)) throw std::invalid_argument("simulate_euler: dt must be positive");
    const double h = dt / substeps;
    const double root_h = std::sqrt(h);
    std::normal_distribution<double> norm(0.0, 1.0);

    Path path;
    path.dt = dt;
    path.values.resize(n);
    path.values[0] = x0;
    double x = x0;
    for (std::size_t i = 1; i < n; ++i) {
        try {
            for (int s = 0; s < substeps; ++s) {
                x += sde.drift(x) * h + sde.diffusion(x) * root_h * norm(rng);
            }
        } catch (const NumericRangeError& e) {
            if (e.index()) throw;
            throw NumericRangeError(e.what(), i);
        }
        if (!std::isfinite(x)) throw NumericRangeError("simulate_euler: path diverged", i);
        path.values[i] = x;
    }
    return path;
}

ErrorPaths simulate_with_error(const TransformedDiffusion& model, double kappa, double gamma2,
                               std::size_t n, double dt, Rng& rng) {
    if (!(kappa > 0.0)) throw std::invalid_argument("simulate_with_error: kappa must be positive");
    if (!(gamma2 >= 0.0)) throw std::invalid_argument("simulate_with_error: gamma2 must be >= 0");
    ErrorPaths out;
    out.latent = simulate_transformed_ou(model, n, dt, StationaryStart{}, rng);

    const double gamma = std::sqrt(gamma2);
    const double decay = std::exp(-kappa * dt);
    const double noise = gamma * std::sqrt(-std::expm1(-2.0 * kappa * dt));
    std::normal_distribution<double> norm(0.0, 1.0);

    out.error.dt = dt;
    out.error.values.resize(n);
    double e = gamma * norm(rng);
    out.error.values[0] = e;
    for (std::size_t i = 1; i < n; ++i) {
        e = decay * e + noise * norm(rng);
        out.error.values[i] = e;
    }

    out.observed.dt = dt;
    out.observed.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        out.observed.values[i] = out.latent.values[i] + out.error.values[i];
    }
    return out;
}

double double_well_potential(double theta, double y) { return theta * y * y * (y * y - 2.0); }

SdeCoefficients double_well_model(double theta, double sigma) {
    return {[theta](double y) { return -4.0 * theta * (y * y * y - y); },
            [sigma](double) { return sigma; }};
}

SdeCoefficients transformed_model(const TransformedDiffusion& model) {
    return {[&model](double y) { return model.coefficients(y).drift; },
            [&model](double y) { return model.coefficients(y).diffusion; }};
}

SdeCoefficients nonlinear_model(const NonlinearDiffusionParams& p) {
    return {[p](double x) { return p.a_minus1 / x + p.a0 + p.a1 * x + p.a2 * x * x; },
            [p](double x) {
                double v = p.b0 + p.b1 * x + p.b2 * std::pow(x, p.gamma);
                return std::sqrt(std::max(v, 0.0));
            }};
}

void write_path_csv(std::ostream& out, const Path& path) {
    out.precision(17);
    out << "index,time,value\n";
    for (std::size_t i = 0; i < path.values.size(); ++i) {
        out << i << ',' << static_cast<double>(i) * path.dt << ',' << path.values[i] << '\n';
    }
}

}  // namespace mmdiff
