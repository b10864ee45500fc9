#include "mmdiff/passage.hpp"

#include "mmdiff/error.hpp"
#include "mmdiff/normal.hpp"
#include "mmdiff/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>
#include <thread>

namespace mmdiff {

namespace {

constexpr double kOuterTol = 1e-10;
constexpr double kInnerTol = 1e-11;

// Integrates to the requested tolerance; on failure retries without an error
// bound so that a partial value can be reported.
PassageResult guarded_integral(const std::function<double(double)>& f, double a, double b,
                               double rel_tol) {
    PassageResult out;
    try {
        QuadratureResult q = integrate(f, a, b, rel_tol);
        out.mean = q.value;
        out.error = q.error;
        return out;
    } catch (const ConvergenceError& e) {
        out.converged = false;
        out.message = e.what();
    }
    try {
        QuadratureResult q = integrate(f, a, b, rel_tol, std::numeric_limits<double>::infinity());
        out.mean = q.value;
        out.error = q.error;
    } catch (const ConvergenceError&) {
        out.mean = std::numeric_limits<double>::quiet_NaN();
        out.error = std::numeric_limits<double>::infinity();
    }
    return out;
}

bool astronomical(double x0, double x1) {
    return std::abs(x0) > kAstronomicalBound || std::abs(x1) > kAstronomicalBound;
}

}  // namespace

PassageResult mean_passage_general(const Diffusion& base, double from, double to) {
    if (!base.in_state_space(from) || !base.in_state_space(to)) {
        throw std::invalid_argument("mean_passage_general: points must lie in the state space");
    }
    if (from == to) return {};

    auto speed = [&](double x) {
        double sigma = base.diffusion(x);
        return 1.0 / (base.scale_density(x) * sigma * sigma);
    };
    bool inner_failed = false;
    auto inner = [&](double a, double b) {
        try {
            return integrate(speed, a, b, kInnerTol).value;
        } catch (const ConvergenceError&) {
            inner_failed = true;
        }
        try {
            return integrate(speed, a, b, kInnerTol, std::numeric_limits<double>::infinity()).value;
        } catch (const ConvergenceError&) {
            return std::numeric_limits<double>::quiet_NaN();
        }
    };

    PassageResult out;
    if (from < to) {
        // int_lower^y m = int_lower^from m + int_from^y m
        const double head = inner(base.lower(), from);
        out = guarded_integral(
            [&](double y) { return 2.0 * base.scale_density(y) * (head + inner(from, y)); }, from, to,
            kOuterTol);
    } else {
        const double tail = inner(to, base.upper());
        // int_y^upper m = tail - int_to^y m
        out = guarded_integral(
            [&](double y) {
                double rest = std::max(tail - inner(to, y), 0.0);
                return 2.0 * base.scale_density(y) * rest;
            },
            to, from, kOuterTol);
    }
    if (inner_failed && out.converged) {
        out.converged = false;
        out.message = "inner speed integral missed its tolerance";
    }
    out.astronomical = astronomical(from, to);
    return out;
}

PassageResult ou_mean_passage(double nu, double from, double to) {
    if (!(nu > 0.0)) throw std::invalid_argument("ou_mean_passage: nu must be positive");
    if (from == to) return {};
    PassageResult out;
    if (from < to) {
        // Phi(x) e^{x^2/2} sqrt(2 pi) = Phi(x) / phi(x)
        out = guarded_integral([](double x) { return normal_cdf(x) / normal_pdf(x); }, from, to,
                               1e-12);
    } else {
        out = guarded_integral([](double x) { return normal_sf(x) / normal_pdf(x); }, to, from,
                               1e-12);
    }
    out.mean /= nu;
    out.error /= nu;
    out.astronomical = astronomical(from, to);
    return out;
}

PassageResult mean_passage_transformed(const TransformedDiffusion& model, double from, double to) {
    if (from == to) return {};
    const double x0 = model.tau_inv(from);
    const double x1 = model.tau_inv(to);
    if (const auto* ou = dynamic_cast<const OrnsteinUhlenbeck*>(&model.base())) {
        return ou_mean_passage(ou->rate(), x0, x1);
    }
    return mean_passage_general(model.base(), x0, x1);
}

RegimePassage regime_passage(const TransformedDiffusion& model, ModeConvention convention) {
    std::vector<double> points = convention == ModeConvention::ComponentMeans
                                     ? model.target().component_means()
                                     : model.target().modes();
    if (points.size() < 2 || !(points.back() > points.front())) {
        throw std::invalid_argument("regime_passage: the target has fewer than two distinct regimes");
    }
    RegimePassage r;
    r.lower = points.front();
    r.upper = points.back();
    r.up = mean_passage_transformed(model, r.lower, r.upper);
    r.down = mean_passage_transformed(model, r.upper, r.lower);
    r.ratio = r.down.mean / r.up.mean;
    return r;
}

std::vector<MonteCarloPassage> monte_carlo_passage_strides(const TransformedDiffusion& model,
                                                           double from, double to,
                                                           const std::vector<std::size_t>& strides,
                                                           const MonteCarloPassageOptions& options) {
    const auto* ou = dynamic_cast<const OrnsteinUhlenbeck*>(&model.base());
    if (!ou) throw std::logic_error("monte_carlo_passage: requires an OU base");
    if (!(options.dt_sim > 0.0)) throw std::invalid_argument("monte_carlo_passage: dt_sim must be positive");
    if (options.paths < 2) throw std::invalid_argument("monte_carlo_passage: needs at least 2 paths");
    if (strides.empty() || std::any_of(strides.begin(), strides.end(), [](std::size_t s) { return s == 0; })) {
        throw std::invalid_argument("monte_carlo_passage: strides must be positive");
    }

    std::vector<MonteCarloPassage> out(strides.size());
    for (std::size_t g = 0; g < strides.size(); ++g) {
        out[g].dt = options.dt_sim * static_cast<double>(strides[g]);
        out[g].paths = options.paths;
    }
    if (from == to) return out;

    const double x0 = model.tau_inv(from);
    const double xb = model.tau_inv(to);
    const bool upward = xb > x0;
    double horizon = options.horizon;
    if (!(horizon > 0.0)) horizon = 200.0 * ou_mean_passage(ou->rate(), x0, xb).mean;
    const std::size_t max_stride = *std::max_element(strides.begin(), strides.end());
    // run until every grid has seen the crossing or the horizon is passed
    const auto max_steps = static_cast<std::size_t>(std::ceil(horizon / options.dt_sim)) + max_stride;

    const double rho = std::exp(-ou->rate() * options.dt_sim);
    const double sd = std::sqrt(-std::expm1(-2.0 * ou->rate() * options.dt_sim));
    const std::size_t grids = strides.size();

    // times[p * grids + g]; censored paths keep the horizon time
    std::vector<double> times(options.paths * grids, 0.0);
    std::vector<char> censored(options.paths * grids, 0);

    auto run_path = [&](std::size_t p) {
        std::seed_seq seq{static_cast<std::uint64_t>(options.seed), static_cast<std::uint64_t>(p)};
        Rng rng(seq);
        std::normal_distribution<double> gauss;
        std::size_t pending = grids;
        std::vector<char> done(grids, 0);
        double x = x0;
        std::size_t step = 0;
        while (pending > 0 && step < max_steps) {
            x = rho * x + sd * gauss(rng);
            ++step;
            const bool crossed = upward ? x >= xb : x <= xb;
            if (!crossed) continue;
            for (std::size_t g = 0; g < grids; ++g) {
                if (!done[g] && step % strides[g] == 0) {
                    done[g] = 1;
                    --pending;
                    times[p * grids + g] = static_cast<double>(step) * options.dt_sim;
                }
            }
        }
        for (std::size_t g = 0; g < grids; ++g) {
            if (!done[g]) {
                censored[p * grids + g] = 1;
                times[p * grids + g] = static_cast<double>(step) * options.dt_sim;
            }
        }
    };

    unsigned threads = options.threads ? options.threads : std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, options.paths));
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
            for (std::size_t p = t; p < options.paths; p += threads) run_path(p);
        });
    }
    for (auto& th : pool) th.join();

    const double n = static_cast<double>(options.paths);
    for (std::size_t g = 0; g < grids; ++g) {
        double sum = 0.0;
        double sum2 = 0.0;
        for (std::size_t p = 0; p < options.paths; ++p) {
            double t = times[p * grids + g];
            sum += t;
            sum2 += t * t;
            out[g].censored += static_cast<std::size_t>(censored[p * grids + g]);
        }
        out[g].mean = sum / n;
        double var = std::max(sum2 / n - out[g].mean * out[g].mean, 0.0) * n / (n - 1.0);
        out[g].se = std::sqrt(var / n);
    }
    return out;
}

MonteCarloPassage monte_carlo_passage(const TransformedDiffusion& model, double from, double to,
                                      const MonteCarloPassageOptions& options) {
    return monte_carlo_passage_strides(model, from, to, {1}, options).front();
}

}  // namespace mmdiff
