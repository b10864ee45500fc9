#include "mmdiff/error.hpp"
#include "mmdiff/errorfit.hpp"
#include "mmdiff/normal.hpp"
#include "mmdiff/stats.hpp"
#include "mmdiff/transform.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

using namespace mmdiff;

namespace {

using GK = boost::math::quadrature::gauss_kronrod<double, 61>;

NormalMixture second_target() { return NormalMixture::bimodal(0.55, 25.66, 0.54, 30.94, 1.22); }
NormalMixture first_target() { return NormalMixture::bimodal(0.27, 25.41, 1.36, 29.02, 2.59); }

ErrorModelParams second_fit() { return {0.0015, second_target(), 0.43, 0.88}; }

// tau(x) for the target, from the tail that keeps precision
double tau_of(const NormalMixture& f, double x) {
    return x < 0.0 ? f.quantile(normal_cdf(x)) : f.quantile_upper(normal_sf(x));
}

// Corr(tau(X_0), tau(X_t)) by nested quadrature over (x, w) with
// X_t = r x + sqrt(1 - r^2) w.
double rho_y_quadrature(const NormalMixture& f, double r) {
    const double m = f.mean();
    const double s = std::sqrt(1.0 - r * r);
    auto outer = [&](double x) {
        const double a = tau_of(f, x) - m;
        auto inner = [&](double w) { return (tau_of(f, r * x + s * w) - m) * normal_pdf(w); };
        return a * normal_pdf(x) * GK::integrate(inner, -9.0, 9.0, 12, 1e-12);
    };
    return GK::integrate(outer, -9.0, 9.0, 12, 1e-11) / f.variance();
}

Path simulate_observed(const ErrorModelParams& p, std::size_t n, double dt, std::uint64_t seed) {
    auto model = TransformedDiffusion::ou(p.nu, p.target, true);
    Rng rng(seed);
    return simulate_with_error(model, p.kappa, p.gamma2, n, dt, rng).observed;
}

}  // namespace

TEST(MarginalZ, ZeroErrorGivesTargetDensity) {
    ErrorModelParams p{0.1, second_target(), 1.0, 0.0};
    for (double z : {24.0, 25.66, 28.0, 30.94, 33.0}) {
        EXPECT_DOUBLE_EQ(marginal_z_pdf(p, z), second_target().pdf(z));
    }
}

TEST(MarginalZ, IntegratesToOne) {
    ErrorModelParams p = second_fit();
    double total = GK::integrate([&](double z) { return marginal_z_pdf(p, z); }, 10.0, 45.0, 15, 1e-13);
    EXPECT_NEAR(total, 1.0, 1e-10);
}

TEST(MarginalZ, MatchesConvolution) {
    ErrorModelParams p = second_fit();
    const double g = std::sqrt(p.gamma2);
    for (double z : {25.66, 28.3, 30.94}) {
        double conv = GK::integrate(
            [&](double y) { return p.target.pdf(y) * normal_pdf(z - y, 0.0, g); }, 10.0, 45.0, 15, 1e-14);
        EXPECT_NEAR(marginal_z_pdf(p, z), conv, 1e-8 * conv) << z;
    }
}

TEST(MarginalZ, VarianceIdentityByMonteCarlo) {
    ErrorModelParams p{0.071, first_target(), 0.43, 0.88};
    Path z = simulate_observed(p, 1000000, 1.0, 17);
    double v = sample_variance(z.values);
    double expected = 0.27 * (1.36 * 1.36 + 0.88) + 0.73 * (2.59 * 2.59 + 0.88) +
                      0.27 * 0.73 * (25.41 - 29.02) * (25.41 - 29.02);
    EXPECT_NEAR(marginal_z_variance(p), expected, 1e-12);
    EXPECT_NEAR(v, expected, 0.01 * expected);
}

TEST(BetaFraction, Limits) {
    ErrorModelParams p = second_fit();
    p.gamma2 = 0.0;
    EXPECT_EQ(beta_fraction(p), 0.0);
    p.gamma2 = 1e12;
    EXPECT_GT(beta_fraction(p), 1.0 - 1e-10);
    p.gamma2 = std::numeric_limits<double>::infinity();
    EXPECT_EQ(beta_fraction(p), 1.0);
}

TEST(BetaFraction, SecondFitValue) {
    // 0.88 / (0.55 * 1.1716 + 0.45 * 2.3684 + 0.2475 * 27.8784) = 0.88 / 8.610064
    const double denominator = 0.55 * (0.2916 + 0.88) + 0.45 * (1.4884 + 0.88) + 0.55 * 0.45 * 5.28 * 5.28;
    EXPECT_NEAR(denominator, 8.610064, 1e-9);
    EXPECT_NEAR(beta_fraction(second_fit()), 0.88 / denominator, 1e-12);
    EXPECT_NEAR(beta_fraction(second_fit()), 0.102, 5e-4);
}

TEST(RhoZ, SpecialCases) {
    EXPECT_DOUBLE_EQ(rho_z(0.3, 2.0, 0.0, 1.0), 1.0);
    EXPECT_DOUBLE_EQ(rho_z(0.0, 2.0, 5.0, 0.37), 0.37);
    // nu << kappa: at long lags only the slow part survives
    HermiteAutocorrelation h(second_target());
    const double t = 60.0;
    EXPECT_NEAR(rho_z(0.1, 0.43, t, h.at(0.0015, t)), 0.9 * h.at(0.0015, t), 1e-10);
}

TEST(HermiteAcf, IdentityTargetIsExponential) {
    HermiteAutocorrelation h(NormalMixture::standard_normal());
    for (double r : {0.0, 0.2, 0.7, 0.99, 1.0}) EXPECT_NEAR(h(r), r, 1e-9);
}

TEST(HermiteAcf, MatchesQuadratureOracle) {
    for (const auto& f : {first_target(), second_target()}) {
        HermiteAutocorrelation h(f);
        EXPECT_NEAR(h(1.0), 1.0, 1e-9);
        for (double r : {0.3, 0.8, 0.95}) {
            EXPECT_NEAR(h(r), rho_y_quadrature(f, r), 2e-6) << r;
        }
    }
}

TEST(HermiteAcf, DerivativeMatchesDifference) {
    HermiteAutocorrelation h(first_target());
    for (double r : {0.2, 0.6, 0.9}) {
        double fd = (h(r + 1e-5) - h(r - 1e-5)) / 2e-5;
        EXPECT_NEAR(h.derivative(r), fd, 1e-6);
    }
}

TEST(SimulateRhoY, LagZeroAndIdentityTarget) {
    auto model = TransformedDiffusion::ou(0.2, NormalMixture::standard_normal());
    Rng rng(3);
    std::vector<std::size_t> lags{0, 1, 2, 5, 10, 20};
    RhoYTable t = simulate_rho_y(model, lags, 200000, 0.5, rng);
    EXPECT_EQ(t.rho[0], 1.0);
    for (std::size_t i = 1; i < lags.size(); ++i) {
        double exact = std::exp(-0.2 * 0.5 * static_cast<double>(lags[i]));
        EXPECT_LT(std::abs(t.rho[i] - exact), 4.0 * t.se[i]) << lags[i];
        EXPECT_GT(t.se[i], 0.0);
    }
    std::vector<std::size_t> too_long{30000};
    EXPECT_THROW(simulate_rho_y(model, too_long, 200000, 0.5, rng), std::invalid_argument);
}

TEST(SimulateRhoY, NonincreasingAndConsistentWithSeries) {
    std::vector<std::size_t> lags{1, 2, 5, 10, 20, 50, 100};
    struct Case { double nu; NormalMixture f; double dt; };
    for (const auto& c : {Case{0.071, first_target(), 1.0}, Case{0.0015, second_target(), 20.0}}) {
        auto model = TransformedDiffusion::ou(c.nu, c.f, true);
        Rng rng(8);
        RhoYTable t = simulate_rho_y(model, lags, 400000, c.dt, rng);
        HermiteAutocorrelation h(c.f);
        for (std::size_t i = 0; i < lags.size(); ++i) {
            double exact = h.at(c.nu, c.dt * static_cast<double>(lags[i]));
            EXPECT_LT(std::abs(t.rho[i] - exact), 4.0 * t.se[i]) << lags[i];
            if (i > 0) {
                EXPECT_LT(t.rho[i], t.rho[i - 1] + 4.0 * t.se[i]);
            }
        }
    }
}

TEST(ErrorModel, AutocorrelationDecomposition) {
    ErrorModelParams p = second_fit();
    Path z = simulate_observed(p, 1000000, 1.0, 23);
    std::vector<std::size_t> lags{1, 2, 5, 10, 50};
    AutocorrelationEstimate est = autocorrelation_with_se(z.values, lags);
    HermiteAutocorrelation h(p.target);
    const double beta = beta_fraction(p);
    for (std::size_t i = 0; i < lags.size(); ++i) {
        double t = static_cast<double>(lags[i]);
        double model = rho_z(beta, p.kappa, t, h.at(p.nu, t));
        EXPECT_LT(std::abs(est.rho[i] - model), 4.0 * est.se[i]) << lags[i];
    }
}

TEST(FitMarginal, RejectsShortAndConstantData) {
    Path shortp{1.0, std::vector<double>(499, 1.0), {}};
    EXPECT_THROW(fit_marginal(shortp), std::invalid_argument);
    Path flat{1.0, std::vector<double>(1000, 2.0), {}};
    EXPECT_THROW(fit_marginal(flat), ConvergenceError);
}

TEST(FitMarginal, RecoversInflatedVariances) {
    ErrorModelParams p = second_fit();
    Path z = simulate_observed(p, 20000, 1.0, 31);
    MarginalFit m = fit_marginal(z);
    ASSERT_EQ(m.estimates.size(), 5);
    EXPECT_EQ(m.names[3], "s1^2");
    EXPECT_LT(m.estimates[1], m.estimates[2]);
    EXPECT_LT(std::abs(m.estimates[3] - (0.2916 + 0.88)), 3.0 * m.std_errors[3]);
    EXPECT_LT(std::abs(m.estimates[4] - (1.4884 + 0.88)), 3.0 * m.std_errors[4]);
    EXPECT_GT(m.bandwidth, 100u);
}

TEST(FitMarginal, NoErrorGivesTargetVariances) {
    ErrorModelParams p{0.071, first_target(), 1.0, 0.0};
    Path z = simulate_observed(p, 20000, 1.0, 5);
    MarginalFit m = fit_marginal(z);
    EXPECT_LT(std::abs(m.estimates[3] - 1.36 * 1.36), 3.0 * m.std_errors[3]);
    EXPECT_LT(std::abs(m.estimates[4] - 2.59 * 2.59), 3.0 * m.std_errors[4]);
}

TEST(FitAcf, RecoversSecondFitParameters) {
    ErrorModelParams p = second_fit();
    Path z = simulate_observed(p, 20000, 1.0, 41);
    ErrorFitOptions opt;
    opt.bootstrap = 50;
    ErrorModelFit fit = fit_error_model(z, opt);
    const auto& r = fit.result;
    ASSERT_EQ(r.theta.size(), 8);
    EXPECT_EQ(r.names[6], "kappa");
    EXPECT_EQ(fit.bootstrap_failures, 0u);
    EXPECT_LT(std::abs(r.theta[0] - 0.0015), 3.0 * r.std_errors[0]);
    EXPECT_LT(std::abs(r.theta[6] - 0.43), 3.0 * r.std_errors[6]);
    EXPECT_LT(std::abs(r.theta[7] - 0.88), 3.0 * r.std_errors[7]);
    EXPECT_FALSE(fit.acf.weakly_identified);

    // the error variance cannot exceed an inflated variance
    EXPECT_LE(fit.acf.gamma2, std::min(fit.marginal.estimates[3], fit.marginal.estimates[4]));

    // short-lag reading: removing the fast part leaves a curve whose
    // extrapolation to t = 0 is 1 - beta
    double sx = 0, sy = 0, sxx = 0, sxy = 0, n = 0;
    for (std::size_t j = 20; j <= 100; ++j) {
        double t = static_cast<double>(j);
        double slow = fit.acf.empirical[j] - fit.acf.beta * std::exp(-fit.acf.kappa * t);
        sx += t; sy += slow; sxx += t * t; sxy += t * slow; n += 1;
    }
    double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    double intercept = (sy - slope * sx) / n;
    EXPECT_NEAR(intercept, 1.0 - fit.acf.beta, 0.02);
}

TEST(FitAcf, ErrorOnlyAutocorrelationDrivesBetaToOne) {
    MarginalFit m;
    m.inflated = NormalMixture::bimodal(0.5, 0.0, 1.0, 0.0, 1.0);
    std::vector<double> acf(101);
    for (std::size_t j = 0; j <= 100; ++j) acf[j] = std::exp(-0.3 * static_cast<double>(j));
    AcfFit a = fit_acf(acf, 1.0, m);
    EXPECT_GT(a.beta, 0.97);
    EXPECT_NEAR(a.kappa, 0.3, 0.03);
}

TEST(FitAcf, FlatBetaIsFlagged) {
    // a Gaussian latent process and kappa = nu leave beta unidentified
    MarginalFit m;
    m.inflated = NormalMixture::bimodal(0.5, 0.0, 1.0, 0.0, 1.0);
    std::vector<double> acf(101);
    for (std::size_t j = 0; j <= 100; ++j) acf[j] = std::exp(-0.02 * static_cast<double>(j));
    AcfFit a = fit_acf(acf, 1.0, m);
    EXPECT_LT(a.sum_of_squares, 1e-8);
    EXPECT_TRUE(a.weakly_identified);
}

TEST(FitAcf, SimulatedTablesAgreeWithSeries) {
    ErrorModelParams p = second_fit();
    Path z = simulate_observed(p, 20000, 1.0, 41);
    MarginalFit m = fit_marginal(z);
    AcfFit exact = fit_acf(z, m);
    AcfFitOptions opt;
    opt.method = RhoYMethod::Simulated;
    opt.simulation_length = 200000;
    opt.start = std::array<double, 3>{exact.nu, exact.kappa, exact.beta};
    AcfFit sim = fit_acf(z, m, opt);
    EXPECT_NEAR(sim.kappa, exact.kappa, 0.1 * exact.kappa);
    EXPECT_NEAR(sim.beta, exact.beta, 0.1 * exact.beta);
    EXPECT_NEAR(sim.nu, exact.nu, 0.5 * exact.nu);
}

TEST(FitAcf, Preconditions) {
    MarginalFit m;
    std::vector<double> acf(101, 0.5);
    AcfFitOptions opt;
    opt.lags = 10;
    EXPECT_THROW(fit_acf(acf, 1.0, m, opt), std::invalid_argument);
    EXPECT_THROW(fit_acf(std::span<const double>(acf).first(50), 1.0, m), std::invalid_argument);
}
