#include "mmdiff/error.hpp"
#include "mmdiff/quadrature.hpp"
#include "mmdiff/stats.hpp"
#include "mmdiff/transform.hpp"

#include <boost/math/distributions/normal.hpp>
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

using namespace mmdiff;

namespace {

NormalMixture first_fit() { return NormalMixture::bimodal(0.27, 25.41, 1.36, 29.02, 2.59); }
NormalMixture second_fit() { return NormalMixture::bimodal(0.55, 25.66, 0.54, 30.94, 1.22); }
NormalMixture symmetric(double mu = 1.0) { return NormalMixture::bimodal(0.5, -mu, 1.0, mu, 1.0); }

// Phi^{-1}(F(y)) through an unrelated normal implementation.
double ref_tau_inv(double alpha, double m1, double s1, double m2, double s2, double y) {
    boost::math::normal c1(m1, s1);
    boost::math::normal c2(m2, s2);
    double p = alpha * boost::math::cdf(c1, y) + (1.0 - alpha) * boost::math::cdf(c2, y);
    return boost::math::quantile(boost::math::normal(), p);
}

std::vector<NormalMixture> parameter_sets() {
    return {first_fit(), second_fit(), symmetric(1.5), NormalMixture::bimodal(0.75, -2, 1, 2, 1),
            NormalMixture({{0.2, -4.0, 1.0}, {0.5, 0.0, 0.7}, {0.3, 5.0, 1.2}})};
}

}  // namespace

TEST(Tau, SymmetricTargetFixesZero) {
    auto t = TransformedDiffusion::ou(1.0, symmetric());
    EXPECT_NEAR(t.tau(0.0), 0.0, 1e-14);
    EXPECT_NEAR(t.tau_inv(0.0), 0.0, 1e-14);
}

TEST(Tau, FirstFitInverseValues) {
    auto t = TransformedDiffusion::ou(0.071, first_fit());
    double lo = ref_tau_inv(0.27, 25.41, 1.36, 29.02, 2.59, 25.41);
    double hi = ref_tau_inv(0.27, 25.41, 1.36, 29.02, 2.59, 29.02);
    EXPECT_NEAR(t.tau_inv(25.41), lo, 1e-12);
    EXPECT_NEAR(t.tau_inv(29.02), hi, 1e-12);
    EXPECT_NEAR(lo, -0.861, 1e-3);
    EXPECT_NEAR(hi, 0.342, 1e-3);
}

TEST(Tau, RoundTrips) {
    auto t = TransformedDiffusion::ou(0.071, first_fit());
    for (double y : {24.0, 27.0, 31.0}) EXPECT_NEAR(t.tau(t.tau_inv(y)), y, 1e-8);
    for (double x : {-7.5, -1.0, 0.0, 2.2, 7.5}) EXPECT_NEAR(t.tau_inv(t.tau(x)), x, 1e-8);
}

TEST(Tau, StrictlyIncreasing) {
    auto t = TransformedDiffusion::ou(1.0, second_fit());
    // beyond |x| = 7.9 the probability clamp flattens tau
    double prev = t.tau(-7.5);
    for (int i = 1; i <= 400; ++i) {
        double v = t.tau(-7.5 + 15.0 * i / 400.0);
        EXPECT_GT(v, prev);
        prev = v;
    }
}

TEST(Tau, TailsClampAndCount) {
    auto t = TransformedDiffusion::ou(1.0, symmetric());
    EXPECT_EQ(t.clamp_count(), 0u);
    double far = t.tau(40.0);
    EXPECT_TRUE(std::isfinite(far));
    EXPECT_EQ(t.clamp_count(), 1u);
    EXPECT_DOUBLE_EQ(far, t.target().quantile_upper(TransformedDiffusion::kClamp));
    EXPECT_THROW(t.tau_inv(1e6), NumericRangeError);
}

TEST(Tau, TableMatchesExactMap) {
    auto exact = TransformedDiffusion::ou(0.071, first_fit());
    auto fast = TransformedDiffusion::ou(0.071, first_fit(), true);
    double worst = 0.0;
    for (int i = 0; i <= 20000; ++i) {
        double x = -6.3 + 12.6 * i / 20000.0;
        worst = std::max(worst, std::abs(fast.tau_fast(x) - exact.tau(x)));
    }
    EXPECT_LT(worst, 1e-7);
    EXPECT_DOUBLE_EQ(fast.tau_fast(9.0), exact.tau(9.0));
}

TEST(Tau, DerivativesMatchFiniteDifferences) {
    auto t = TransformedDiffusion::ou(0.5, first_fit());
    const double h = 1e-4;
    for (double x : {-2.0, -0.3, 0.4, 1.7}) {
        double d1 = (t.tau(x + h) - t.tau(x - h)) / (2 * h);
        double d2 = (t.tau(x + h) - 2 * t.tau(x) + t.tau(x - h)) / (h * h);
        EXPECT_NEAR(t.tau_prime(x), d1, 1e-6 * std::abs(d1));
        EXPECT_NEAR(t.tau_second(x), d2, 1e-4 * (1.0 + std::abs(d2)));
    }
}

TEST(Coefficients, IdentityTransformIsOu) {
    auto t = TransformedDiffusion::ou(0.7, NormalMixture::standard_normal());
    for (double y : {-1.5, 0.0, 2.0}) {
        auto c = t.coefficients(y);
        EXPECT_NEAR(c.drift, -0.7 * y, 1e-12);
        EXPECT_NEAR(c.diffusion, std::sqrt(1.4), 1e-12);
    }
}

TEST(Coefficients, MatchClosedFormOuDisplay) {
    const double nu = 0.071;
    auto target = first_fit();
    auto t = TransformedDiffusion::ou(nu, target);
    for (double y : {25.0, 27.0, 30.0}) {
        double x = ref_tau_inv(0.27, 25.41, 1.36, 29.02, 2.59, y);
        double phi = std::exp(-0.5 * x * x) / std::sqrt(2 * std::numbers::pi);
        double f = target.pdf(y);
        double fp = target.pdf_derivative(y);
        double drift = -2 * nu * (x * phi / f + phi * phi * fp / (2 * f * f * f));
        double diff = std::sqrt(2 * nu) * phi / f;
        auto c = t.coefficients(y);
        EXPECT_NEAR(c.drift, drift, 1e-9 * std::abs(drift));
        EXPECT_NEAR(c.diffusion, diff, 1e-9 * diff);
    }
}

TEST(Coefficients, MatchGroupedGeneralDisplay) {
    auto t = TransformedDiffusion::ou(0.3, second_fit());
    const auto& b = t.base();
    for (double y : {25.0, 27.5, 31.0}) {
        double x = t.tau_inv(y);
        double pi = b.stationary_pdf(x);
        double pip = b.stationary_pdf_derivative(x);
        double mu = b.drift(x);
        double s2 = std::pow(b.diffusion(x), 2);
        double f = t.target().pdf(y);
        double fp = t.target().pdf_derivative(y);
        double grouped = (2 * mu * pi + s2 * pip) / (2 * f) - s2 * pi * pi * fp / (2 * f * f * f);
        EXPECT_NEAR(t.coefficients(y).drift, grouped, 1e-9 * (1.0 + std::abs(grouped)));
    }
}

TEST(Coefficients, ItoFiniteDifferenceCrossCheck) {
    Rng rng(5);
    std::uniform_real_distribution<double> u(0.02, 0.98);
    const double h = 1e-4;
    for (const auto& target : parameter_sets()) {
        auto t = TransformedDiffusion::ou(0.4, target);
        for (int k = 0; k < 20; ++k) {
            double x = t.base().stationary_quantile(u(rng));
            double y = t.tau(x);
            double d1 = (t.tau(x + h) - t.tau(x - h)) / (2 * h);
            double d2 = (t.tau(x + h) - 2 * t.tau(x) + t.tau(x - h)) / (h * h);
            double sig = t.base().diffusion(x);
            double drift = d1 * t.base().drift(x) + 0.5 * d2 * sig * sig;
            auto c = t.coefficients(y);
            // absolute floor for drifts that cross zero
            EXPECT_NEAR(c.drift, drift, 1e-4 * std::abs(drift) + 1e-6);
            EXPECT_NEAR(c.diffusion, sig * d1, 1e-4 * sig * d1);
        }
    }
}

TEST(Coefficients, RejectsNegligibleDensity) {
    auto t = TransformedDiffusion::ou(1.0, symmetric());
    EXPECT_THROW(t.coefficients(80.0), NumericRangeError);
}

TEST(Coefficients, DiffusionPeaksBetweenModes) {
    for (double mu : {1.05, 1.5, 2.0}) {
        auto target = symmetric(mu);
        auto modes = target.modes();
        ASSERT_EQ(modes.size(), 2u) << mu;
        auto t = TransformedDiffusion::ou(1.0, target);
        double best_y = 0.0;
        double best = -1.0;
        for (int i = 0; i <= 4000; ++i) {
            double y = -5.0 + 10.0 * i / 4000.0;
            double s = t.coefficients(y).diffusion;
            if (s > best) {
                best = s;
                best_y = y;
            }
        }
        EXPECT_GT(best_y, modes[0]);
        EXPECT_LT(best_y, modes[1]);
    }
}

TEST(TransitionDensity, IntegratesToOne) {
    auto target = symmetric(1.5);
    auto t = TransformedDiffusion::ou(1.0, target);
    double y0 = target.modes()[0];
    auto r = integrate([&](double y) { return t.transition_density(y, y0, 0.5); }, -15.0, 15.0);
    EXPECT_NEAR(r.value, 1.0, 1e-6);
}

TEST(TransitionDensity, StationaryLimitAndSymmetry) {
    auto t = TransformedDiffusion::ou(1.0, symmetric(1.5));
    for (double y : {-2.0, 0.3, 1.4}) {
        EXPECT_NEAR(t.transition_density(y, 1.0, 60.0), t.target().pdf(y), 1e-12);
        EXPECT_NEAR(t.transition_density(y, 0.7, 0.4), t.transition_density(-y, -0.7, 0.4), 1e-12);
    }
}

TEST(TransitionDensity, MatchesChangeOfVariables) {
    auto t = TransformedDiffusion::ou(0.071, first_fit());
    for (double y : {24.0, 26.5, 30.0}) {
        double x = ref_tau_inv(0.27, 25.41, 1.36, 29.02, 2.59, y);
        double x0 = ref_tau_inv(0.27, 25.41, 1.36, 29.02, 2.59, 27.0);
        double m = std::exp(-0.071) * x0;
        double v = -std::expm1(-0.142);
        boost::math::normal kernel(m, std::sqrt(v));
        double pi = boost::math::pdf(boost::math::normal(), x);
        double expected = boost::math::pdf(kernel, x) * t.target().pdf(y) / pi;
        EXPECT_NEAR(t.transition_density(y, 27.0, 1.0), expected, 1e-10 * expected);
    }
}

TEST(TransitionDensity, ChapmanKolmogorovAtRandomConfigurations) {
    Rng rng(17);
    std::uniform_real_distribution<double> u(0.1, 0.9);
    std::uniform_real_distribution<double> rate(0.2, 2.0);
    std::uniform_real_distribution<double> step(0.1, 1.0);
    auto sets = parameter_sets();
    for (int k = 0; k < 10; ++k) {
        const auto& target = sets[static_cast<std::size_t>(k) % sets.size()];
        auto t = TransformedDiffusion::ou(rate(rng), target);
        double y0 = target.quantile(u(rng));
        double y = target.quantile(u(rng));
        double dt = step(rng);
        double lo = target.quantile(1e-13);
        double hi = target.quantile_upper(1e-13);
        double direct = t.transition_density(y, y0, 2 * dt);
        auto r = integrate(
            [&](double z) { return t.transition_density(y, z, dt) * t.transition_density(z, y0, dt); },
            lo, hi, 1e-10);
        EXPECT_NEAR(r.value, direct, 1e-6 * std::max(1.0, direct)) << k;
        auto mass = integrate([&](double z) { return t.transition_density(z, y0, dt); }, lo, hi, 1e-10);
        EXPECT_NEAR(mass.value, 1.0, 1e-6) << k;
    }
}

TEST(TauGradient, MatchesFiniteDifferenceInTargetParameters) {
    auto target = second_fit();
    auto t = TransformedDiffusion::ou(0.0015, target);
    Eigen::VectorXd p = target.parameters();
    for (double y : {25.0, 28.0, 31.5}) {
        auto g = t.grad_tau_inv_target(y);
        for (Eigen::Index i = 0; i < p.size(); ++i) {
            const double h = 1e-6;
            Eigen::VectorXd up = p;
            Eigen::VectorXd dn = p;
            up[i] += h;
            dn[i] -= h;
            auto tu = TransformedDiffusion::ou(0.0015, NormalMixture::from_parameters(
                                                           {up.data(), 5}, 2));
            auto td = TransformedDiffusion::ou(0.0015, NormalMixture::from_parameters(
                                                           {dn.data(), 5}, 2));
            double fd = (tu.tau_inv(y) - td.tau_inv(y)) / (2 * h);
            EXPECT_NEAR(g[i], fd, 1e-5 * std::abs(fd) + 1e-8);
        }
    }
}

TEST(Lamperti, BaseCoordinateIsLinear) {
    auto t = TransformedDiffusion::ou(2.0, first_fit());
    EXPECT_NEAR(t.lamperti(1.3).base, 1.3 / 2.0, 1e-12);
}

TEST(Lamperti, TransformedCoordinateEqualsBase) {
    auto a = TransformedDiffusion::ou(1.0, first_fit());
    auto b = TransformedDiffusion::ou(1.0, symmetric(2.0));
    auto la = a.lamperti(1.0);
    auto lb = b.lamperti(1.0);
    EXPECT_NEAR(la.transformed, 1.0 / std::sqrt(2.0), 1e-4 / std::sqrt(2.0));
    EXPECT_NEAR(lb.transformed, la.transformed, 1e-4 * la.transformed);
    EXPECT_NEAR(a.lamperti(-1.7).transformed, -1.7 / std::sqrt(2.0), 1e-4);
}

TEST(InvariantDensity, TauOfNormalDrawsHasTargetLaw) {
    auto t = TransformedDiffusion::ou(1.0, first_fit(), true);
    Rng rng(3);
    std::normal_distribution<double> z(0.0, 1.0);
    std::vector<double> y(200000);
    for (auto& v : y) v = t.tau_fast(z(rng));
    double ks = ks_statistic(y, [&](double v) { return t.target().cdf(v); });
    EXPECT_LT(ks, ks_critical_value(y.size(), 0.001));
}
