#include "mmdiff/error.hpp"
#include "mmdiff/passage.hpp"

#include <boost/math/distributions/normal.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <random>

using namespace mmdiff;

namespace {

// sqrt(2 pi)/nu int_a^b Phi(x) e^{x^2/2} dx (or 1 - Phi) by a separate rule.
double ou_oracle(double nu, double a, double b, bool upward) {
    boost::math::normal_distribution<double> n01;
    auto f = [&](double x) {
        double tail = upward ? boost::math::cdf(n01, x) : boost::math::cdf(boost::math::complement(n01, x));
        return tail * std::exp(0.5 * x * x);
    };
    double v = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, a, b, 15, 1e-14);
    return std::sqrt(2.0 * M_PI) / nu * v;
}

TransformedDiffusion first_fit() {
    return TransformedDiffusion::ou(0.071, NormalMixture::bimodal(0.27, 25.41, 1.36, 29.02, 2.59));
}

TransformedDiffusion second_fit() {
    return TransformedDiffusion::ou(0.0015, NormalMixture::bimodal(0.55, 25.66, 0.54, 30.94, 1.22));
}

TransformedDiffusion symmetric_model() {
    return TransformedDiffusion::ou(1.0, NormalMixture::bimodal(0.5, -2.0, 1.0, 2.0, 1.0));
}

}  // namespace

TEST(Passage, EqualPointsGiveZero) {
    OrnsteinUhlenbeck ou(1.0);
    EXPECT_EQ(mean_passage_general(ou, 0.0, 0.0).mean, 0.0);
    EXPECT_EQ(ou_mean_passage(1.0, 0.3, 0.3).mean, 0.0);
    EXPECT_EQ(mean_passage_transformed(first_fit(), 27.0, 27.0).mean, 0.0);
    // and the limit b -> a is continuous
    EXPECT_LT(mean_passage_general(ou, 0.0, 1e-6).mean, 1e-5);
}

TEST(Passage, GeneralFormulaMatchesOuClosedForm) {
    for (double nu : {0.5, 1.0, 3.0}) {
        OrnsteinUhlenbeck ou(nu);
        PassageResult up = mean_passage_general(ou, -1.0, 1.0);
        PassageResult down = mean_passage_general(ou, 1.0, -1.0);
        EXPECT_TRUE(up.converged);
        EXPECT_NEAR(up.mean, ou_oracle(nu, -1.0, 1.0, true), 1e-6 * up.mean);
        EXPECT_NEAR(down.mean, ou_oracle(nu, -1.0, 1.0, false), 1e-6 * down.mean);
        EXPECT_NEAR(ou_mean_passage(nu, -1.0, 1.0).mean, up.mean, 1e-9 * up.mean);
    }
}

TEST(Passage, GeneralFormulaWithNumericScaleDensity) {
    // the scale density is integrated numerically here
    FunctionalDiffusion ou([](double x) { return -2.0 * x; }, [](double) { return 2.0; });
    PassageResult up = mean_passage_general(ou, -0.5, 1.2);
    EXPECT_NEAR(up.mean, ou_oracle(2.0, -0.5, 1.2, true), 1e-6 * up.mean);
}

TEST(Passage, ReflectionSymmetry) {
    OrnsteinUhlenbeck ou(1.3);
    double up = mean_passage_general(ou, -1.0, 1.0).mean;
    double down = mean_passage_general(ou, 1.0, -1.0).mean;
    EXPECT_NEAR(up, down, 1e-9 * up);
    EXPECT_NEAR(ou_mean_passage(1.3, -0.4, 0.9).mean, ou_mean_passage(1.3, 0.4, -0.9).mean, 1e-12);
}

TEST(Passage, AdditivityOfMonotonePassages) {
    OrnsteinUhlenbeck ou(0.7);
    const double a = -1.1, b = 0.2, c = 1.4;
    auto E = [&](double x, double y) { return mean_passage_general(ou, x, y).mean; };
    EXPECT_NEAR(E(a, c), E(a, b) + E(b, c), 1e-6 * E(a, c));
    EXPECT_NEAR(E(c, a), E(c, b) + E(b, a), 1e-6 * E(c, a));

    auto model = first_fit();
    auto T = [&](double x, double y) { return mean_passage_transformed(model, x, y).mean; };
    EXPECT_NEAR(T(24.0, 30.0), T(24.0, 27.0) + T(27.0, 30.0), 1e-6 * T(24.0, 30.0));
}

TEST(Passage, PositiveAndMonotoneInDistance) {
    auto model = symmetric_model();
    double prev = 0.0;
    for (double b = -1.5; b <= 3.0; b += 0.5) {
        double e = mean_passage_transformed(model, -2.0, b).mean;
        EXPECT_GT(e, prev);
        prev = e;
    }
    prev = 0.0;
    for (double b = 1.5; b >= -3.0; b -= 0.5) {
        double e = mean_passage_transformed(model, 2.0, b).mean;
        EXPECT_GT(e, prev);
        prev = e;
    }
}

TEST(Passage, TransformationInvariance) {
    auto model = first_fit();
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> level(22.0, 34.0);
    for (int i = 0; i < 20; ++i) {
        double a = level(rng);
        double b = level(rng);
        double direct = mean_passage_transformed(model, a, b).mean;
        double general = mean_passage_general(model.base(), model.tau_inv(a), model.tau_inv(b)).mean;
        EXPECT_NEAR(direct, general, 1e-5 * general) << a << " -> " << b;
    }
}

TEST(Passage, RateScaling) {
    NormalMixture target = NormalMixture::bimodal(0.27, 25.41, 1.36, 29.02, 2.59);
    auto slow = TransformedDiffusion::ou(0.071, target);
    auto fast = TransformedDiffusion::ou(0.142, target);
    for (auto [a, b] : {std::pair{25.41, 29.02}, std::pair{29.02, 25.41}}) {
        EXPECT_DOUBLE_EQ(mean_passage_transformed(fast, a, b).mean * 2.0,
                         mean_passage_transformed(slow, a, b).mean);
    }
}

TEST(Passage, FirstFitValues) {
    auto start = std::chrono::steady_clock::now();
    RegimePassage r = regime_passage(first_fit(), ModeConvention::ComponentMeans);
    double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    EXPECT_DOUBLE_EQ(r.lower, 25.41);
    EXPECT_DOUBLE_EQ(r.upper, 29.02);
    EXPECT_NEAR(r.up.mean, 18.5, 0.02 * 18.5);
    EXPECT_NEAR(r.down.mean, 28.8, 0.02 * 28.8);
    EXPECT_NEAR(r.ratio, r.down.mean / r.up.mean, 1e-15);
    EXPECT_LT(seconds, 1.0);
}

TEST(Passage, SecondFitValues) {
    RegimePassage r = regime_passage(second_fit(), ModeConvention::ComponentMeans);
    // ascent over [tau^{-1} 25.66, tau^{-1} 30.94] uses Phi, descent uses 1 - Phi
    EXPECT_NEAR(r.up.mean, 1320.0, 0.02 * 1320.0);
    EXPECT_NEAR(r.down.mean, 1138.0, 0.02 * 1138.0);
    EXPECT_NEAR(r.up.mean, ou_oracle(0.0015, second_fit().tau_inv(25.66), second_fit().tau_inv(30.94), true),
                1e-8 * r.up.mean);
}

TEST(Passage, DensityModesConvention) {
    auto model = symmetric_model();
    RegimePassage means = regime_passage(model, ModeConvention::ComponentMeans);
    RegimePassage modes = regime_passage(model, ModeConvention::DensityModes);
    EXPECT_DOUBLE_EQ(means.lower, -2.0);
    EXPECT_GT(modes.lower, -2.0);
    EXPECT_NEAR(modes.lower, -modes.upper, 1e-6);
    EXPECT_LT(modes.up.mean, means.up.mean);
    EXPECT_NEAR(modes.ratio, 1.0, 1e-6);

    auto unimodal = TransformedDiffusion::ou(1.0, NormalMixture::bimodal(0.5, -0.2, 1.0, 0.2, 1.0));
    EXPECT_THROW(regime_passage(unimodal, ModeConvention::DensityModes), std::invalid_argument);
}

TEST(Passage, AstronomicalFlag) {
    EXPECT_FALSE(ou_mean_passage(1.0, 0.0, 2.0).astronomical);
    PassageResult far = ou_mean_passage(1.0, 0.0, 9.0);
    EXPECT_TRUE(far.astronomical);
    EXPECT_GT(far.mean, 1e15);
}

TEST(Passage, OutsideStateSpaceAndSaturation) {
    FunctionalDiffusion positive([](double x) { return 1.0 - x; }, [](double x) { return std::sqrt(x); },
                                 0.0, std::numeric_limits<double>::infinity(), 1.0);
    EXPECT_THROW(mean_passage_general(positive, -1.0, 1.0), std::invalid_argument);
    EXPECT_THROW(mean_passage_transformed(first_fit(), 25.0, 1e4), NumericRangeError);
}

TEST(Passage, SevereScaleGrowthReportsPartialValue) {
    // s(x) = exp(x^4) overflows long before x = 5
    FunctionalDiffusion steep([](double x) { return -2.0 * x * x * x; }, [](double) { return 1.0; });
    PassageResult r = mean_passage_general(steep, 0.0, 6.0);
    EXPECT_FALSE(r.converged);
    EXPECT_FALSE(r.message.empty());
}

TEST(MonteCarloPassage, AgreesWithQuadrature) {
    auto model = symmetric_model();
    RegimePassage r = regime_passage(model, ModeConvention::DensityModes);
    MonteCarloPassageOptions opt;
    opt.dt_sim = 1e-3;
    opt.paths = 2000;
    opt.seed = 5;
    MonteCarloPassage mc = monte_carlo_passage(model, r.lower, r.upper, opt);
    EXPECT_EQ(mc.censored, 0u);
    EXPECT_LT(std::abs(mc.mean - r.up.mean), 3.0 * mc.se + 2.0 * std::sqrt(opt.dt_sim));
}

TEST(MonteCarloPassage, EqualPointsGiveZero) {
    MonteCarloPassage mc = monte_carlo_passage(symmetric_model(), 1.0, 1.0);
    EXPECT_EQ(mc.mean, 0.0);
    EXPECT_EQ(mc.se, 0.0);
}

TEST(MonteCarloPassage, BiasShrinksWithStep) {
    auto model = symmetric_model();
    RegimePassage r = regime_passage(model, ModeConvention::DensityModes);
    MonteCarloPassageOptions opt;
    opt.dt_sim = 2.5e-4;
    opt.paths = 4000;
    opt.seed = 9;
    auto est = monte_carlo_passage_strides(model, r.upper, r.lower, {16, 4, 1}, opt);
    ASSERT_EQ(est.size(), 3u);
    EXPECT_DOUBLE_EQ(est[0].dt, 4e-3);
    double e0 = std::abs(est[0].mean - r.down.mean);
    double e1 = std::abs(est[1].mean - r.down.mean);
    double e2 = std::abs(est[2].mean - r.down.mean);
    EXPECT_GT(e0, e1);
    EXPECT_GT(e1, e2);
    // coarse grids can only see a crossing later
    EXPECT_GE(est[0].mean, est[1].mean);
    EXPECT_GE(est[1].mean, est[2].mean);
}

TEST(MonteCarloPassage, ThreadCountDoesNotChangeResult) {
    auto model = symmetric_model();
    MonteCarloPassageOptions opt;
    opt.paths = 64;
    opt.seed = 3;
    opt.threads = 1;
    MonteCarloPassage one = monte_carlo_passage(model, -1.5, 1.5, opt);
    opt.threads = 7;
    MonteCarloPassage seven = monte_carlo_passage(model, -1.5, 1.5, opt);
    EXPECT_EQ(one.mean, seven.mean);
    EXPECT_EQ(one.se, seven.se);
}

TEST(MonteCarloPassage, CensoringIsCounted) {
    MonteCarloPassageOptions opt;
    opt.paths = 50;
    opt.horizon = 0.01;
    MonteCarloPassage mc = monte_carlo_passage(symmetric_model(), -2.0, 2.0, opt);
    EXPECT_EQ(mc.censored, 50u);
}
