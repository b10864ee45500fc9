#include "mmdiff/error.hpp"
#include "mmdiff/pure_diffusion.hpp"
#include "mmdiff/quadrature.hpp"
#include "mmdiff/simulate.hpp"
#include "mmdiff/stats.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

using namespace mmdiff;

namespace {

NormalMixture first_fit() { return NormalMixture::bimodal(0.27, 25.41, 1.36, 29.02, 2.59); }

SdeCoefficients ou_sde(double nu) {
    return {[nu](double x) { return -nu * x; }, [nu](double) { return std::sqrt(2 * nu); }};
}

}  // namespace

TEST(ExactSimulation, SinglePointPathIsStart) {
    auto t = TransformedDiffusion::ou(0.071, first_fit());
    auto p = simulate_transformed_ou(t, 1, 1.0, 26.3, std::uint64_t{1});
    ASSERT_EQ(p.size(), 1u);
    EXPECT_DOUBLE_EQ(p.values[0], 26.3);
    EXPECT_EQ(p.seed, std::optional<std::uint64_t>(1));
}

TEST(ExactSimulation, SameSeedIsBitIdentical) {
    auto t = TransformedDiffusion::ou(0.071, first_fit(), true);
    auto a = simulate_transformed_ou(t, 5000, 1.0, StationaryStart{}, std::uint64_t{42});
    auto b = simulate_transformed_ou(t, 5000, 1.0, StationaryStart{}, std::uint64_t{42});
    EXPECT_EQ(a.values, b.values);
    auto c = simulate_transformed_ou(t, 5000, 1.0, StationaryStart{}, std::uint64_t{43});
    EXPECT_NE(a.values, c.values);
}

TEST(ExactSimulation, StationaryMeanMatchesMixtureMean) {
    auto target = first_fit();
    auto t = TransformedDiffusion::ou(0.071, target, true);
    auto p = simulate_transformed_ou(t, 1000000, 1.0, StationaryStart{}, std::uint64_t{9});
    double mean = sample_mean(p.values);
    // effective sample size under the OU correlation e^{-nu}
    double r = std::exp(-0.071);
    double n_eff = 1e6 * (1 - r) / (1 + r);
    EXPECT_NEAR(mean, target.mean(), 4.0 * std::sqrt(target.variance() / n_eff));
}

TEST(ExactSimulation, LongPathEmpiricalCdfConverges) {
    auto target = first_fit();
    auto t = TransformedDiffusion::ou(1.0, target, true);
    auto p = simulate_transformed_ou(t, 1000000, 0.1, StationaryStart{}, std::uint64_t{10});
    EXPECT_LT(ks_statistic(p.values, [&](double y) { return target.cdf(y); }), 0.01);
}

TEST(ExactSimulation, BaseAutocorrelationIsExponential) {
    auto t = TransformedDiffusion::ou(0.5, first_fit(), true);
    auto p = simulate_transformed_ou(t, 200000, 1.0, StationaryStart{}, std::uint64_t{12});
    std::vector<double> x(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) x[i] = t.tau_inv(p.values[i]);
    auto acf = autocorrelation(x, 3);
    for (int lag = 1; lag <= 3; ++lag) {
        EXPECT_NEAR(acf[static_cast<std::size_t>(lag)], std::exp(-0.5 * lag), 0.01);
    }
}

TEST(Euler, ZeroCoefficientsGiveConstantPath) {
    Rng rng(1);
    SdeCoefficients zero{[](double) { return 0.0; }, [](double) { return 0.0; }};
    auto p = simulate_euler(zero, 100, 0.5, 4, 2.5, rng);
    for (double v : p.values) EXPECT_DOUBLE_EQ(v, 2.5);
}

TEST(Euler, RejectsBadArguments) {
    Rng rng(1);
    EXPECT_THROW(simulate_euler(ou_sde(1.0), 10, 1.0, 0, 0.0, rng), std::invalid_argument);
    EXPECT_THROW(simulate_euler(ou_sde(1.0), 10, -1.0, 4, 0.0, rng), std::invalid_argument);
}

TEST(Euler, DivergenceReportsIndex) {
    Rng rng(1);
    SdeCoefficients blowup{[](double x) { return x * x * x; }, [](double) { return 0.0; }};
    try {
        simulate_euler(blowup, 100, 1.0, 1, 10.0, rng);
        FAIL() << "expected divergence";
    } catch (const NumericRangeError& e) {
        ASSERT_TRUE(e.index().has_value());
        EXPECT_GE(*e.index(), 1u);
        EXPECT_LT(*e.index(), 100u);
    }
}

TEST(Euler, OuStationaryVariance) {
    Rng rng(21);
    auto p = simulate_euler(ou_sde(1.0), 200000, 0.1, 64, 0.0, rng);
    EXPECT_NEAR(sample_variance(p.values), 1.0, 0.02);
}

TEST(Euler, DoubleWellInvariantDensity) {
    const double theta = 1.0;
    const double sigma = std::sqrt(2.0);
    auto h = [&](double y) { return std::exp(-2.0 * double_well_potential(theta, y) / (sigma * sigma)); };
    double norm = integrate(h, -6.0, 6.0).value;
    auto cdf = [&](double y) {
        if (y <= -6.0) return 0.0;
        return std::min(1.0, integrate(h, -6.0, y, 1e-10).value / norm);
    };
    Rng rng(22);
    auto p = simulate_euler(double_well_model(theta, sigma), 200000, 0.5, 200, 1.0, rng);
    EXPECT_LT(ks_statistic(p.values, cdf), 0.02);
}

TEST(Euler, MatchesExactTransformedMarginal) {
    auto target = NormalMixture::bimodal(0.5, -1.5, 1.0, 1.5, 1.0);
    auto t = TransformedDiffusion::ou(1.0, target, true);
    Rng rng(23);
    auto exact = simulate_transformed_ou(t, 100000, 0.5, StationaryStart{}, rng);
    auto euler = simulate_euler(transformed_model(t), 100000, 0.5, 128, 0.0, rng);
    EXPECT_LT(ks_two_sample(exact.values, euler.values), 0.01);
}

TEST(ErrorModel, ZeroNoiseLeavesLatentPath) {
    auto t = TransformedDiffusion::ou(0.071, first_fit());
    Rng rng(31);
    auto e = simulate_with_error(t, 1.0, 0.0, 1000, 1.0, rng);
    EXPECT_EQ(e.observed.values, e.latent.values);
}

TEST(ErrorModel, FastErrorIsWhite) {
    auto t = TransformedDiffusion::ou(0.071, first_fit(), true);
    Rng rng(32);
    const std::size_t n = 100000;
    auto e = simulate_with_error(t, 50.0, 0.5, n, 1.0, rng);
    auto acf = autocorrelation(e.error.values, 1);
    EXPECT_LT(std::abs(acf[1]), 3.0 / std::sqrt(static_cast<double>(n)));
    EXPECT_NEAR(sample_variance(e.error.values), 0.5, 4 * 0.5 * std::sqrt(2.0 / n));
}

TEST(ErrorModel, ObservedVarianceAddsNoise) {
    auto target = first_fit();
    auto t = TransformedDiffusion::ou(1.0, target, true);
    Rng rng(33);
    auto e = simulate_with_error(t, 2.0, 0.8, 1000000, 1.0, rng);
    double expected = target.variance() + 0.8;
    EXPECT_NEAR(sample_variance(e.observed.values), expected, 0.02 * expected);
}

TEST(PathCsv, HeaderAndRows) {
    Path p;
    p.dt = 0.5;
    p.values = {1.0, 2.0};
    std::ostringstream out;
    write_path_csv(out, p);
    EXPECT_EQ(out.str(), "index,time,value\n0,0,1\n1,0.5,2\n");
}

TEST(PureDiffusion, CoefficientsAndErrors) {
    auto target = first_fit();
    auto c = pure_diffusion_coefficients(target, 2.0, 27.0);
    EXPECT_DOUBLE_EQ(c.drift, 0.0);
    EXPECT_NEAR(c.diffusion, 2.0 / std::sqrt(target.pdf(27.0)), 1e-14);
    EXPECT_THROW(pure_diffusion_coefficients(target, 2.0, 500.0), NumericRangeError);
    EXPECT_THROW(pure_diffusion_coefficients(target, 0.0, 27.0), std::invalid_argument);
}

TEST(PureDiffusion, ZeroFluxBalanceGivesTargetLaw) {
    // with zero drift the stationary density p solves (sigma^2 p)' = 0
    auto target = NormalMixture::bimodal(0.5, -1.5, 1.0, 1.5, 1.0);
    for (double y : {-4.0, -1.5, 0.0, 0.7, 3.0}) {
        double s = pure_diffusion_coefficients(target, 0.8, y).diffusion;
        EXPECT_NEAR(s * s * target.pdf(y), 0.64, 1e-12);
    }
}

TEST(PureDiffusion, CoefficientMinimalAtModesAndLinearInSigma) {
    auto target = NormalMixture::bimodal(0.5, -1.5, 1.0, 1.5, 1.0);
    auto modes = target.modes();
    ASSERT_EQ(modes.size(), 2u);
    double best_y = 0.0;
    double best = INFINITY;
    for (int i = 0; i <= 3000; ++i) {
        double y = 0.2 + 2.8 * i / 3000.0;
        double s = pure_diffusion_coefficients(target, 1.0, y).diffusion;
        if (s < best) {
            best = s;
            best_y = y;
        }
    }
    EXPECT_NEAR(best_y, modes[1], 2e-3);
    for (double y : {-2.0, 0.0, 1.0}) {
        EXPECT_DOUBLE_EQ(pure_diffusion_coefficients(target, 2.0, y).diffusion,
                         2.0 * pure_diffusion_coefficients(target, 1.0, y).diffusion);
    }
}

// In natural scale the process reaches level Y before returning with
// probability of order 1/Y, where the coefficient is astronomically large, so
// a fixed-step Euler run is eventually thrown out. The failure must surface as
// an indexed range error.
TEST(PureDiffusion, EulerDivergenceIsReportedWithIndex) {
    auto target = NormalMixture::bimodal(0.5, -1.5, 1.0, 1.5, 1.0);
    Rng rng(35);
    try {
        simulate_euler(pure_diffusion_model(target, 1.0), 1000000, 1.0, 64, 0.0, rng);
        SUCCEED();
    } catch (const NumericRangeError& e) {
        EXPECT_NE(std::string(e.what()).find("underflow"), std::string::npos);
        ASSERT_TRUE(e.index().has_value());
        EXPECT_GE(*e.index(), 1u);
    }
}
