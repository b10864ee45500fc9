#pragma once

#include "mmdiff/base.hpp"
#include "mmdiff/transform.hpp"

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace mmdiff {

/// Mean first-passage time from one point to another. The direction follows
/// from the ordering: from < to is an upcrossing, from > to a downcrossing.
struct PassageResult {
    double mean = 0.0;
    /// Absolute error estimate of the quadrature.
    double error = 0.0;
    /// False when the quadrature missed its tolerance; `mean` is then the
    /// partial value reached and `message` says why.
    bool converged = true;
    /// A base endpoint lies beyond |x| = kAstronomicalBound, where passage
    /// times exceed any practical horizon.
    bool astronomical = false;
    std::string message;
};

inline constexpr double kAstronomicalBound = 8.0;

/// Double quadrature with scale density s and speed density m = 1/(s sigma^2):
/// upward E = 2 int_from^to s(y) int_lower^y m(x) dx dy, downward
/// E = 2 int_to^from s(y) int_y^upper m(x) dx dy. Both points must lie in the
/// state space (std::invalid_argument otherwise).
PassageResult mean_passage_general(const Diffusion& base, double from, double to);

/// Closed form for dX = -nu X dt + sqrt(2 nu) dB: upward
/// (1/nu) int_from^to Phi(x)/phi(x) dx, downward (1/nu) int_to^from (1 - Phi(x))/phi(x) dx.
PassageResult ou_mean_passage(double nu, double from, double to);

/// The passage time of tau(X) between two levels has the law of the base
/// passage time between their preimages, so the levels are mapped through
/// tau^{-1} and the OU closed form (or the general formula for other bases)
/// is applied. Throws NumericRangeError when tau^{-1} saturates.
PassageResult mean_passage_transformed(const TransformedDiffusion& model, double from, double to);

/// How the lower and upper regime of a fitted mixture are located.
enum class ModeConvention {
    /// l and u are the smallest and largest component means.
    ComponentMeans,
    /// l and u are the outermost local maxima of the mixture density.
    DensityModes,
};

struct RegimePassage {
    double lower = 0.0;
    double upper = 0.0;
    /// E(T_u | Y_0 = l), the upward passage.
    PassageResult up;
    /// E(T_l | Y_0 = u), the downward passage.
    PassageResult down;
    /// down / up: long-run time share of the upper regime relative to the lower.
    double ratio = 0.0;
};

/// Passage times between the two outermost regimes. Throws
/// std::invalid_argument when the convention yields fewer than two distinct
/// points.
RegimePassage regime_passage(const TransformedDiffusion& model, ModeConvention convention);

struct MonteCarloPassageOptions {
    /// Simulation step of the exact base transitions.
    double dt_sim = 1e-3;
    std::size_t paths = 2000;
    std::uint64_t seed = 1;
    /// Maximum simulated time per path; 0 picks 200 times the quadrature mean.
    double horizon = 0.0;
    /// Worker threads; 0 uses the hardware concurrency.
    unsigned threads = 0;
};

struct MonteCarloPassage {
    double dt = 0.0;
    double mean = 0.0;
    double se = 0.0;
    std::size_t paths = 0;
    /// Paths that never crossed before the horizon. Their horizon time enters
    /// the average, so the estimate is biased low when this is nonzero.
    std::size_t censored = 0;
};

/// First-crossing times of simulated paths, averaged. Each path is an exact
/// OU path at dt_sim started at tau^{-1}(from); the level is checked on the
/// grid only, which biases the estimate upward by O(sqrt(dt)). Since tau is
/// increasing the crossing is detected in base coordinates. Paths use
/// independent streams derived from (seed, path index), so results do not
/// depend on the thread count.
MonteCarloPassage monte_carlo_passage(const TransformedDiffusion& model, double from, double to,
                                      const MonteCarloPassageOptions& options = {});

/// One simulation at dt_sim, read on the coarser grids dt_sim * stride as
/// well. The estimates share their random numbers, so for every path the
/// coarse crossing time is never below the fine one.
std::vector<MonteCarloPassage> monte_carlo_passage_strides(const TransformedDiffusion& model,
                                                           double from, double to,
                                                           const std::vector<std::size_t>& strides,
                                                           const MonteCarloPassageOptions& options = {});

}  // namespace mmdiff
