#pragma once

#include "mmdiff/mixture.hpp"

#include <cstddef>
#include <optional>
#include <span>

namespace mmdiff {

struct EmOptions {
    std::size_t components = 2;
    int max_iterations = 2000;
    /// Stop when the mean log-likelihood improves by less than this.
    double tolerance = 1e-12;
};

struct EmResult {
    /// Empty when the data are degenerate (constant, or a component collapsed).
    std::optional<NormalMixture> mixture;
    double loglik = 0.0;
    int iterations = 0;
    bool converged = false;
    /// A component weight fell below 1e-3 or its sd below 1e-8 of the data spread.
    bool degenerate = false;
};

/// Maximum-likelihood normal mixture for iid data by expectation-maximisation.
/// Components are initialised at equally spaced sample quantiles; the result is
/// ordered by ascending mean.
EmResult fit_normal_mixture_em(std::span<const double> data, const EmOptions& options = {});

}  // namespace mmdiff
