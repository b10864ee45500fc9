#include "mmdiff/pure_diffusion.hpp"

#include "mmdiff/error.hpp"

#include <cmath>
#include <stdexcept>

namespace mmdiff {

TransformedCoefficients pure_diffusion_coefficients(const NormalMixture& target, double sigma,
                                                    double y) {
    if (!(sigma > 0.0)) throw std::invalid_argument("pure_diffusion: sigma must be positive");
    const double f = target.pdf(y);
    if (!(f >= 1e-300)) throw NumericRangeError("pure_diffusion: target density underflows");
    return {0.0, sigma / std::sqrt(f)};
}

SdeCoefficients pure_diffusion_model(const NormalMixture& target, double sigma) {
    return {[](double) { return 0.0; },
            [target, sigma](double y) {
                return pure_diffusion_coefficients(target, sigma, y).diffusion;
            }};
}

}  // namespace mmdiff
