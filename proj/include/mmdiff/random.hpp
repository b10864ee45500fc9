#pragma once

#include <cstdint>
#include <random>

namespace mmdiff {

/// Seedable stream used throughout. The library never seeds from ambient entropy.
using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

}  // namespace mmdiff
