#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace mmdiff {

/// A value left the range where double precision can represent it
/// (saturated cdf, underflowing density, overflowing scale integral).
class NumericRangeError : public std::runtime_error {
public:
    explicit NumericRangeError(const std::string& what,
                               std::optional<std::size_t> index = std::nullopt)
        : std::runtime_error(index ? what + " (observation " + std::to_string(*index) + ")"
                                   : what),
          index_(index) {}

    std::optional<std::size_t> index() const { return index_; }

private:
    std::optional<std::size_t> index_;
};

/// An iterative method stopped without meeting its tolerance.
class ConvergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A matrix that must be inverted is singular or too badly conditioned.
class SingularMatrixError : public std::runtime_error {
public:
    SingularMatrixError(const std::string& what, double condition,
                        std::optional<std::size_t> index = std::nullopt)
        : std::runtime_error(what + " (condition number " + std::to_string(condition) +
                             (index ? ", observation " + std::to_string(*index) : std::string()) +
                             ")"),
          condition_(condition), index_(index) {}

    double condition() const { return condition_; }
    std::optional<std::size_t> index() const { return index_; }

private:
    double condition_;
    std::optional<std::size_t> index_;
};

}  // namespace mmdiff
