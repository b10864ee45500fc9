#pragma once

#include "mmdiff/simulate.hpp"

#include <cstddef>
#include <istream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace mmdiff {

/// Malformed input. `lines` holds the offending 1-based line numbers.
class IngestError : public std::runtime_error {
public:
    IngestError(const std::string& what, std::vector<std::size_t> lines)
        : std::runtime_error(what), lines_(std::move(lines)) {}
    const std::vector<std::size_t>& lines() const { return lines_; }

private:
    std::vector<std::size_t> lines_;
};

/// The input file could not be opened.
class InputFileError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct TimeSeries {
    Path path;
    std::vector<double> times;
};

/// Relative tolerance on the spacing of the time column.
inline constexpr double kSpacingTolerance = 1e-9;

/// Reads a CSV with a header row. Blank lines and lines starting with '#' are
/// ignored. Columns are chosen by header name when "value" (and "time") are
/// present, otherwise by position: one column is the value, two are (time,
/// value). Without a time column `delta` is required and times are 0, delta,
/// 2 delta, ... With one, consecutive differences must equal the reference
/// spacing (delta when given, else the median difference) to within
/// kSpacingTolerance; every violating line is reported. Non-numeric or
/// non-finite fields are reported with their line numbers.
TimeSeries ingest_csv(std::istream& in, std::optional<double> delta = std::nullopt);
TimeSeries ingest_csv_file(const std::string& file, std::optional<double> delta = std::nullopt);

}  // namespace mmdiff
