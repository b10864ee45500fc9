#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mmdiff::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitNumeric = 1;
inline constexpr int kExitUsage = 2;

/// Runs one command. `args` excludes the program name. Exit codes: 0 success,
/// 1 numeric failure, 2 usage or I/O error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mmdiff::cli
