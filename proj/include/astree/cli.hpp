// Command-line front end. `dispatch` is the whole program; tools/main.cpp
// only forwards argv and the standard streams.
//
// Exit status:
//   0  success
//   1  invalid arguments or parameters (usage text is printed)
//   2  numerical failure (series convergence, conditioning, integration)
//   3  a verification battery failed
#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace astree {

inline constexpr const char* kVersion = "0.1.0";

enum ExitCode : int {
  kExitOk = 0,
  kExitValidation = 1,
  kExitNumerical = 2,
  kExitVerifyFail = 3,
};

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Parses "A..B" (inclusive) or a single integer.
std::vector<int> parse_int_range(const std::string& text);

/// Parses a comma-separated list of reals.
std::vector<double> parse_real_list(const std::string& text);

/// `points` values from tmin to tmax inclusive, log- or linearly spaced.
std::vector<double> make_grid(double tmin, double tmax, int points, bool log_spaced);

}  // namespace astree
