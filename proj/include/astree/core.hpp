// Shared domain types for the Aldous-Shields tree process: model parameters,
// vertex words, depth profiles, trajectories and the series truncation policy.
#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

namespace astree {

// ---------------------------------------------------------------------------
// Errors. The CLI maps ValidationError to exit status 1 and NumericalError
// (and its subclasses) to exit status 2.
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

/// A truncated series hit its hard index cap before the stopping rule fired.
class ConvergenceError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Predicted cancellation exceeds what the working precision can resolve.
class ConditioningError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class IntegrationError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

enum class Context { Simulate, Analytic };

struct Parameters {
  double c = 2.0;
  double r = 1.0;
  std::optional<int> h;
};

/// Checks the parameter ranges for the given use. Simulation accepts any
/// c > 0; analytic evaluation needs c > 1.
Parameters validate(const Parameters& params, Context context);

/// Analytic series lose all accuracy as c approaches 1; below this value
/// the series-based operations refuse to run.
inline constexpr double kMinWellConditionedC = 1.05;

/// Throws ConditioningError when c < kMinWellConditionedC.
void require_well_conditioned(double c, const char* operation);

// ---------------------------------------------------------------------------
// Vertices and profiles
// ---------------------------------------------------------------------------

/// A vertex of the complete binary tree, written as its path from the root.
struct PathWord {
  std::vector<bool> bits;

  int depth() const { return static_cast<int>(bits.size()); }
  PathWord child(bool bit) const;
  bool is_ancestor_of(const PathWord& other) const;
  std::string to_string() const;

  friend bool operator==(const PathWord&, const PathWord&) = default;
  friend auto operator<=>(const PathWord&, const PathWord&) = default;
};

/// Number of external vertices per depth, X_0, X_1, ...
struct Profile {
  std::vector<std::int64_t> counts;

  static Profile root() { return Profile{{1}}; }

  std::int64_t count(int depth) const {
    return depth >= 0 && depth < static_cast<int>(counts.size()) ? counts[depth] : 0;
  }
  int max_depth() const;  // -1 for an empty profile
  std::int64_t total() const;

  friend bool operator==(const Profile& a, const Profile& b);
};

/// An exact number of the form numerator / 2^exponent, kept in lowest terms.
class DyadicRational {
 public:
  using Integer = boost::multiprecision::cpp_int;

  DyadicRational() = default;
  DyadicRational(Integer numerator, unsigned exponent);

  const Integer& numerator() const { return numerator_; }
  unsigned exponent() const { return exponent_; }
  bool is_integer() const { return exponent_ == 0; }
  double to_double() const;
  std::string to_string() const;

  friend bool operator==(const DyadicRational&, const DyadicRational&) = default;

 private:
  Integer numerator_ = 0;
  unsigned exponent_ = 0;
};

/// sum_n 2^{-n} X_n, computed without rounding.
DyadicRational dyadic_mass(const Profile& profile);

// ---------------------------------------------------------------------------
// Trajectories
// ---------------------------------------------------------------------------

struct SeedRecord {
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
};

struct SplitEvent {
  double time;
  int depth;
};

struct Snapshot {
  double time;
  Profile profile;
};

struct Trajectory {
  std::vector<SplitEvent> events;
  std::vector<Snapshot> snapshots;
  SeedRecord seed;
  Profile final_profile = Profile::root();
  double final_time = 0.0;
  std::string diagnostic;  // non-empty when the run stopped early or never started
};

/// Rebuilds the profile at each requested time by applying events from the
/// root-only initial state. Times must be nondecreasing.
std::vector<Snapshot> replay(const std::vector<SplitEvent>& events,
                             const std::vector<double>& times);

/// Applies one split at `depth` in place.
void apply_split(Profile& profile, int depth);

// ---------------------------------------------------------------------------
// Series truncation policy
// ---------------------------------------------------------------------------

enum class PrecisionMode { Double, Extended };

struct Precision {
  PrecisionMode mode = PrecisionMode::Double;
  unsigned digits = 50;  // decimal digits, extended mode only

  static Precision extended(unsigned digits = 50) { return {PrecisionMode::Extended, digits}; }
  bool is_extended() const { return mode == PrecisionMode::Extended; }
};

/// Parses "double" or "extended[:digits]".
Precision parse_precision(const std::string& text);
std::string to_string(const Precision& precision);

/// Reads ASTREE_PRECISION from the environment; double precision when unset.
Precision default_precision();

struct SeriesControl {
  double rel_tol = 1e-14;
  int consec = 3;
  int k_max = 200;
  Precision precision{};
};

/// Outcome of one truncated infinite sum.
struct SeriesReport {
  int stop_index = 0;
  double last_term = 0.0;
  double magnitude = 0.0;  // sum of |terms|, the cancellation scale
  bool converged = false;
};

// ---------------------------------------------------------------------------
// Flat-file formats
// ---------------------------------------------------------------------------

/// 17 significant digits, round-trippable.
std::string format_real(double value);

void write_profile_csv(std::ostream& out, const Profile& profile);
Profile read_profile_csv(std::istream& in);

void write_events_csv(std::ostream& out, const std::vector<SplitEvent>& events);
std::vector<SplitEvent> read_events_csv(std::istream& in);

}  // namespace astree
