// Replicate runner and moment comparisons against the analytic engine.
//
// Replicate j of a run with seed s uses the simulator stream (s, j), so the
// set of replicates does not depend on the thread count. All aggregation is
// done in exact integer arithmetic (or over canonically sorted values for
// non-integer quantities), so the reported numbers do not depend on the
// order in which replicates finish.
#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace astree {

struct MomentReport {
  std::string quantity;  // e.g. "mean X_3", "cov X_3,X_4", "L(t=0.5)"
  double estimate = 0.0;
  double std_error = 0.0;
  double exact = 0.0;
  double z = 0.0;
  std::int64_t replicates = 0;
};

struct MonteCarloOptions {
  /// Worker threads; 0 means std::thread::hardware_concurrency().
  unsigned threads = 0;
};

/// Runs fn(j) for j = 0..replicates-1 on a pool of threads. Each call fills
/// one row; the rows come back in replicate order.
std::vector<std::vector<std::int64_t>> run_replicates(
    std::int64_t replicates, unsigned threads,
    const std::function<std::vector<std::int64_t>(std::int64_t)>& fn);

/// Sample mean and standard error of X_n(t) per depth, against mean_count.
std::vector<MomentReport> estimate_mean_profile(double c, double t, const std::vector<int>& depths,
                                                std::int64_t replicates, std::uint64_t seed,
                                                const MonteCarloOptions& options = {});

/// Sample covariance of (X_n(t), X_n'(t)) with a leave-one-out jackknife
/// standard error, against profile_cov_exact.
MomentReport estimate_cov(double c, double t, int n, int n_prime, std::int64_t replicates,
                          std::uint64_t seed, const MonteCarloOptions& options = {});

/// Several covariances from one shared set of replicates.
std::vector<MomentReport> estimate_cov_set(double c, double t,
                                           const std::vector<std::pair<int, int>>& pairs,
                                           std::int64_t replicates, std::uint64_t seed,
                                           const MonteCarloOptions& options = {});

/// Replicate mean of L(t c^h) in the truncated model, against
/// limit_fraction(t, c, r). `grid` is in rescaled units and ascending.
std::vector<MomentReport> estimate_L_curve(double c, double r, int h, const std::vector<double>& grid,
                                           std::int64_t replicates, std::uint64_t seed,
                                           const MonteCarloOptions& options = {});

/// Battery-wide verdict.
struct BatteryVerdict {
  bool pass = false;
  double max_abs_z = 0.0;
  double fraction_above_2 = 0.0;
  double max_abs_deviation = 0.0;
  std::string summary;  // one line, starting with PASS or FAIL
};

/// z-score battery: pass when every |z| < z_threshold and fewer than
/// `max_fraction_above_2` of the reports have |z| > 2.
BatteryVerdict judge_z(const std::vector<MomentReport>& reports, double z_threshold,
                       double max_fraction_above_2 = 0.25);

/// Deviation battery for limit comparisons: pass when every
/// |estimate - exact| < tolerance.
BatteryVerdict judge_deviation(const std::vector<MomentReport>& reports, double tolerance);

/// JSON array of reports.
void write_reports_json(std::ostream& out, const std::vector<MomentReport>& reports);

}  // namespace astree
