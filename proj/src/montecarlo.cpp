#include "astree/montecarlo.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include <boost/multiprecision/cpp_int.hpp>
#include "json.hpp"

#include "astree/core.hpp"
#include "astree/numerics.hpp"
#include "astree/profile_analytics.hpp"
#include "astree/senescence_analytics.hpp"
#include "astree/simulator.hpp"

namespace astree {

namespace {

using BigInt = boost::multiprecision::cpp_int;
using BigRational = boost::multiprecision::cpp_rational;

unsigned resolve_threads(unsigned requested) {
  if (requested != 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

// Analytic reference values: double precision first, extended precision when
// double cannot resolve the cancellation.
template <class Fn>
double exact_value(Fn&& fn) {
  try {
    return fn(Precision{});
  } catch (const ConditioningError&) {
    return fn(Precision::extended());
  }
}

double to_double(const BigRational& x) { return static_cast<double>(x); }

// A replicate count can only move in steps of one, so a zero sample variance
// is reported with the standard error of a single unit change.
double floor_std_error(double se, double resolution, std::int64_t replicates) {
  const double floor = resolution / static_cast<double>(replicates);
  return std::max(se, floor);
}

MomentReport make_report(std::string quantity, double estimate, double std_error, double exact,
                         std::int64_t replicates) {
  MomentReport r{std::move(quantity), estimate, std_error, exact, 0.0, replicates};
  r.z = (estimate - exact) / std_error;
  if (!std::isfinite(r.z)) throw NumericalError("non-finite z score for " + r.quantity);
  return r;
}

void require_replicates(std::int64_t replicates, std::int64_t minimum, const char* op) {
  if (replicates < minimum) {
    throw ValidationError(std::string(op) + ": needs at least " + std::to_string(minimum) +
                          " replicates");
  }
}

void require_analytic_c(double c, const char* op) {
  validate(Parameters{c, 1.0, std::nullopt}, Context::Analytic);
  require_well_conditioned(c, op);
}

void require_time(double t, const char* op) {
  if (!std::isfinite(t) || t < 0.0) throw ValidationError(std::string(op) + ": t must be >= 0");
}

// Profile at time t for every replicate, restricted to `depths`.
std::vector<std::vector<std::int64_t>> profile_rows(double c, double t, const std::vector<int>& depths,
                                                    std::int64_t replicates, std::uint64_t seed,
                                                    unsigned threads) {
  const Parameters params{c, 1.0, std::nullopt};
  return run_replicates(replicates, threads, [&](std::int64_t j) {
    SimulationOptions options;
    options.snapshot_times = {t};
    options.record_events = false;
    const Trajectory traj = simulate_profile(params, MaxTime{t}, SeedRecord{seed, static_cast<std::uint64_t>(j)},
                                             options);
    const Profile& p = traj.snapshots.at(0).profile;
    std::vector<std::int64_t> row;
    row.reserve(depths.size());
    for (int n : depths) row.push_back(p.count(n));
    return row;
  });
}

MomentReport mean_report(const std::vector<std::vector<std::int64_t>>& rows, std::size_t column,
                         std::string quantity, double exact) {
  const auto reps = static_cast<std::int64_t>(rows.size());
  BigInt s1 = 0;
  BigInt s2 = 0;
  for (const auto& row : rows) {
    const BigInt x = row[column];
    s1 += x;
    s2 += x * x;
  }
  const BigRational mean(s1, BigInt(reps));
  // Squared standard error: (R S2 - S1^2) / (R^2 (R - 1)).
  const BigRational se2(BigInt(reps) * s2 - s1 * s1, BigInt(reps) * reps * (reps - 1));
  const double se = floor_std_error(std::sqrt(to_double(se2)), 1.0, reps);
  return make_report(std::move(quantity), to_double(mean), se, exact, reps);
}

MomentReport cov_report(const std::vector<std::vector<std::int64_t>>& rows, std::size_t a, std::size_t b,
                        std::string quantity, double exact) {
  const auto reps = static_cast<std::int64_t>(rows.size());
  BigInt sx = 0, sy = 0, sxy = 0;
  for (const auto& row : rows) {
    sx += row[a];
    sy += row[b];
    sxy += BigInt(row[a]) * row[b];
  }
  const BigInt R = reps;
  const BigRational cov(R * sxy - sx * sy, R * (R - 1));

  // Leave-one-out: v_j = (R-1)(Sxy - x_j y_j) - (Sx - x_j)(Sy - y_j) is the
  // integer (R-1)(R-2) cov_{-j}; the jackknife variance follows exactly from
  // the sums of v_j and v_j^2.
  BigInt sv = 0, sv2 = 0;
  for (const auto& row : rows) {
    const BigInt x = row[a];
    const BigInt y = row[b];
    const BigInt v = (R - 1) * (sxy - x * y) - (sx - x) * (sy - y);
    sv += v;
    sv2 += v * v;
  }
  const BigInt scale = (R - 1) * (R - 2);
  // (R-1)/R * sum (cov_{-j} - mean)^2 = (R-1)/R * (sv2 - sv^2/R) / scale^2
  const BigRational jack_var((R - 1) * (R * sv2 - sv * sv), R * R * scale * scale);
  const double se = floor_std_error(std::sqrt(to_double(jack_var)), 1.0, reps);
  return make_report(std::move(quantity), to_double(cov), se, exact, reps);
}

std::string format_number(double x) {
  std::ostringstream os;
  os << x;
  return os.str();
}

}  // namespace

std::vector<std::vector<std::int64_t>> run_replicates(
    std::int64_t replicates, unsigned threads,
    const std::function<std::vector<std::int64_t>(std::int64_t)>& fn) {
  if (replicates < 0) throw ValidationError("replicates must be nonnegative");
  std::vector<std::vector<std::int64_t>> rows(static_cast<std::size_t>(replicates));
  const unsigned workers =
      static_cast<unsigned>(std::min<std::int64_t>(resolve_threads(threads), std::max<std::int64_t>(replicates, 1)));
  std::atomic<std::int64_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto work = [&] {
    for (;;) {
      if (failed.load()) return;
      const std::int64_t j = next.fetch_add(1);
      if (j >= replicates) return;
      try {
        rows[static_cast<std::size_t>(j)] = fn(j);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        failed = true;
        return;
      }
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  if (error) std::rethrow_exception(error);
  return rows;
}

std::vector<MomentReport> estimate_mean_profile(double c, double t, const std::vector<int>& depths,
                                                std::int64_t replicates, std::uint64_t seed,
                                                const MonteCarloOptions& options) {
  require_analytic_c(c, "estimate_mean_profile");
  require_time(t, "estimate_mean_profile");
  require_replicates(replicates, 100, "estimate_mean_profile");
  for (int n : depths) {
    if (n < 0) throw ValidationError("estimate_mean_profile: depths must be nonnegative");
  }
  const auto rows = profile_rows(c, t, depths, replicates, seed, options.threads);
  std::vector<MomentReport> out;
  for (std::size_t k = 0; k < depths.size(); ++k) {
    const int n = depths[k];
    const double exact = exact_value([&](const Precision& p) { return mean_count(n, t, c, p); });
    out.push_back(mean_report(rows, k, "mean X_" + std::to_string(n), exact));
  }
  return out;
}

std::vector<MomentReport> estimate_cov_set(double c, double t,
                                           const std::vector<std::pair<int, int>>& pairs,
                                           std::int64_t replicates, std::uint64_t seed,
                                           const MonteCarloOptions& options) {
  require_analytic_c(c, "estimate_cov");
  require_time(t, "estimate_cov");
  require_replicates(replicates, 1000, "estimate_cov");
  std::vector<int> depths;
  for (auto [n, m] : pairs) {
    if (n < 0 || m < 0) throw ValidationError("estimate_cov: depths must be nonnegative");
    depths.push_back(n);
    depths.push_back(m);
  }
  std::sort(depths.begin(), depths.end());
  depths.erase(std::unique(depths.begin(), depths.end()), depths.end());
  auto column = [&](int n) {
    return static_cast<std::size_t>(std::lower_bound(depths.begin(), depths.end(), n) - depths.begin());
  };
  const auto rows = profile_rows(c, t, depths, replicates, seed, options.threads);
  std::vector<MomentReport> out;
  for (auto [n, m] : pairs) {
    const double exact =
        exact_value([&](const Precision& p) { return profile_cov_exact(n, m, t, c, p); });
    out.push_back(cov_report(rows, column(n), column(m),
                             "cov X_" + std::to_string(n) + ",X_" + std::to_string(m), exact));
  }
  return out;
}

MomentReport estimate_cov(double c, double t, int n, int n_prime, std::int64_t replicates,
                          std::uint64_t seed, const MonteCarloOptions& options) {
  return estimate_cov_set(c, t, {{n, n_prime}}, replicates, seed, options).front();
}

std::vector<MomentReport> estimate_L_curve(double c, double r, int h, const std::vector<double>& grid,
                                           std::int64_t replicates, std::uint64_t seed,
                                           const MonteCarloOptions& options) {
  require_analytic_c(c, "estimate_L_curve");
  require_replicates(replicates, 2, "estimate_L_curve");
  if (h < 0) throw ValidationError("estimate_L_curve: h must be nonnegative");
  const Parameters params = validate(Parameters{c, r, h}, Context::Simulate);
  const double scale = std::pow(c, h);
  std::vector<double> model_times;
  for (double t : grid) {
    if (!(t > 0.0) || !std::isfinite(t)) throw ValidationError("estimate_L_curve: grid times must be positive");
    model_times.push_back(t * scale);
  }
  const auto rows = run_replicates(replicates, options.threads, [&](std::int64_t j) {
    const auto states =
        simulate_senescence(params, model_times, SeedRecord{seed, static_cast<std::uint64_t>(j)});
    std::vector<std::int64_t> row;
    row.reserve(2 * states.size());
    for (const auto& s : states) {
      row.push_back(s.zp);
      row.push_back(s.zs);
    }
    return row;
  });

  const double resolution = std::ldexp(1.0, -(h + 1));
  std::vector<MomentReport> out;
  std::vector<double> values(static_cast<std::size_t>(replicates));
  for (std::size_t k = 0; k < grid.size(); ++k) {
    for (std::size_t j = 0; j < rows.size(); ++j) {
      const double zp = static_cast<double>(rows[j][2 * k]);
      const double zs = static_cast<double>(rows[j][2 * k + 1]);
      values[j] = zp / (zp + zs);
    }
    // Canonical order makes the floating-point sums independent of the order
    // in which replicates were produced.
    std::sort(values.begin(), values.end());
    num::CompensatedSum<double> sum;
    for (double v : values) sum.add(v);
    const double mean = sum.value() / static_cast<double>(replicates);
    num::CompensatedSum<double> dev2;
    for (double v : values) dev2.add((v - mean) * (v - mean));
    const double sd = std::sqrt(dev2.value() / static_cast<double>(replicates - 1));
    const double se = floor_std_error(sd / std::sqrt(static_cast<double>(replicates)), resolution, replicates);
    const double exact = limit_fraction(grid[k], c, r).L;
    out.push_back(make_report("L(t=" + format_number(grid[k]) + ")", mean, se, exact, replicates));
  }
  return out;
}

BatteryVerdict judge_z(const std::vector<MomentReport>& reports, double z_threshold,
                       double max_fraction_above_2) {
  BatteryVerdict v;
  std::size_t above_2 = 0;
  for (const auto& r : reports) {
    v.max_abs_z = std::max(v.max_abs_z, std::abs(r.z));
    v.max_abs_deviation = std::max(v.max_abs_deviation, std::abs(r.estimate - r.exact));
    if (std::abs(r.z) > 2.0) ++above_2;
  }
  v.fraction_above_2 = reports.empty() ? 0.0 : static_cast<double>(above_2) / reports.size();
  v.pass = !reports.empty() && v.max_abs_z < z_threshold && v.fraction_above_2 < max_fraction_above_2;
  std::ostringstream os;
  os << (v.pass ? "PASS" : "FAIL") << ": " << reports.size() << " reports, max |z| = " << v.max_abs_z
     << " (limit " << z_threshold << "), fraction |z|>2 = " << v.fraction_above_2 << " (limit "
     << max_fraction_above_2 << ")";
  v.summary = os.str();
  return v;
}

BatteryVerdict judge_deviation(const std::vector<MomentReport>& reports, double tolerance) {
  BatteryVerdict v;
  std::size_t above_2 = 0;
  for (const auto& r : reports) {
    v.max_abs_z = std::max(v.max_abs_z, std::abs(r.z));
    v.max_abs_deviation = std::max(v.max_abs_deviation, std::abs(r.estimate - r.exact));
    if (std::abs(r.z) > 2.0) ++above_2;
  }
  v.fraction_above_2 = reports.empty() ? 0.0 : static_cast<double>(above_2) / reports.size();
  v.pass = !reports.empty() && v.max_abs_deviation < tolerance;
  std::ostringstream os;
  os << (v.pass ? "PASS" : "FAIL") << ": " << reports.size()
     << " reports, max |estimate - exact| = " << v.max_abs_deviation << " (limit " << tolerance << ")";
  v.summary = os.str();
  return v;
}

void write_reports_json(std::ostream& out, const std::vector<MomentReport>& reports) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : reports) {
    arr.push_back({{"quantity", r.quantity},
                   {"estimate", r.estimate},
                   {"std_error", r.std_error},
                   {"exact", r.exact},
                   {"z", r.z},
                   {"replicates", r.replicates}});
  }
  out << arr.dump(2) << '\n';
}

}  // namespace astree
