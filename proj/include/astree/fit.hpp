// Least-squares estimation of c (and optionally r) from observed
// proliferating fractions, against the limit curve L_inf.
#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "astree/core.hpp"

namespace astree {

struct Observation {
  double t = 0.0;  // rescaled time (units of c^h), unless FitOptions::h is set
  double L = 0.0;
  double weight = 1.0;
};

/// Parses CSV with header `t,L` or `t,L,weight`. Lines starting with '#' are
/// skipped. Errors name the offending (1-based) line.
std::vector<Observation> ingest(std::istream& in);
std::vector<Observation> ingest_file(const std::string& path);

struct FitSearch {
  double c_lo = 1.01;
  double c_hi = 10.0;
  double tol = 1e-6;      // on log c (and log r)
  double r_lo = 1e-2;     // bracket for r when it is fitted
  double r_hi = 1e2;
  int scan_points = 41;   // coarse log-spaced scan before the bracketed search
};

struct FitOptions {
  /// Fixed r; std::nullopt fits r as well.
  std::optional<double> r = 1.0;
  /// Observation times are raw model times; the model is compared at t c^{-h}.
  std::optional<int> h;
  FitSearch search{};
};

/// One point of the profiled objective: the best sse at fixed c.
struct ValleyPoint {
  double c;
  double r;
  double sse;
};

struct FitResult {
  double c_hat = 0.0;
  double r_hat = 1.0;
  double sse = 0.0;
  int iterations = 0;           // objective evaluations
  double c_lo = 0.0;            // bracket actually searched
  double c_hi = 0.0;
  bool boundary = false;        // minimum sits on a bracket edge
  bool certified = false;       // local-minimum certificate held
  std::vector<std::string> diagnostics;
  std::vector<ValleyPoint> valley;  // scan over c (r profiled out when free)
};

/// Weighted sum of squared residuals at (c, r); +inf when the limit curve
/// cannot be evaluated there.
double fit_objective(const std::vector<Observation>& obs, double c, double r, std::optional<int> h = {});

/// Minimizes fit_objective over log c (nested over log r when r is free):
/// a coarse scan locates the basin, then Brent's method refines it.
FitResult fit_c(const std::vector<Observation>& obs, const FitOptions& options = {});

/// CSV `t,L_fit` of the fitted curve at the observation times.
void write_fit_curve_csv(std::ostream& out, const std::vector<Observation>& obs, const FitResult& fit,
                         std::optional<int> h = {});

}  // namespace astree
