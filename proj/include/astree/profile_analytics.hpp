// Exact and asymptotic moments of the tree profile X_n(t).
//
// The probability y_n(t) that the leftmost depth-n vertex is external solves
// the bidiagonal linear system  y_n' = c^{-(n-1)} y_{n-1} - c^{-n} y_n  and
// has the closed form  y_n(t) = sum_{k=0..n} a_k b_{n-k} exp(-c^{k-n} t).
// Covariances decompose over the depth m of the most recent common ancestor
// of two vertices; given the time T_m at which the common ancestor splits,
// the two lineages evolve independently. T_m is hypoexponential with rates
// 1, c^{-1}, ..., c^{-m}.
#pragma once

#include <string>
#include <vector>

#include "astree/core.hpp"

namespace astree {

enum class RegimeTag { Subcritical, Critical, Supercritical };

std::string to_string(RegimeTag tag);

/// Growth regime of the profile covariance; `prefactor` is the regime
/// constant multiplying a_{i,i'}(t) and the n-dependent scale.
struct CovRegime {
  RegimeTag tag;
  double prefactor;
  std::string scale_description;
};

/// Critical when |c - sqrt 2| < kCriticalBand.
inline constexpr double kCriticalBand = 1e-12;

CovRegime classify_regime(double c);

/// Hitting time of depth m+1 along one lineage: a sum of independent
/// exponentials with rates r_l = c^{-l}, l = 0..m.
struct HypoexpSpec {
  int m = 0;
  double c = 2.0;
  std::vector<double> rates;

  static HypoexpSpec geometric(int m, double c);
};

struct SeriesValue {
  double value;
  SeriesReport report;
};

/// y_n(t), the probability that vertex 0...0 (n zeros) is external at time t.
/// `precision` is where evaluation starts. The result is accurate to the
/// conditioning budget relative to max(y_n, 2^-n), i.e. E[X_n] is accurate
/// relatively or in absolute count units; evaluations that would miss this
/// are recomputed with more digits (up to 400).
double mean_occupancy(int n, double t, double c, const Precision& precision = {});

/// E[X_n(t)] = 2^n y_n(t).
double mean_count(int n, double t, double c, const Precision& precision = {});

/// x_i(t) = b_inf sum_{k>=0} a_k exp(-c^{k-i} t), the limit of
/// 2^{-(n+i)} X_{n+i}(t c^n). Throws ConvergenceError when k_max is hit.
SeriesValue limit_profile(int i, double t, double c, const SeriesControl& control = {});

/// Integrates the mean-profile ODE from y(0) = (1, 0, 0, ...) to time t with
/// an adaptive Dormand-Prince scheme (absolute and relative tolerance `tol`).
/// Returns y_0 .. y_{depth_max}. Accepts any c > 0.
std::vector<double> ode_profile(double t, int depth_max, double c, double tol);

/// E[exp(s T) 1{T <= t}] for the hypoexponential T of `spec`, by partial
/// fractions. Throws ConditioningError when cancellation would exceed 1e6
/// double ulps.
double hypoexp_restricted_mgf(double s, double t, const HypoexpSpec& spec,
                              const Precision& precision = {});

/// Cov[Y_u(t), Y_u'(t)] for |u| = n, |u'| = n', with common ancestor at
/// depth m (0 <= m <= n <= n').
double pair_cov(int n, int n_prime, int m, double t, double c, const Precision& precision = {});

/// Cov[X_n(t), X_n'(t)]. Arguments are swapped when n > n'. Zero at t = 0.
double profile_cov_exact(int n, int n_prime, double t, double c, const Precision& precision = {});

/// a_{i,i'}(t) = b_inf^2 sum_{k,k'} a_k a_k' exp(-t(c^{k-i} + c^{k'-i'})) c^{k+k'}.
SeriesValue cov_prefactor(int i, int i_prime, double t, double c,
                          const SeriesControl& control = {});

struct AsymptoticCov {
  double value;
  CovRegime regime;
  double a_ii;  // a_{i,i'}(t)
};

/// Leading-order Cov[X_{n+i}(t c^n), X_{n+i'}(t c^n)] for large n.
AsymptoticCov profile_cov_asymptotic(int i, int i_prime, int n, double t, double c,
                                     const SeriesControl& control = {});

}  // namespace astree
