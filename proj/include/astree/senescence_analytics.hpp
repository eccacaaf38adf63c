// Large-h limit of the proliferating fraction in the depth-truncated model.
//
// With S(u) = sum_k a_k exp(-c^k u) and tau = t / r, time measured in units
// of c^h:
//
//   numerator   N = sum_{i>=0} 2^{-i} S(c^i tau)
//   denominator D = N + 2 sum_{i>=1} S(c^{-i} tau)
//   L_inf(t)    = N / D
//
// S(u) vanishes faster than any power as u -> 0 because sum_k a_k c^{jk} = 0
// for every j >= 0, which is what makes the i-sums converge.
#pragma once

#include <vector>

#include "astree/core.hpp"

namespace astree {

struct LimitCurvePoint {
  double t = 0.0;
  double L = 0.0;
  double numerator = 0.0;
  double denominator = 0.0;
  /// 1 - L, evaluated directly from the senescent sum; stays accurate when L
  /// rounds to 1 in double.
  double senescent_fraction = 0.0;
  std::vector<SeriesReport> reports;  // one per inner sum, then the outer sum last
  Precision precision_used{};
};

/// Double precision cannot resolve the inner-sum cancellation below this c;
/// extended precision is switched on automatically there.
inline constexpr double kAutoExtendedBelowC = 1.3;

/// Small t pushes both sums deep into cancellation. The working precision is
/// doubled (starting from 50 digits) until the sums are resolved, up to this
/// many digits; beyond that a ConditioningError is thrown.
inline constexpr unsigned kMaxAutoDigits = 400;

enum class LimitAccuracy {
  /// N and D - N resolved to the working tolerance relative to D: L and 1 - L
  /// are accurate in absolute terms.
  Fraction,
  /// Each sum resolved relative to itself, so senescent_fraction keeps full
  /// relative accuracy even when it is astronomically small. Much more
  /// expensive for small t.
  Components,
};

/// L_inf(t). Throws ValidationError for t <= 0 and ConvergenceError when a
/// series hits its index cap. `precision_used` reports the precision that
/// finally resolved the sums.
LimitCurvePoint limit_fraction(double t, double c, double r, const SeriesControl& control = {},
                               LimitAccuracy accuracy = LimitAccuracy::Fraction);

struct ExpectedCounts {
  double zp;  // proliferating
  double zs;  // senescent
};

/// Leading-order E[Z^p(t c^h)], E[Z^s(t c^h)] = b_inf 2^h (N, D - N).
ExpectedCounts expected_counts_asymptotic(double t, double c, double r, int h,
                                          const SeriesControl& control = {});

}  // namespace astree
