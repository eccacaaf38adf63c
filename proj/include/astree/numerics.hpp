// Precision-generic numeric helpers shared by the analytic modules. Kernels
// are templates over the working real type: `double` or `ExtReal`.
#pragma once

#include <cmath>
#include <limits>
#include <mutex>
#include <type_traits>
#include <utility>

#include <boost/math/special_functions/expm1.hpp>
#include <boost/math/special_functions/log1p.hpp>
#include <boost/multiprecision/mpfr.hpp>

#include "astree/core.hpp"

namespace astree {

using ExtReal = boost::multiprecision::number<boost::multiprecision::mpfr_float_backend<0>,
                                              boost::multiprecision::et_off>;

/// Sets the MPFR working precision for the lifetime of the scope. The Boost
/// default precision is process-wide, so scopes are mutually exclusive.
class ExtendedPrecisionScope {
 public:
  explicit ExtendedPrecisionScope(unsigned digits);
  ~ExtendedPrecisionScope();
  ExtendedPrecisionScope(const ExtendedPrecisionScope&) = delete;
  ExtendedPrecisionScope& operator=(const ExtendedPrecisionScope&) = delete;

 private:
  std::unique_lock<std::recursive_mutex> lock_;
  unsigned saved_digits_;
};

/// Runs `kernel(Real{})` in the requested precision and returns the result.
template <class Kernel>
decltype(auto) with_precision(const Precision& precision, Kernel&& kernel) {
  if (precision.is_extended()) {
    ExtendedPrecisionScope scope(precision.digits);
    return std::forward<Kernel>(kernel)(ExtReal{});
  }
  return std::forward<Kernel>(kernel)(double{});
}

/// with_precision, restarted at 50, 100, 200, ... digits whenever the kernel
/// throws ConditioningError; rethrows once `max_digits` has been tried.
template <class Kernel>
auto with_escalation(Precision precision, unsigned max_digits, Kernel&& kernel) {
  for (;;) {
    try {
      return with_precision(precision, kernel);
    } catch (const ConditioningError&) {
      if (precision.is_extended() && precision.digits >= max_digits) throw;
      precision = precision.is_extended() ? Precision::extended(2 * precision.digits) : Precision::extended();
    }
  }
}

namespace num {

template <class Real>
Real epsilon() {
  if constexpr (std::is_same_v<Real, double>) {
    return std::numeric_limits<double>::epsilon();
  } else {
    return std::numeric_limits<Real>::epsilon();
  }
}

template <class Real>
Real expm1(const Real& x) {
  if constexpr (std::is_same_v<Real, double>) {
    return std::expm1(x);
  } else {
    return boost::math::expm1(x);
  }
}

template <class Real>
Real log1p(const Real& x) {
  if constexpr (std::is_same_v<Real, double>) {
    return std::log1p(x);
  } else {
    return boost::math::log1p(x);
  }
}

template <class Real>
double to_double(const Real& x) {
  return static_cast<double>(x);
}

/// Neumaier's variant of Kahan summation; also tracks sum |x| so callers can
/// estimate how much cancellation took place.
template <class Real>
class CompensatedSum {
 public:
  void add(const Real& x) {
    using std::abs;
    const Real t = sum_ + x;
    if (abs(sum_) >= abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
    magnitude_ += abs(x);
  }
  void add(const Real& x, const Real& magnitude) {
    add(x);
    magnitude_ += magnitude - abs_of(x);
  }
  Real value() const { return sum_ + comp_; }
  Real magnitude() const { return magnitude_; }

 private:
  static Real abs_of(const Real& x) {
    using std::abs;
    return abs(x);
  }
  Real sum_ = 0;
  Real comp_ = 0;
  Real magnitude_ = 0;
};

/// A value together with the scale of the terms that produced it; the ratio
/// magnitude / |value| is the cancellation factor.
template <class Real>
struct Tracked {
  Real value = 0;
  Real magnitude = 0;
};

/// Relative error budget: results are refused when the predicted error
/// exceeds this many double-precision ulps.
inline constexpr double kMaxLostUlps = 1e6;

/// Throws ConditioningError when magnitude * eps(Real) > kMaxLostUlps *
/// eps(double) * |value|.
template <class Real>
void check_conditioning(const Tracked<Real>& x, const char* what) {
  using std::abs;
  const Real budget = Real(kMaxLostUlps * std::numeric_limits<double>::epsilon());
  if (x.magnitude * epsilon<Real>() > budget * abs(x.value) && x.magnitude != 0) {
    throw ConditioningError(std::string(what) +
                            ": cancellation exceeds the working precision "
                            "(try extended precision)");
  }
}

/// Sums term(k) for k = 0, 1, ... until `control.consec` consecutive terms
/// are below the larger of rel_tol * |partial| and the rounding floor
/// eps * sum|terms|. Returns the sum and a report; never throws.
template <class Real, class Term>
std::pair<Real, SeriesReport> sum_series(Term&& term, const SeriesControl& control) {
  using std::abs;
  CompensatedSum<Real> acc;
  SeriesReport report;
  int small = 0;
  const Real tol = Real(control.rel_tol);
  Real last = 0;
  int k = 0;
  for (; k <= control.k_max; ++k) {
    last = term(k);
    acc.add(last);
    const Real bound = std::max(tol * abs(acc.value()), epsilon<Real>() * acc.magnitude());
    if (last == 0 || abs(last) <= bound) {
      if (++small >= control.consec) {
        report.converged = true;
        break;
      }
    } else {
      small = 0;
    }
  }
  report.stop_index = std::min(k, control.k_max);
  report.last_term = to_double(last);
  report.magnitude = to_double(acc.magnitude());
  return {acc.value(), report};
}

}  // namespace num
}  // namespace astree
