#include "astree/senescence_analytics.hpp"

#include <algorithm>
#include <cmath>

#include "astree/numerics.hpp"
#include "astree/qseries.hpp"

namespace astree {

namespace {

template <class Real>
struct LimitSums {
  num::Tracked<Real> proliferating;  // N
  num::Tracked<Real> senescent;      // D - N
  std::vector<SeriesReport> reports;
};

// Terms whose size is within this factor of their own rounding noise carry no
// information; the outer sums treat them as zero.
constexpr double kNoiseFactor = 8.0;

template <class Real>
LimitSums<Real> limit_sums(const Real& tau, const Real& c, const SeriesControl& control,
                           LimitAccuracy accuracy) {
  using std::abs;
  using std::exp;
  kernel::Coefficients<Real> q(c);
  const Real eps = num::epsilon<Real>();
  // exp(-c^m tau) depends on k + j only, so one table serves every inner sum.
  std::vector<Real> decay_pos;
  std::vector<Real> decay_neg;
  auto decay = [&](int m) -> const Real& {
    auto& table = m >= 0 ? decay_pos : decay_neg;
    const auto idx = static_cast<std::size_t>(m >= 0 ? m : -m);
    while (table.size() <= idx) {
      const int e = static_cast<int>(table.size());
      table.push_back(exp(-q.pow_c(m >= 0 ? e : -e) * tau));
    }
    return table[idx];
  };
  // S(c^j tau), j may be negative.
  auto inner = [&](int j, std::vector<SeriesReport>& reports) {
    auto [sum, report] = num::sum_series<Real>([&](int k) { return q.a(k) * decay(k + j); }, control);
    reports.push_back(report);
    if (!report.converged) {
      throw ConvergenceError("limit_fraction: inner sum at c^" + std::to_string(j) +
                             " tau reached k_max before convergence");
    }
    return num::Tracked<Real>{sum, Real(report.magnitude)};
  };
  auto negligible = [&](const num::Tracked<Real>& term, const Real& partial, const Real& tol) {
    return abs(term.value) <= tol * abs(partial) ||
           abs(term.value) <= Real(kNoiseFactor) * eps * term.magnitude;
  };

  LimitSums<Real> out;
  num::CompensatedSum<Real> num_acc;
  num::CompensatedSum<Real> sen_acc;
  const Real tol(control.rel_tol);
  int small = 0;
  SeriesReport outer;
  // Index past which both families of terms are in their decaying range.
  const double front = std::ceil(std::abs(std::log(static_cast<double>(tau))) /
                                 std::log(static_cast<double>(c)));
  const int i_max = static_cast<int>(front) + control.k_max;
  int i = 0;
  Real last = 0;
  for (; i <= i_max; ++i) {
    // The proliferating terms only start to decay once c^i tau has passed 1,
    // and the senescent ones once c^{-i-1} tau has dropped below it; before
    // that a small term is cancellation noise, not convergence.
    const Real scale = Real(std::ldexp(1.0, -i));
    num::Tracked<Real> p_term = inner(i, out.reports);
    p_term.value *= scale;
    p_term.magnitude *= scale;
    num::Tracked<Real> s_term = inner(-i - 1, out.reports);
    s_term.value *= 2;
    s_term.magnitude *= 2;
    num_acc.add(p_term.value, p_term.magnitude);
    sen_acc.add(s_term.value, s_term.magnitude);
    last = p_term.value + s_term.value;
    const bool past_front = q.pow_c(i) * tau >= 1 && q.pow_c(-i - 1) * tau <= 1;
    const Real partial_d = num_acc.value() + sen_acc.value();
    const bool per_component = accuracy == LimitAccuracy::Components;
    if (past_front && negligible(p_term, per_component ? num_acc.value() : partial_d, tol) &&
        negligible(s_term, per_component ? sen_acc.value() : partial_d, tol)) {
      if (++small >= control.consec) {
        outer.converged = true;
        break;
      }
    } else {
      small = 0;
    }
  }
  outer.stop_index = std::min(i, i_max);
  outer.last_term = static_cast<double>(last);
  outer.magnitude = static_cast<double>(num_acc.magnitude() + sen_acc.magnitude());
  out.reports.push_back(outer);
  if (!outer.converged) {
    throw ConvergenceError("limit_fraction: outer sum reached i=" + std::to_string(i_max) +
                           " before convergence");
  }
  out.proliferating = {num_acc.value(), num_acc.magnitude()};
  out.senescent = {sen_acc.value(), sen_acc.magnitude()};
  return out;
}

void require_inputs(double t, double c, double r, const char* op) {
  validate(Parameters{c, r, std::nullopt}, Context::Analytic);
  require_well_conditioned(c, op);
  if (!std::isfinite(t) || t <= 0.0) {
    throw ValidationError(std::string(op) + ": t must be positive (both sums vanish at t=0)");
  }
}

SeriesControl effective_control(double c, const SeriesControl& control) {
  SeriesControl out = control;
  if (c < kAutoExtendedBelowC && !out.precision.is_extended()) {
    out.precision = Precision::extended();
  }
  return out;
}

struct Evaluated {
  double proliferating;
  double senescent;
  double b_inf;
  std::vector<SeriesReport> reports;
  Precision precision;
};

// Evaluates both sums, raising the working precision until the results are
// resolved above rounding noise.
Evaluated evaluate(double t, double c, double r, const SeriesControl& control, LimitAccuracy accuracy,
                   bool want_b_inf) {
  SeriesControl ctl = effective_control(c, control);
  for (;;) {
    try {
      return with_precision(ctl.precision, [&](auto tag) {
        using Real = decltype(tag);
        using std::abs;
        const Real tau = Real(t) / Real(r);
        LimitSums<Real> sums = limit_sums(tau, Real(c), ctl, accuracy);
        if (accuracy == LimitAccuracy::Components) {
          num::check_conditioning(sums.proliferating, "limit_fraction numerator");
          num::check_conditioning(sums.senescent, "limit_fraction senescent sum");
        } else {
          // Both parts only need to be resolved on the scale of D.
          const Real d = abs(sums.proliferating.value + sums.senescent.value);
          num::check_conditioning(num::Tracked<Real>{d, sums.proliferating.magnitude}, "limit_fraction numerator");
          num::check_conditioning(num::Tracked<Real>{d, sums.senescent.magnitude}, "limit_fraction senescent sum");
        }
        return Evaluated{static_cast<double>(sums.proliferating.value),
                         static_cast<double>(sums.senescent.value),
                         want_b_inf ? static_cast<double>(kernel::b_infinity(Real(c))) : 0.0,
                         std::move(sums.reports),
                         ctl.precision};
      });
    } catch (const ConditioningError&) {
      if (ctl.precision.is_extended() && ctl.precision.digits >= kMaxAutoDigits) throw;
      ctl.precision = ctl.precision.is_extended() ? Precision::extended(2 * ctl.precision.digits)
                                                  : Precision::extended();
    }
  }
}

}  // namespace

LimitCurvePoint limit_fraction(double t, double c, double r, const SeriesControl& control,
                               LimitAccuracy accuracy) {
  require_inputs(t, c, r, "limit_fraction");
  Evaluated e = evaluate(t, c, r, control, accuracy, false);
  LimitCurvePoint p;
  p.t = t;
  p.numerator = e.proliferating;
  p.denominator = e.proliferating + e.senescent;
  // In fraction mode either part may carry rounding noise of either sign
  // below the resolved scale.
  p.L = std::clamp(e.proliferating / p.denominator, 0.0, 1.0);
  p.senescent_fraction = std::clamp(e.senescent / p.denominator, 0.0, 1.0);
  p.reports = std::move(e.reports);
  p.precision_used = e.precision;
  return p;
}

ExpectedCounts expected_counts_asymptotic(double t, double c, double r, int h,
                                          const SeriesControl& control) {
  require_inputs(t, c, r, "expected_counts_asymptotic");
  if (h < 0) throw ValidationError("expected_counts_asymptotic: h must be nonnegative");
  const Evaluated e = evaluate(t, c, r, control, LimitAccuracy::Components, true);
  const double scale = e.b_inf * std::ldexp(1.0, h);
  return ExpectedCounts{scale * e.proliferating, scale * e.senescent};
}

}  // namespace astree
