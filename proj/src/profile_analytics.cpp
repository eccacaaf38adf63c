#include "astree/profile_analytics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <boost/numeric/odeint.hpp>

#include "astree/numerics.hpp"
#include "astree/qseries.hpp"

namespace astree {

namespace {

using kernel::Coefficients;
using num::Tracked;

void require_analytic(double c, const char* op) {
  validate(Parameters{c, 1.0, std::nullopt}, Context::Analytic);
  require_well_conditioned(c, op);
}

void require_time(double t, const char* op) {
  if (!std::isfinite(t) || t < 0.0) {
    throw ValidationError(std::string(op) + ": t must be finite and nonnegative");
  }
}

// (1 - exp(-delta t)) / delta, with the removable singularity at delta = 0
// handled by a four-term Taylor expansion.
template <class Real>
Real phi(const Real& delta, const Real& t) {
  using std::abs;
  const Real x = delta * t;
  if (abs(x) < Real(1e-6)) {
    return t * (1 - x / 2 + x * x / 6 - x * x * x / 24);
  }
  return -num::expm1(-x) / delta;
}

// Partial-fraction form of the hypoexponential law with rates r_l = c^{-l}:
// density sum_l W_l r_l exp(-r_l x), W_l = prod_{j != l} r_j / (r_j - r_l).
template <class Real>
class Hypoexp {
 public:
  Hypoexp(const Real& log_c, int m) {
    using std::abs;
    using std::exp;
    using std::log;
    rates_.reserve(m + 1);
    weights_.reserve(m + 1);
    for (int l = 0; l <= m; ++l) {
      // r_j / (r_j - r_l) = -1 / expm1((j - l) log c); accumulate log|W_l|.
      Real log_mag = 0;
      for (int j = 0; j <= m; ++j) {
        if (j != l) log_mag -= log(abs(num::expm1(Real(j - l) * log_c)));
      }
      const bool negative = (m - l) % 2 != 0;
      const Real rate = exp(-Real(l) * log_c);
      rates_.push_back(rate);
      weights_.push_back((negative ? -1 : 1) * exp(log_mag) * rate);  // W_l r_l
    }
  }

  // E[exp(s T) 1{T <= t}]
  Tracked<Real> restricted_mgf(const Real& s, const Real& t) const {
    num::CompensatedSum<Real> acc;
    for (std::size_t l = 0; l < rates_.size(); ++l) acc.add(weights_[l] * phi(rates_[l] - s, t));
    return {acc.value(), acc.magnitude()};
  }

  // E[exp(-s (t - T)) 1{T <= t}] = exp(-s t) M(s, t). Each term is written
  // with a nonnegative phi argument so nothing overflows.
  Tracked<Real> discounted(const Real& s, const Real& t) const {
    using std::exp;
    num::CompensatedSum<Real> acc;
    const Real decay_s = exp(-s * t);
    for (std::size_t l = 0; l < rates_.size(); ++l) {
      const Real& r = rates_[l];
      const Real term = r >= s ? decay_s * phi(Real(r - s), t) : exp(-r * t) * phi(Real(s - r), t);
      acc.add(weights_[l] * term);
    }
    return {acc.value(), acc.magnitude()};
  }

 private:
  std::vector<Real> rates_;
  std::vector<Real> weights_;  // W_l r_l
};

template <class Real>
Tracked<Real> mean_kernel(Coefficients<Real>& q, int n, const Real& t) {
  using std::exp;
  num::CompensatedSum<Real> acc;
  for (int k = 0; k <= n; ++k) acc.add(q.a(k) * q.b(n - k) * exp(-q.pow_c(k - n) * t));
  return {acc.value(), acc.magnitude()};
}

// Conditional mean of Y at depth `depth` given the common ancestor at depth
// m split at time T: sum_k alpha_k exp(-lambda_k (t - T)) 1{T <= t} with
// alpha_k = a_k b_{depth-m-1-k}, lambda_k = c^{k-depth}.
template <class Real>
struct Lineage {
  std::vector<Real> alpha;
  std::vector<Real> lambda;
  std::vector<Tracked<Real>> discounted;
};

template <class Real>
Lineage<Real> lineage(Coefficients<Real>& q, const Hypoexp<Real>& h, int depth, int m,
                      const Real& t) {
  Lineage<Real> out;
  const int span = depth - m - 1;
  for (int k = 0; k <= span; ++k) {
    out.alpha.push_back(q.a(k) * q.b(span - k));
    out.lambda.push_back(q.pow_c(k - depth));
    out.discounted.push_back(h.discounted(out.lambda.back(), t));
  }
  return out;
}

template <class Real>
Tracked<Real> expectation(const Lineage<Real>& g) {
  using std::abs;
  num::CompensatedSum<Real> acc;
  for (std::size_t k = 0; k < g.alpha.size(); ++k) {
    acc.add(g.alpha[k] * g.discounted[k].value, abs(g.alpha[k]) * g.discounted[k].magnitude);
  }
  return {acc.value(), acc.magnitude()};
}

// y_{n,n',m}(t) for m < n <= n'.
template <class Real>
Tracked<Real> split_pair_cov(Coefficients<Real>& q, const Hypoexp<Real>& h, int n, int n_prime,
                             int m, const Real& t) {
  using std::abs;
  const Lineage<Real> g = lineage(q, h, n, m, t);
  const Lineage<Real> gp = (n == n_prime) ? g : lineage(q, h, n_prime, m, t);
  num::CompensatedSum<Real> joint;
  for (std::size_t k = 0; k < g.alpha.size(); ++k) {
    for (std::size_t kp = 0; kp < gp.alpha.size(); ++kp) {
      const Tracked<Real> d = h.discounted(Real(g.lambda[k] + gp.lambda[kp]), t);
      const Real coef = g.alpha[k] * gp.alpha[kp];
      joint.add(coef * d.value, abs(coef) * d.magnitude);
    }
  }
  const Tracked<Real> e = expectation(g);
  const Tracked<Real> ep = expectation(gp);
  return {joint.value() - e.value * ep.value, joint.magnitude() + e.magnitude * ep.magnitude};
}

// y_{n,n',n}(t) = delta_{n,n'} y_n - y_n y_n'.
template <class Real>
Tracked<Real> ancestral_pair_cov(const Tracked<Real>& y_n, const Tracked<Real>& y_np, bool same) {
  Tracked<Real> out{-y_n.value * y_np.value, y_n.magnitude * y_np.magnitude};
  if (same) {
    out.value += y_n.value;
    out.magnitude += y_n.magnitude;
  }
  return out;
}

template <class Real>
Tracked<Real> pair_cov_kernel(int n, int n_prime, int m, const Real& t, const Real& c) {
  Coefficients<Real> q(c, n_prime);
  if (m == n) {
    const auto y_n = mean_kernel(q, n, t);
    const auto y_np = mean_kernel(q, n_prime, t);
    return ancestral_pair_cov(y_n, y_np, n == n_prime);
  }
  const Hypoexp<Real> h(q.log_c(), m);
  return split_pair_cov(q, h, n, n_prime, m, t);
}

template <class Real>
Tracked<Real> profile_cov_kernel(int n, int n_prime, const Real& t, const Real& c) {
  Coefficients<Real> q(c, n_prime);
  num::CompensatedSum<Real> acc;
  for (int m = 0; m <= n; ++m) {
    // P[MRCA depth = m] = 2^{-min(m+1, n)}
    const Real weight = 1 / Real(std::ldexp(1.0, std::min(m + 1, n)));
    Tracked<Real> y;
    if (m == n) {
      y = ancestral_pair_cov(mean_kernel(q, n, t), mean_kernel(q, n_prime, t), n == n_prime);
    } else {
      const Hypoexp<Real> h(q.log_c(), m);
      y = split_pair_cov(q, h, n, n_prime, m, t);
    }
    acc.add(weight * y.value, weight * y.magnitude);
  }
  const Real scale = Real(std::ldexp(1.0, n + n_prime));
  return {scale * acc.value(), scale * acc.magnitude()};
}

template <class Real>
Real regime_prefactor(RegimeTag tag, const Real& c) {
  const Real c2 = c * c;
  switch (tag) {
    case RegimeTag::Subcritical:
      return 2 / (2 - c2);
    case RegimeTag::Critical:
      return 1;
    case RegimeTag::Supercritical:
      return c2 * c2 / (2 * (c2 - 1) * (c2 - 2));
  }
  return 0;
}

}  // namespace

std::string to_string(RegimeTag tag) {
  switch (tag) {
    case RegimeTag::Subcritical:
      return "subcritical";
    case RegimeTag::Critical:
      return "critical";
    case RegimeTag::Supercritical:
      return "supercritical";
  }
  return "unknown";
}

CovRegime classify_regime(double c) {
  validate(Parameters{c, 1.0, std::nullopt}, Context::Analytic);
  const double gap = c - std::numbers::sqrt2;
  if (std::abs(gap) < kCriticalBand) {
    return {RegimeTag::Critical, 1.0, "2^n n sqrt(2)^(i+i')"};
  }
  if (gap < 0) {
    return {RegimeTag::Subcritical, regime_prefactor(RegimeTag::Subcritical, c), "(2/c)^(2n+i+i')"};
  }
  return {RegimeTag::Supercritical, regime_prefactor(RegimeTag::Supercritical, c),
          "2^(n+i') c^(i-i')"};
}

HypoexpSpec HypoexpSpec::geometric(int m, double c) {
  if (m < 0) throw ValidationError("HypoexpSpec: m must be nonnegative");
  validate(Parameters{c, 1.0, std::nullopt}, Context::Analytic);
  HypoexpSpec spec{m, c, {}};
  for (int l = 0; l <= m; ++l) spec.rates.push_back(std::pow(c, -l));
  return spec;
}

double mean_occupancy(int n, double t, double c, const Precision& precision) {
  require_analytic(c, "mean_occupancy");
  require_time(t, "mean_occupancy");
  if (n < 0) throw ValidationError("mean_occupancy: n must be nonnegative");
  return with_escalation(precision, 400, [&](auto tag) {
    using Real = decltype(tag);
    Coefficients<Real> q(Real(c), n);
    using std::abs;
    using std::ldexp;
    const auto y = mean_kernel(q, n, Real(t));
    num::check_conditioning(Tracked<Real>{std::max<Real>(abs(y.value), ldexp(Real(1), -n)), y.magnitude},
                            "mean_occupancy");
    return static_cast<double>(y.value);
  });
}

double mean_count(int n, double t, double c, const Precision& precision) {
  return std::ldexp(mean_occupancy(n, t, c, precision), n);
}

SeriesValue limit_profile(int i, double t, double c, const SeriesControl& control) {
  require_analytic(c, "limit_profile");
  if (!(t > 0.0) || !std::isfinite(t)) throw ValidationError("limit_profile: t must be positive");
  return with_precision(control.precision, [&](auto tag) {
    using Real = decltype(tag);
    using std::exp;
    Coefficients<Real> q{Real(c)};
    const Real tt(t);
    auto [sum, report] =
        num::sum_series<Real>([&](int k) { return q.a(k) * exp(-q.pow_c(k - i) * tt); }, control);
    if (!report.converged) {
      throw ConvergenceError("limit_profile: k_max=" + std::to_string(control.k_max) +
                             " reached before convergence");
    }
    return SeriesValue{static_cast<double>(kernel::b_infinity(Real(c)) * sum), report};
  });
}

std::vector<double> ode_profile(double t, int depth_max, double c, double tol) {
  validate(Parameters{c, 1.0, std::nullopt}, Context::Simulate);
  require_time(t, "ode_profile");
  if (depth_max < 0) throw ValidationError("ode_profile: depth_max must be nonnegative");
  if (!(tol > 0.0)) throw ValidationError("ode_profile: tol must be positive");

  using State = std::vector<double>;
  namespace odeint = boost::numeric::odeint;
  State rate(depth_max + 1);
  for (int n = 0; n <= depth_max; ++n) rate[n] = std::pow(c, -n);
  State y(depth_max + 1, 0.0);
  y[0] = 1.0;
  if (t == 0.0) return y;

  auto rhs = [&rate](const State& x, State& dx, double) {
    for (std::size_t n = 0; n < x.size(); ++n) {
      dx[n] = -rate[n] * x[n] + (n > 0 ? rate[n - 1] * x[n - 1] : 0.0);
    }
  };
  try {
    auto stepper = odeint::make_controlled(tol, tol, odeint::runge_kutta_dopri5<State>());
    const double dt0 = std::min(t, 1e-3 / *std::max_element(rate.begin(), rate.end()));
    odeint::integrate_adaptive(stepper, rhs, y, 0.0, t, dt0);
  } catch (const odeint::odeint_error& e) {
    throw IntegrationError(std::string("ode_profile: ") + e.what());
  }
  for (double v : y) {
    if (!std::isfinite(v)) throw IntegrationError("ode_profile: non-finite state");
  }
  return y;
}

double hypoexp_restricted_mgf(double s, double t, const HypoexpSpec& spec,
                              const Precision& precision) {
  require_time(t, "hypoexp_restricted_mgf");
  if (!std::isfinite(s)) throw ValidationError("hypoexp_restricted_mgf: s must be finite");
  validate(Parameters{spec.c, 1.0, std::nullopt}, Context::Analytic);
  return with_precision(precision, [&](auto tag) {
    using Real = decltype(tag);
    using std::log;
    const Hypoexp<Real> h(log(Real(spec.c)), spec.m);
    const Tracked<Real> out = h.restricted_mgf(Real(s), Real(t));
    num::check_conditioning(out, "hypoexp_restricted_mgf");
    return static_cast<double>(out.value);
  });
}

double pair_cov(int n, int n_prime, int m, double t, double c, const Precision& precision) {
  require_analytic(c, "pair_cov");
  require_time(t, "pair_cov");
  if (!(0 <= m && m <= n && n <= n_prime)) {
    throw ValidationError("pair_cov: requires 0 <= m <= n <= n'");
  }
  if (t == 0.0) return 0.0;
  return with_precision(precision, [&](auto tag) {
    using Real = decltype(tag);
    const Tracked<Real> out = pair_cov_kernel(n, n_prime, m, Real(t), Real(c));
    num::check_conditioning(out, "pair_cov");
    return static_cast<double>(out.value);
  });
}

double profile_cov_exact(int n, int n_prime, double t, double c, const Precision& precision) {
  require_analytic(c, "profile_cov_exact");
  require_time(t, "profile_cov_exact");
  if (n < 0 || n_prime < 0) throw ValidationError("profile_cov_exact: depths must be nonnegative");
  if (n > n_prime) std::swap(n, n_prime);
  if (t == 0.0) return 0.0;
  const double value = with_precision(precision, [&](auto tag) {
    using Real = decltype(tag);
    const Tracked<Real> out = profile_cov_kernel(n, n_prime, Real(t), Real(c));
    num::check_conditioning(out, "profile_cov_exact");
    return static_cast<double>(out.value);
  });
  if (n == n_prime && value < -1e-9 * std::ldexp(1.0, 2 * n)) {
    throw ConditioningError("profile_cov_exact: negative variance " + format_real(value));
  }
  return value;
}

SeriesValue cov_prefactor(int i, int i_prime, double t, double c, const SeriesControl& control) {
  require_analytic(c, "cov_prefactor");
  if (!(t > 0.0) || !std::isfinite(t)) throw ValidationError("cov_prefactor: t must be positive");
  return with_precision(control.precision, [&](auto tag) {
    using Real = decltype(tag);
    using std::exp;
    Coefficients<Real> q{Real(c)};
    const Real tt(t);
    // The double sum factorizes into two single sums.
    auto factor = [&](int depth) {
      auto [sum, report] = num::sum_series<Real>(
          [&](int k) { return q.a(k) * q.pow_c(k) * exp(-tt * q.pow_c(k - depth)); }, control);
      if (!report.converged) throw ConvergenceError("cov_prefactor: k_max reached before convergence");
      return std::pair{sum, report};
    };
    const auto [fi, ri] = factor(i);
    const auto [fip, rip] = factor(i_prime);
    const Real b_inf = kernel::b_infinity(Real(c));
    SeriesReport report;
    report.converged = true;
    report.stop_index = std::max(ri.stop_index, rip.stop_index);
    report.last_term = std::max(std::abs(ri.last_term), std::abs(rip.last_term));
    report.magnitude = static_cast<double>(b_inf * b_inf) * ri.magnitude * rip.magnitude;
    return SeriesValue{static_cast<double>(b_inf * b_inf * fi * fip), report};
  });
}

AsymptoticCov profile_cov_asymptotic(int i, int i_prime, int n, double t, double c,
                                     const SeriesControl& control) {
  require_analytic(c, "profile_cov_asymptotic");
  if (n < 1) throw ValidationError("profile_cov_asymptotic: n must be positive");
  if (i > i_prime) std::swap(i, i_prime);
  const CovRegime regime = classify_regime(c);
  const double a_ii = cov_prefactor(i, i_prime, t, c, control).value;
  double scale = 0.0;
  switch (regime.tag) {
    case RegimeTag::Subcritical:
      scale = regime.prefactor * std::pow(2.0 / c, 2 * n + i + i_prime);
      break;
    case RegimeTag::Critical:
      scale = std::ldexp(1.0, n) * n * std::pow(std::numbers::sqrt2, i + i_prime);
      break;
    case RegimeTag::Supercritical:
      scale = regime.prefactor * std::ldexp(1.0, n + i_prime) * std::pow(c, i - i_prime);
      break;
  }
  return {a_ii * scale, regime, a_ii};
}

}  // namespace astree
