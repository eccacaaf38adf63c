#include "astree/qseries.hpp"

#include <algorithm>
#include <ostream>

#include <Eigen/Dense>

namespace astree {

namespace {
void require_c_above_one(double c) { validate(Parameters{c, 1.0, std::nullopt}, Context::Analytic); }
}  // namespace

QTable make_qtable(double c, const SeriesControl& control) {
  require_c_above_one(c);
  QTable t;
  t.c = c;
  t.control = control;
  with_precision(control.precision, [&](auto tag) {
    using Real = decltype(tag);
    const kernel::Coefficients<Real> coeffs(Real(c), control.k_max);
    for (const auto& x : coeffs.a_values()) t.a.push_back(static_cast<double>(x));
    for (const auto& x : coeffs.b_values()) t.b.push_back(static_cast<double>(x));
    t.b_inf = static_cast<double>(kernel::b_infinity(Real(c)));
    return 0;
  });
  return t;
}

double coeff_a(int k, double c) {
  require_c_above_one(c);
  if (k < 0) return 0.0;
  return kernel::Coefficients<double>(c, k).a_values()[k];
}

double coeff_b(int k, double c) {
  require_c_above_one(c);
  if (k < 0) return 0.0;
  return kernel::Coefficients<double>(c, k).b_values()[k];
}

double b_infinity(double c, const SeriesControl& control) {
  require_c_above_one(c);
  return with_precision(control.precision, [&](auto tag) {
    using Real = decltype(tag);
    return static_cast<double>(kernel::b_infinity(Real(c)));
  });
}

double inverse_identity_residual(int n, double c) {
  require_c_above_one(c);
  if (n < 0) throw ValidationError("inverse_identity_residual: n must be nonnegative");
  auto residual = [&](auto tag) {
    using Real = decltype(tag);
    using std::abs;
    kernel::Coefficients<Real> coeffs(Real(c), n);
    num::CompensatedSum<Real> acc;
    Real magnitude = 0;
    for (int k = 0; k <= n; ++k) {
      const Real term = coeffs.b(n - k) * coeffs.a(k);
      acc.add(term);
      magnitude += abs(term);
    }
    return num::Tracked<double>{static_cast<double>(acc.value()), static_cast<double>(magnitude)};
  };
  const auto plain = residual(0.0);
  // Each coefficient carries O(k) rounding errors from its recurrence; when
  // that noise could exceed the smallest tolerance in use, redo the sum with
  // coefficients in extended precision.
  if (plain.magnitude * (n + 1) * num::epsilon<double>() <= 1e-12) return plain.value;
  return with_precision(Precision::extended(50), residual).value;
}

double eigen_residual(int K, double c) {
  require_c_above_one(c);
  if (K < 2) throw ValidationError("eigen_residual: K must be at least 2");
  kernel::Coefficients<double> coeffs(c, K);
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(K, K);
  Eigen::MatrixXd E = Eigen::MatrixXd::Zero(K, K);
  for (int i = 0; i < K; ++i) {
    A(i, i) = -coeffs.pow_c(-i);
    if (i > 0) A(i, i - 1) = coeffs.pow_c(-(i - 1));
    for (int j = 0; j <= i; ++j) E(i, j) = coeffs.a(i - j);
  }
  const Eigen::MatrixXd AE = A * E;
  double worst = 0.0;
  for (int i = 0; i < K - 1; ++i) {
    for (int j = 0; j <= i; ++j) {
      worst = std::max(worst, std::abs(AE(i, j) + coeffs.pow_c(-j) * E(i, j)));
    }
  }
  return worst;
}

double euler_vanishing_sum(int N, double c, const SeriesControl& control) {
  require_c_above_one(c);
  if (N < 0) throw ValidationError("euler_vanishing_sum: N must be nonnegative");
  return with_precision(control.precision, [&](auto tag) {
    using Real = decltype(tag);
    using std::log;
    using std::exp;
    const Real cc(c);
    const Real log_c = log(cc);
    const Real ratio_num = -exp(Real(N + 1) * log_c);  // -c^{N+1}
    Real term = 1;
    auto [sum, report] = num::sum_series<Real>(
        [&](int k) {
          if (k > 0) term = term * ratio_num / num::expm1(Real(k) * log_c);
          return term;
        },
        control);
    if (!report.converged) {
      throw ConvergenceError("euler_vanishing_sum: k_max reached before convergence");
    }
    return static_cast<double>(sum);
  });
}

void write_qtable_csv(std::ostream& out, const QTable& table) {
  out << "k,a_k,b_k\n";
  for (std::size_t k = 0; k < table.a.size(); ++k) {
    out << k << ',' << format_real(table.a[k]) << ',' << format_real(table.b[k]) << '\n';
  }
  out << "# b_inf=" << format_real(table.b_inf) << '\n';
}

}  // namespace astree
