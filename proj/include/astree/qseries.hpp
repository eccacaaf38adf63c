// q-series constants of the mean-profile generator:
//
//   a_k = (-1)^k c^k / prod_{j=1..k} (c^j - 1),
//   b_k = prod_{j=1..k} c^j / (c^j - 1),
//   b_inf = 1 / prod_{l>=1} (1 - c^{-l}).
//
// The lower-triangular Toeplitz matrices E = (a_{i-j}) and F = (b_{i-j}) are
// mutually inverse and E holds the eigenvectors of the bidiagonal generator
// of the mean profile ODE.
#pragma once

#include <cmath>
#include <iosfwd>
#include <vector>

#include "astree/core.hpp"
#include "astree/numerics.hpp"

namespace astree {

struct QTable {
  double c = 0.0;
  std::vector<double> a;  // a_0 .. a_K
  std::vector<double> b;  // b_0 .. b_K
  double b_inf = 0.0;
  SeriesControl control;

  double a_at(int k) const { return k < 0 || k >= static_cast<int>(a.size()) ? 0.0 : a[k]; }
  double b_at(int k) const { return k < 0 || k >= static_cast<int>(b.size()) ? 0.0 : b[k]; }
};

/// Tabulates a_k, b_k for k = 0..control.k_max and b_inf. Requires c > 1.
QTable make_qtable(double c, const SeriesControl& control = {});

double coeff_a(int k, double c);
double coeff_b(int k, double c);
double b_infinity(double c, const SeriesControl& control = {});

/// sum_{k=0..n} b_{n-k} a_k, the (F E) entry at offset n: 1 for n = 0 and
/// zero for n > 0 up to rounding. Near c = 1 the terms grow past 1e15 and the
/// sum is formed from 50-digit coefficients instead.
double inverse_identity_residual(int n, double c);

/// max |(A E)_{ij} + c^{-j} e_{ij}| over the K x K truncations, rows i < K-1.
double eigen_residual(int K, double c);

/// sum_{k>=0} a_k c^{N k}, which vanishes for every N >= 0. A cancellation
/// stress test for the alternating series. Throws ConvergenceError.
double euler_vanishing_sum(int N, double c, const SeriesControl& control = {});

/// CSV `k,a_k,b_k` followed by `# b_inf=<value>`.
void write_qtable_csv(std::ostream& out, const QTable& table);

namespace kernel {

/// a_k and b_k in working precision Real, built by the multiplicative
/// recurrences a_k = -a_{k-1} c / (c^k - 1), b_k = b_{k-1} c^k / (c^k - 1).
/// The table grows on demand; a(k) = b(k) = 0 for k < 0.
template <class Real>
class Coefficients {
 public:
  explicit Coefficients(const Real& c, int k_initial = 0) : c_(c) {
    using std::log;
    log_c_ = log(c_);
    a_.push_back(Real(1));
    b_.push_back(Real(1));
    extend(k_initial);
  }

  const Real& c() const { return c_; }
  const Real& log_c() const { return log_c_; }

  void extend(int k_max) {
    for (int k = static_cast<int>(a_.size()); k <= k_max; ++k) {
      const Real ck_minus_1 = num::expm1(Real(k) * log_c_);  // c^k - 1
      a_.push_back(-a_.back() * c_ / ck_minus_1);
      b_.push_back(b_.back() * (ck_minus_1 + 1) / ck_minus_1);
    }
  }

  Real a(int k) {
    if (k < 0) return Real(0);
    extend(k);
    return a_[k];
  }
  Real b(int k) {
    if (k < 0) return Real(0);
    extend(k);
    return b_[k];
  }
  const std::vector<Real>& a_values() const { return a_; }
  const std::vector<Real>& b_values() const { return b_; }

  /// c^x via exp(x log c).
  /// c^x, each power computed once as exp(x log c) and cached.
  const Real& pow_c(int x) const {
    using std::exp;
    auto& table = x >= 0 ? pow_pos_ : pow_neg_;
    const auto idx = static_cast<std::size_t>(x >= 0 ? x : -x);
    while (table.size() <= idx) {
      const int k = static_cast<int>(table.size());
      table.push_back(exp(Real(x >= 0 ? k : -k) * log_c_));
    }
    return table[idx];
  }

 private:
  mutable std::vector<Real> pow_pos_;
  mutable std::vector<Real> pow_neg_;
  Real c_;
  Real log_c_;
  std::vector<Real> a_;
  std::vector<Real> b_;
};

/// 1 / prod_{l>=1} (1 - c^{-l}); stops once the tail bound c^{-l} c/(c-1)
/// falls below the working epsilon.
template <class Real>
Real b_infinity(const Real& c) {
  using std::exp;
  using std::log;
  const Real log_c = log(c);
  const Real tail_factor = c / (c - 1);
  num::CompensatedSum<Real> log_prod;
  for (int l = 1; l < 10'000'000; ++l) {
    const Real q_l = exp(-Real(l) * log_c);
    log_prod.add(num::log1p(Real(-q_l)));
    if (q_l * tail_factor < num::epsilon<Real>()) break;
  }
  return exp(-log_prod.value());
}

}  // namespace kernel
}  // namespace astree
