#include "doctest.h"

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include <boost/multiprecision/mpfr.hpp>

#include "astree/profile_analytics.hpp"
#include "astree/qseries.hpp"

using namespace astree;
using Big = boost::multiprecision::mpfr_float_100;

namespace {

// Classical RK4 on y_n' = c^{-(n-1)} y_{n-1} - c^{-n} y_n, fixed step.
std::vector<double> rk4_profile(double t, int depth_max, double c, int steps) {
  const int N = depth_max + 1;
  std::vector<double> rate(N);
  for (int n = 0; n < N; ++n) rate[n] = std::pow(c, -n);
  auto deriv = [&](const std::vector<double>& y) {
    std::vector<double> d(N);
    for (int n = 0; n < N; ++n) d[n] = (n > 0 ? rate[n - 1] * y[n - 1] : 0.0) - rate[n] * y[n];
    return d;
  };
  std::vector<double> y(N, 0.0);
  y[0] = 1.0;
  const double h = t / steps;
  for (int s = 0; s < steps; ++s) {
    const auto k1 = deriv(y);
    std::vector<double> tmp(N);
    for (int n = 0; n < N; ++n) tmp[n] = y[n] + 0.5 * h * k1[n];
    const auto k2 = deriv(tmp);
    for (int n = 0; n < N; ++n) tmp[n] = y[n] + 0.5 * h * k2[n];
    const auto k3 = deriv(tmp);
    for (int n = 0; n < N; ++n) tmp[n] = y[n] + h * k3[n];
    const auto k4 = deriv(tmp);
    for (int n = 0; n < N; ++n) y[n] += h / 6.0 * (k1[n] + 2 * k2[n] + 2 * k3[n] + k4[n]);
  }
  return y;
}

// E[e^{sT} 1{T <= t}] for the phase-type chain 0 -> 1 -> ... -> m -> absorbed:
// integrate p' = p Q together with I' = e^{s u} lambda_m p_m.
double phase_type_mgf(double s, double t, const std::vector<double>& rates, int steps) {
  const int m = static_cast<int>(rates.size());
  auto deriv = [&](double u, const std::vector<double>& y) {
    std::vector<double> d(m + 1);
    for (int l = 0; l < m; ++l) d[l] = (l > 0 ? rates[l - 1] * y[l - 1] : 0.0) - rates[l] * y[l];
    d[m] = std::exp(s * u) * rates[m - 1] * y[m - 1];
    return d;
  };
  std::vector<double> y(m + 1, 0.0);
  y[0] = 1.0;
  const double h = t / steps;
  for (int k = 0; k < steps; ++k) {
    const double u = k * h;
    const auto k1 = deriv(u, y);
    std::vector<double> tmp(m + 1);
    for (int l = 0; l <= m; ++l) tmp[l] = y[l] + 0.5 * h * k1[l];
    const auto k2 = deriv(u + 0.5 * h, tmp);
    for (int l = 0; l <= m; ++l) tmp[l] = y[l] + 0.5 * h * k2[l];
    const auto k3 = deriv(u + 0.5 * h, tmp);
    for (int l = 0; l <= m; ++l) tmp[l] = y[l] + h * k3[l];
    const auto k4 = deriv(u + h, tmp);
    for (int l = 0; l <= m; ++l) y[l] += h / 6.0 * (k1[l] + 2 * k2[l] + 2 * k3[l] + k4[l]);
  }
  return y[m];
}

Big big_a(int k, const Big& c) {
  Big num = boost::multiprecision::pow(c, k);
  Big den = 1;
  for (int j = 1; j <= k; ++j) den *= boost::multiprecision::pow(c, j) - 1;
  return (k % 2 ? -num : num) / den;
}

Big big_b_inf(const Big& c) {
  Big prod = 1;
  for (int l = 1; l <= 4000; ++l) prod *= 1 - boost::multiprecision::pow(c, -l);
  return 1 / prod;
}

// b_inf sum_k a_k c^{k w} exp(-c^{k-i} t), directly in 100 digits.
Big big_series(int i, double t, double c, int w) {
  const Big cb(c);
  Big acc = 0;
  for (int k = 0; k <= 120; ++k) {
    acc += big_a(k, cb) * boost::multiprecision::pow(cb, k * w) *
           boost::multiprecision::exp(-boost::multiprecision::pow(cb, k - i) * Big(t));
  }
  return big_b_inf(cb) * acc;
}

}  // namespace

TEST_CASE("y_0 and y_1 in closed form") {
  for (double c : {1.3, 2.0, 3.0}) {
    for (double t : {0.1, 1.0, 4.0}) {
      CHECK(mean_occupancy(0, t, c) == doctest::Approx(std::exp(-t)).epsilon(1e-14));
      const double y1 = c / (c - 1) * (std::exp(-t / c) - std::exp(-t));
      CHECK(mean_occupancy(1, t, c) == doctest::Approx(y1).epsilon(1e-13));
      CHECK(mean_count(1, t, c) == doctest::Approx(2 * y1).epsilon(1e-13));
    }
  }
}

TEST_CASE("mean occupancy solves the profile ODE") {
  for (double c : {1.3, 2.0, 3.0}) {
    for (double t : {0.5, 1.0, 3.0}) {
      const auto rk = rk4_profile(t, 12, c, 4000);
      const auto dp = ode_profile(t, 12, c, 1e-12);
      for (int n = 0; n <= 12; ++n) {
        CAPTURE(c);
        CAPTURE(t);
        CAPTURE(n);
        const double y = mean_occupancy(n, t, c);
        CHECK(std::abs(y - rk[n]) < 1e-10);
        CHECK(std::abs(y - dp[n]) < 1e-10);
      }
    }
  }
}

TEST_CASE("ode_profile accepts c below one") {
  const auto y = ode_profile(1.0, 10, 0.8, 1e-10);
  double mass = 0.0;
  for (int n = 0; n <= 10; ++n) mass += y[n];
  CHECK(y[0] == doctest::Approx(std::exp(-1.0)).epsilon(1e-9));
  CHECK(mass <= 1.0 + 1e-9);
}

TEST_CASE("mean occupancies carry total dyadic mass one") {
  for (double c : {1.5, 2.0}) {
    const double t = 3.0;
    double mass = 0.0;
    for (int n = 0; n <= 60; ++n) mass += mean_occupancy(n, t, c, Precision::extended());
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("extended and double precision agree where double is well conditioned") {
  for (int n : {0, 3, 8}) {
    const double d = mean_occupancy(n, 2.0, 2.0);
    const double e = mean_occupancy(n, 2.0, 2.0, Precision::extended(60));
    CHECK(d == doctest::Approx(e).epsilon(1e-12));
  }
}

TEST_CASE("ill-conditioned evaluations escalate precision instead of losing digits") {
  // Large n at t ~ c^n, and tiny t: cancellation far beyond double precision.
  const double ref = mean_occupancy(40, std::pow(1.2, 40), 1.2, Precision::extended(120));
  CHECK(mean_occupancy(40, std::pow(1.2, 40), 1.2) == doctest::Approx(ref).epsilon(1e-14));
  // y_6(t) ~ t^6 prod c^{-l} / 6! for small t.
  const double t = 1e-3;
  double lead = std::pow(t, 6) / 720.0;
  for (int l = 0; l < 6; ++l) lead *= std::pow(1.3, -l);
  CHECK(std::abs(mean_count(6, t, 1.3) - 64 * lead) < 1e6 * std::numeric_limits<double>::epsilon());
  CHECK_THROWS_AS(mean_occupancy(3, 1.0, 1.01), ConditioningError);
  CHECK_THROWS_AS(mean_occupancy(-1, 1.0, 2.0), ValidationError);
}

TEST_CASE("limit profile matches a 100-digit direct sum") {
  for (double c : {1.5, 2.0, 3.0}) {
    for (int i : {-2, 0, 3}) {
      for (double t : {0.3, 1.0, 5.0}) {
        const double ref = static_cast<double>(big_series(i, t, c, 0));
        CHECK(limit_profile(i, t, c).value == doctest::Approx(ref).epsilon(1e-10));
      }
    }
  }
}

TEST_CASE("limit profile properties") {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> ut(0.05, 10.0);
  std::uniform_int_distribution<int> ui(-3, 5);
  for (int k = 0; k < 20; ++k) {
    const double t = ut(rng);
    const int i = ui(rng);
    const double c = 2.0;
    const double lhs = limit_profile(i, t, c).value;
    const double rhs = limit_profile(i + 1, c * t, c).value;
    CHECK(std::abs(lhs - rhs) <= 1e-12);
  }
  // The normalized mean converges to the limit profile.
  const int n = 20;
  for (int i = -2; i <= 2; ++i) {
    const double exact = mean_occupancy(n + i, std::pow(2.0, n), 2.0, Precision::extended());
    const double lim = limit_profile(i, 1.0, 2.0).value;
    CHECK(std::abs(exact / lim - 1) < 0.01);
  }
  // Dyadic mass.
  double total = 0.0;
  for (int i = -40; i <= 40; ++i) total += limit_profile(i, 1.0, 2.0).value;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("restricted hypoexponential MGF matches the phase-type ODE") {
  SUBCASE("single exponential has a closed form") {
    const auto spec = HypoexpSpec::geometric(0, 2.0);
    for (double s : {-1.0, 0.0, 0.5}) {
      const double t = 2.0;
      const double ref = s == 1.0 ? t : (1 - std::exp(-(1 - s) * t)) / (1 - s);
      CHECK(hypoexp_restricted_mgf(s, t, spec) == doctest::Approx(ref).epsilon(1e-13));
    }
  }
  for (double c : {1.5, 2.0, 3.0}) {
    for (int m : {1, 2, 4}) {
      const auto spec = HypoexpSpec::geometric(m, c);
      REQUIRE(spec.rates.size() == static_cast<std::size_t>(m + 1));
      for (double s : {-0.5, 0.0, 0.1}) {
        for (double t : {0.5, 3.0, 10.0}) {
          CAPTURE(c);
          CAPTURE(m);
          CAPTURE(s);
          CAPTURE(t);
          const double ref = phase_type_mgf(s, t, spec.rates, 20000);
          // Double precision either answers accurately or refuses.
          try {
            const double v = hypoexp_restricted_mgf(s, t, spec);
            CHECK(v == doctest::Approx(ref).epsilon(1e-9));
          } catch (const ConditioningError&) {
            CHECK(t < 1.0);
          }
          CHECK(hypoexp_restricted_mgf(s, t, spec, Precision::extended()) ==
                doctest::Approx(ref).epsilon(1e-9));
        }
      }
    }
  }
}

TEST_CASE("covariance anchors") {
  for (double c : {1.5, 2.0, 3.0}) {
    for (double t : {0.2, 1.0, 2.5}) {
      const double y0 = std::exp(-t);
      const double y1 = mean_occupancy(1, t, c);
      CHECK(std::abs(profile_cov_exact(0, 0, t, c) - y0 * (1 - y0)) <= 1e-12);
      CHECK(std::abs(profile_cov_exact(0, 1, t, c) + 2 * y0 * y1) <= 1e-12);
      CHECK(profile_cov_exact(1, 0, t, c) == profile_cov_exact(0, 1, t, c));
    }
  }
  CHECK(profile_cov_exact(3, 4, 0.0, 2.0) == 0.0);
}

TEST_CASE("Var X_1 from the two-child calculation") {
  // Both depth-1 vertices external: the root splits at s <= t and neither
  // child splits in (s, t].
  for (double c : {1.5, 3.0}) {
    for (double t : {0.5, 2.0}) {
      const double k = 1 - 2 / c;
      const double both = std::exp(-2 * t / c) * (1 - std::exp(-k * t)) / k;
      const double y1 = c / (c - 1) * (std::exp(-t / c) - std::exp(-t));
      const double var = 2 * y1 * (1 - y1) + 2 * (both - y1 * y1);
      CHECK(profile_cov_exact(1, 1, t, c) == doctest::Approx(var).epsilon(1e-12));
      CHECK(pair_cov(1, 1, 0, t, c) == doctest::Approx(both - y1 * y1).epsilon(1e-12));
    }
  }
}

TEST_CASE("covariance precision modes agree") {
  const double d = profile_cov_exact(4, 5, 8.0, 2.0);
  const double e = profile_cov_exact(4, 5, 8.0, 2.0, Precision::extended());
  CHECK(d == doctest::Approx(e).epsilon(1e-9));
}

TEST_CASE("regime constants") {
  const CovRegime sup = classify_regime(2.0);
  CHECK(sup.tag == RegimeTag::Supercritical);
  CHECK(sup.prefactor == doctest::Approx(4.0 / 3.0).epsilon(1e-15));
  const CovRegime sub = classify_regime(1.2);
  CHECK(sub.tag == RegimeTag::Subcritical);
  CHECK(sub.prefactor == doctest::Approx(2.0 / (2.0 - 1.44)).epsilon(1e-15));
  CHECK(classify_regime(std::sqrt(2.0)).tag == RegimeTag::Critical);
  CHECK(to_string(RegimeTag::Critical) == "critical");
}

TEST_CASE("a_{i,i'} factorizes into two single sums") {
  for (double c : {1.3, 2.0}) {
    for (auto [i, ip] : {std::pair{0, 0}, std::pair{0, 1}, std::pair{-1, 2}}) {
      const double t = 1.0;
      const Big ref = big_series(i, t, c, 1) * big_series(ip, t, c, 1);
      CHECK(cov_prefactor(i, ip, t, c).value == doctest::Approx(static_cast<double>(ref)).epsilon(1e-9));
    }
  }
}

TEST_CASE("subcritical asymptotic covariance is approached") {
  // c = 1.3: the exact covariance at time c^n divided by the leading-order
  // term tends to one.
  const double c = 1.3;
  const int n = 30;
  const SeriesControl ctl{1e-14, 3, 200, Precision::extended()};
  const AsymptoticCov a = profile_cov_asymptotic(0, 0, n, 1.0, c, ctl);
  CHECK(a.regime.tag == RegimeTag::Subcritical);
  const double exact = profile_cov_exact(n, n, std::pow(c, n), c, Precision::extended());
  CHECK(exact / a.value == doctest::Approx(1.0).epsilon(0.02));
}
