#include "doctest.h"

#include <cmath>
#include <random>
#include <sstream>

#include "astree/fit.hpp"
#include "astree/senescence_analytics.hpp"

using namespace astree;

namespace {

std::vector<Observation> curve(double c, double r, int points = 12, double noise = 0.0, unsigned seed = 0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> eps(0.0, noise > 0 ? noise : 1.0);
  std::vector<Observation> out;
  for (int i = 0; i < points; ++i) {
    const double t = 0.1 * std::pow(60.0, static_cast<double>(i) / (points - 1));
    double L = limit_fraction(t, c, r).L;
    if (noise > 0) L = std::clamp(L + eps(rng), 0.0, 1.0);
    out.push_back({t, L, 1.0});
  }
  return out;
}

std::vector<Observation> parse(const std::string& text) {
  std::istringstream in(text);
  return ingest(in);
}

std::string error_of(const std::string& text) {
  try {
    parse(text);
  } catch (const ValidationError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("ingest accepts both headers and skips comments") {
  const auto a = parse("# measured\nt,L\n0.5,0.9\n\n1.0,0.7\n");
  REQUIRE(a.size() == 2);
  CHECK(a[1].t == 1.0);
  CHECK(a[1].L == 0.7);
  CHECK(a[1].weight == 1.0);
  const auto b = parse("t,L,weight\n0.5,0.9,2\n1,0.5,0.25\n");
  REQUIRE(b.size() == 2);
  CHECK(b[0].weight == 2.0);
}

TEST_CASE("ingest errors name the line") {
  CHECK(error_of("time,L\n1,0.5\n").find("line 1") != std::string::npos);
  CHECK(error_of("t,L\n1,0.5\n2,abc\n").find("line 3") != std::string::npos);
  CHECK(error_of("t,L\n1,0.5,3\n").find("line 2") != std::string::npos);
  CHECK(error_of("t,L\n-1,0.5\n").find("line 2: t must be positive") != std::string::npos);
  CHECK(error_of("t,L,weight\n1,0.5,0\n").find("weight must be positive") != std::string::npos);
  CHECK(error_of("").find("no header") != std::string::npos);
  CHECK(error_of("t,L\n# nothing\n").find("no observations") != std::string::npos);
  // Every out-of-range L is listed at once.
  const std::string msg = error_of("t,L\n1,1.2\n2,0.5\n3,-0.1\n");
  CHECK(msg.find("line 2") != std::string::npos);
  CHECK(msg.find("line 4") != std::string::npos);
  CHECK(msg.find("line 3") == std::string::npos);
  CHECK_THROWS_AS(ingest_file("/nonexistent/astree.csv"), ValidationError);
}

TEST_CASE("noiseless data recover c") {
  for (double c : {1.3, 2.0, 4.0}) {
    CAPTURE(c);
    const FitResult f = fit_c(curve(c, 1.0));
    CHECK(std::abs(f.c_hat - c) < 1e-4);
    CHECK(f.sse < 1e-12);
    CHECK(f.certified);
    CHECK_FALSE(f.boundary);
    CHECK(f.valley.size() == 41);
    CHECK(f.iterations > 41);
  }
}

TEST_CASE("objective is zero at the truth and scales with the weights") {
  auto obs = curve(1.7, 1.0);
  CHECK(fit_objective(obs, 1.7, 1.0) == 0.0);
  const double base = fit_objective(obs, 2.0, 1.0);
  CHECK(base > 0.0);
  for (auto& o : obs) o.weight = 3.0;
  CHECK(fit_objective(obs, 2.0, 1.0) == doctest::Approx(3 * base).epsilon(1e-14));
  // Uniform weights do not move the optimum.
  CHECK(std::abs(fit_c(obs).c_hat - 1.7) < 1e-4);
  CHECK(std::isinf(fit_objective(obs, 1.001, 1.0)));
}

TEST_CASE("raw model times are rescaled by c^h") {
  const double c = 1.5;
  const int h = 6;
  auto obs = curve(c, 1.0);
  for (auto& o : obs) o.t *= std::pow(c, h);
  FitOptions opt;
  opt.h = h;
  CHECK(fit_objective(obs, c, 1.0, h) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(std::abs(fit_c(obs, opt).c_hat - c) < 1e-4);
}

TEST_CASE("c and r together") {
  FitOptions opt;
  opt.r = std::nullopt;
  const FitResult f = fit_c(curve(2.5, 0.5, 16), opt);
  CHECK(std::abs(f.c_hat - 2.5) < 1e-3);
  CHECK(std::abs(f.r_hat - 0.5) < 1e-3);
  for (const auto& v : f.valley) CHECK(v.r > 0.0);
}

TEST_CASE("noisy data stay close") {
  for (unsigned seed = 0; seed < 3; ++seed) {
    const FitResult f = fit_c(curve(1.6, 1.0, 20, 0.01, seed));
    CHECK(std::abs(f.c_hat - 1.6) < 0.05);
  }
}

TEST_CASE("bracket handling") {
  FitOptions opt;
  opt.search.c_lo = 1.01;
  const FitResult f = fit_c(curve(2.0, 1.0), opt);
  REQUIRE_FALSE(f.diagnostics.empty());
  CHECK(f.diagnostics.front().find("c_lo raised") != std::string::npos);
  CHECK(f.c_lo >= 1.05);

  // True c outside the bracket: the minimum lands on the edge.
  opt.search.c_lo = 1.1;
  opt.search.c_hi = 1.5;
  const FitResult edge = fit_c(curve(3.0, 1.0), opt);
  CHECK(edge.boundary);
  CHECK(edge.c_hat == doctest::Approx(1.5).epsilon(1e-5));
}

TEST_CASE("fit input errors") {
  auto obs = curve(2.0, 1.0, 2);
  CHECK_THROWS_AS(fit_c(obs), ValidationError);
  obs = curve(2.0, 1.0);
  FitOptions opt;
  opt.search.c_lo = 3.0;
  opt.search.c_hi = 2.0;
  CHECK_THROWS_AS(fit_c(obs, opt), ValidationError);
  opt = {};
  opt.r = -1.0;
  CHECK_THROWS_AS(fit_c(obs, opt), ValidationError);
  opt = {};
  opt.search.c_lo = 1.01;
  opt.search.c_hi = 1.04;
  CHECK_THROWS_AS(fit_c(obs, opt), ValidationError);
}

TEST_CASE("fitted curve CSV") {
  const auto obs = curve(2.0, 1.0, 3);
  const FitResult f = fit_c(curve(2.0, 1.0));
  std::ostringstream os;
  write_fit_curve_csv(os, obs, f);
  std::istringstream in(os.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "t,L_fit");
  int rows = 0;
  while (std::getline(in, line)) {
    const double L = std::stod(line.substr(line.find(',') + 1));
    CHECK(L == doctest::Approx(obs[rows].L).epsilon(1e-6));
    ++rows;
  }
  CHECK(rows == 3);
}
