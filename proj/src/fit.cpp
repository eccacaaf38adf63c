#include "astree/fit.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <random>
#include <sstream>

#include <boost/math/tools/minima.hpp>

#include "astree/senescence_analytics.hpp"

namespace astree {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(trim(field));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_field(const std::string& text, int line, const char* name) {
  double value = 0.0;
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || text.empty()) {
    throw ValidationError("line " + std::to_string(line) + ": cannot parse " + name + " '" + text + "'");
  }
  return value;
}

struct Minimum {
  double x = 0.0;
  double fx = kInf;
  double lo = 0.0;
  double hi = 0.0;
  bool boundary = false;
  bool shrunk = false;
  std::vector<std::pair<double, double>> scan;
};

// Scan then Brent on a one-dimensional objective over [lo, hi].
template <class F>
Minimum minimize_1d(F&& f, double lo, double hi, double tol, int points, int& evaluations) {
  Minimum m;
  points = std::max(points, 3);
  std::vector<double> xs(points);
  std::vector<double> fs(points);
  for (int k = 0; k < points; ++k) {
    xs[k] = lo + (hi - lo) * k / (points - 1);
    fs[k] = f(xs[k]);
    ++evaluations;
    if (!std::isfinite(fs[k])) fs[k] = kInf;
    m.scan.emplace_back(xs[k], fs[k]);
  }
  int first = 0;
  while (first < points && fs[first] == kInf) ++first;
  if (first == points) throw NumericalError("fit: objective is non-finite over the whole bracket");
  int last = points - 1;
  while (fs[last] == kInf) --last;
  m.shrunk = first > 0 || last < points - 1;
  m.lo = xs[first];
  m.hi = xs[last];

  const int k = static_cast<int>(std::min_element(fs.begin() + first, fs.begin() + last + 1) - fs.begin());
  const double a = xs[std::max(k - 1, first)];
  const double b = xs[std::min(k + 1, last)];
  const int bits = std::clamp(static_cast<int>(std::ceil(1.0 - std::log2(tol))), 8,
                              std::numeric_limits<double>::digits / 2);
  std::uintmax_t max_iter = 200;
  auto counted = [&](double x) {
    ++evaluations;
    const double v = f(x);
    return std::isfinite(v) ? v : kInf;
  };
  auto [x, fx] = boost::math::tools::brent_find_minima(counted, a, b, bits, max_iter);
  if (fs[k] < fx) {
    x = xs[k];
    fx = fs[k];
  }
  m.x = x;
  m.fx = fx;
  const double edge_tol = std::max(tol, 1e-9) * 4.0;
  m.boundary = std::abs(x - m.lo) <= edge_tol || std::abs(x - m.hi) <= edge_tol;
  return m;
}

}  // namespace

std::vector<Observation> ingest(std::istream& in) {
  std::string line;
  int line_no = 0;
  bool have_header = false;
  bool has_weight = false;
  std::vector<Observation> out;
  std::vector<std::string> rejected;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string text = trim(line);
    if (text.empty() || text[0] == '#') continue;
    const auto fields = split_fields(text);
    if (!have_header) {
      if (fields == std::vector<std::string>{"t", "L"}) {
        has_weight = false;
      } else if (fields == std::vector<std::string>{"t", "L", "weight"}) {
        has_weight = true;
      } else {
        throw ValidationError("line " + std::to_string(line_no) +
                              ": expected header 't,L' or 't,L,weight', got '" + text + "'");
      }
      have_header = true;
      continue;
    }
    const std::size_t expected = has_weight ? 3 : 2;
    if (fields.size() != expected) {
      throw ValidationError("line " + std::to_string(line_no) + ": expected " + std::to_string(expected) +
                            " fields, got " + std::to_string(fields.size()));
    }
    Observation o;
    o.t = parse_field(fields[0], line_no, "t");
    o.L = parse_field(fields[1], line_no, "L");
    if (has_weight) o.weight = parse_field(fields[2], line_no, "weight");
    if (!std::isfinite(o.t) || o.t <= 0.0) {
      throw ValidationError("line " + std::to_string(line_no) + ": t must be positive");
    }
    if (!std::isfinite(o.weight) || o.weight <= 0.0) {
      throw ValidationError("line " + std::to_string(line_no) + ": weight must be positive");
    }
    if (!(o.L >= 0.0 && o.L <= 1.0)) {
      rejected.push_back("line " + std::to_string(line_no) + " (L=" + fields[1] + ")");
      continue;
    }
    out.push_back(o);
  }
  if (!have_header) throw ValidationError("empty input: no header");
  if (!rejected.empty()) {
    std::string msg = "L outside [0,1] at ";
    for (std::size_t i = 0; i < rejected.size(); ++i) msg += (i ? ", " : "") + rejected[i];
    throw ValidationError(msg);
  }
  if (out.empty()) throw ValidationError("no observations after the header");
  return out;
}

std::vector<Observation> ingest_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path);
  return ingest(in);
}

double fit_objective(const std::vector<Observation>& obs, double c, double r, std::optional<int> h) {
  const double scale = h ? std::pow(c, -*h) : 1.0;
  double sse = 0.0;
  try {
    for (const auto& o : obs) {
      const double model = limit_fraction(o.t * scale, c, r).L;
      const double d = o.L - model;
      sse += o.weight * d * d;
    }
  } catch (const NumericalError&) {
    return kInf;
  } catch (const ValidationError&) {
    return kInf;
  }
  return sse;
}

FitResult fit_c(const std::vector<Observation>& obs, const FitOptions& options) {
  const FitSearch& s = options.search;
  if (obs.size() < 3) throw ValidationError("fit_c: at least 3 observations are required");
  if (!(s.c_lo > 1.0) || !(s.c_hi > s.c_lo)) throw ValidationError("fit_c: need 1 < c_lo < c_hi");
  if (!(s.tol > 0.0)) throw ValidationError("fit_c: tol must be positive");
  if (options.r && !(*options.r > 0.0)) throw ValidationError("fit_c: r must be positive");
  if (!options.r && !(s.r_lo > 0.0 && s.r_hi > s.r_lo)) {
    throw ValidationError("fit_c: need 0 < r_lo < r_hi");
  }

  FitResult result;
  double c_lo = s.c_lo;
  if (c_lo < kMinWellConditionedC) {
    result.diagnostics.push_back("c_lo raised from " + format_real(c_lo) + " to " +
                                 format_real(kMinWellConditionedC) +
                                 " (limit curve is not evaluable closer to 1)");
    c_lo = kMinWellConditionedC;
    if (c_lo >= s.c_hi) throw ValidationError("fit_c: bracket lies entirely below the evaluable range");
  }

  int evaluations = 0;
  // Profiled objective over log c; with a free r the best log r is kept.
  auto best_r = [&](double c, int& evals) -> std::pair<double, double> {
    if (options.r) {
      ++evals;
      return {*options.r, fit_objective(obs, c, *options.r, options.h)};
    }
    auto inner = [&](double log_r) { return fit_objective(obs, c, std::exp(log_r), options.h); };
    try {
      const Minimum m = minimize_1d(inner, std::log(s.r_lo), std::log(s.r_hi), s.tol,
                                    std::max(11, s.scan_points / 2), evals);
      return {std::exp(m.x), m.fx};
    } catch (const NumericalError&) {
      return {kInf, kInf};
    }
  };
  std::map<double, std::pair<double, double>> profile_cache;
  auto profiled = [&](double log_c) {
    int inner_evals = 0;
    const auto best = best_r(std::exp(log_c), inner_evals);
    profile_cache.emplace(log_c, best);
    evaluations += inner_evals - 1;  // minimize_1d counts this call itself
    return best.second;
  };

  const Minimum m = minimize_1d(profiled, std::log(c_lo), std::log(s.c_hi), s.tol, s.scan_points, evaluations);
  result.c_lo = std::clamp(std::exp(m.lo), c_lo, s.c_hi);
  result.c_hi = std::clamp(std::exp(m.hi), c_lo, s.c_hi);
  if (m.shrunk) {
    result.diagnostics.push_back("bracket shrunk to [" + format_real(result.c_lo) + ", " +
                                 format_real(result.c_hi) + "]: objective non-finite outside");
  }
  result.c_hat = std::clamp(std::exp(m.x), c_lo, s.c_hi);
  {
    int evals = 0;
    const auto [r, sse] = best_r(result.c_hat, evals);
    evaluations += evals;
    result.r_hat = r;
    result.sse = sse;
  }
  result.boundary = m.boundary;
  if (m.boundary) result.diagnostics.push_back("no interior minimum: c_hat is on the bracket edge");

  for (const auto& [log_c, sse] : m.scan) {
    if (options.r) {
      result.valley.push_back({std::exp(log_c), *options.r, sse});
    } else {
      const auto& [r, v] = profile_cache.at(log_c);
      result.valley.push_back({std::exp(log_c), r, v});
    }
  }

  // Local-minimum certificate: the returned point is no worse than both
  // bracket ends and ten deterministic pseudo-random interior probes.
  std::mt19937_64 rng(0x5eed);
  std::uniform_real_distribution<double> u(m.lo, m.hi);
  std::vector<double> probes{m.lo, m.hi};
  for (int i = 0; i < 10; ++i) probes.push_back(u(rng));
  result.certified = true;
  for (double log_c : probes) {
    int evals = 0;
    const double v = best_r(std::exp(log_c), evals).second;
    evaluations += evals;
    if (v < result.sse) {
      result.certified = false;
      result.diagnostics.push_back("certificate failed: sse " + format_real(v) + " at c=" +
                                   format_real(std::exp(log_c)) + " beats the returned point");
    }
  }
  result.iterations = evaluations;
  return result;
}

void write_fit_curve_csv(std::ostream& out, const std::vector<Observation>& obs, const FitResult& fit,
                         std::optional<int> h) {
  const double scale = h ? std::pow(fit.c_hat, -*h) : 1.0;
  out << "t,L_fit\n";
  for (const auto& o : obs) {
    out << format_real(o.t) << ',' << format_real(limit_fraction(o.t * scale, fit.c_hat, fit.r_hat).L)
        << '\n';
  }
}

}  // namespace astree
