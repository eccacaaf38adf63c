#include "astree/core.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <iomanip>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include "astree/numerics.hpp"

namespace astree {

Parameters validate(const Parameters& params, Context context) {
  if (!std::isfinite(params.c) || params.c <= 0.0) {
    throw ValidationError("c must be positive (got " + format_real(params.c) + ")");
  }
  if (context == Context::Analytic && params.c <= 1.0) {
    throw ValidationError("analytic evaluation requires c>1 (got " + format_real(params.c) + ")");
  }
  if (!std::isfinite(params.r) || params.r <= 0.0) {
    throw ValidationError("r must be positive (got " + format_real(params.r) + ")");
  }
  if (params.h && *params.h < 0) {
    throw ValidationError("h must be nonnegative");
  }
  return params;
}

void require_well_conditioned(double c, const char* operation) {
  if (c < kMinWellConditionedC) {
    throw ConditioningError(std::string(operation) + ": c=" + format_real(c) +
                            " is below " + format_real(kMinWellConditionedC) +
                            "; the alternating series cannot be evaluated reliably");
  }
}

// --- PathWord ----------------------------------------------------------------

PathWord PathWord::child(bool bit) const {
  PathWord out{bits};
  out.bits.push_back(bit);
  return out;
}

bool PathWord::is_ancestor_of(const PathWord& other) const {
  return bits.size() < other.bits.size() &&
         std::equal(bits.begin(), bits.end(), other.bits.begin());
}

std::string PathWord::to_string() const {
  std::string s;
  s.reserve(bits.size());
  for (bool b : bits) s.push_back(b ? '1' : '0');
  return s;
}

// --- Profile -------------------------------------------------------------------

int Profile::max_depth() const {
  for (int n = static_cast<int>(counts.size()) - 1; n >= 0; --n) {
    if (counts[n] != 0) return n;
  }
  return -1;
}

std::int64_t Profile::total() const {
  return std::accumulate(counts.begin(), counts.end(), std::int64_t{0});
}

bool operator==(const Profile& a, const Profile& b) {
  const std::size_t n = std::max(a.counts.size(), b.counts.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (a.count(static_cast<int>(i)) != b.count(static_cast<int>(i))) return false;
  }
  return true;
}

void apply_split(Profile& profile, int depth) {
  if (profile.count(depth) <= 0) {
    throw ValidationError("split at depth " + std::to_string(depth) + " with no external vertex");
  }
  if (static_cast<int>(profile.counts.size()) <= depth + 1) {
    profile.counts.resize(depth + 2, 0);
  }
  profile.counts[depth] -= 1;
  profile.counts[depth + 1] += 2;
}

// --- DyadicRational ----------------------------------------------------------

DyadicRational::DyadicRational(Integer numerator, unsigned exponent)
    : numerator_(std::move(numerator)), exponent_(exponent) {
  if (numerator_ == 0) {
    exponent_ = 0;
    return;
  }
  const unsigned shift = std::min<unsigned>(exponent_, boost::multiprecision::lsb(abs(numerator_)));
  numerator_ >>= shift;
  exponent_ -= shift;
}

double DyadicRational::to_double() const {
  return std::ldexp(numerator_.convert_to<double>(), -static_cast<int>(exponent_));
}

std::string DyadicRational::to_string() const {
  std::string s = numerator_.str();
  if (exponent_ > 0) {
    s += "/";
    s += (Integer(1) << exponent_).str();
  }
  return s;
}

DyadicRational dyadic_mass(const Profile& profile) {
  const int top = profile.max_depth();
  if (top < 0) return {};
  DyadicRational::Integer num = 0;
  for (int n = 0; n <= top; ++n) {
    if (profile.counts[n] != 0) {
      num += DyadicRational::Integer(profile.counts[n]) << static_cast<unsigned>(top - n);
    }
  }
  return {std::move(num), static_cast<unsigned>(top)};
}

std::vector<Snapshot> replay(const std::vector<SplitEvent>& events,
                             const std::vector<double>& times) {
  std::vector<Snapshot> out;
  out.reserve(times.size());
  Profile state = Profile::root();
  std::size_t next = 0;
  for (double t : times) {
    while (next < events.size() && events[next].time <= t) {
      apply_split(state, events[next].depth);
      ++next;
    }
    out.push_back({t, state});
  }
  return out;
}

// --- Precision -----------------------------------------------------------------

Precision parse_precision(const std::string& text) {
  if (text == "double") return {};
  const std::string prefix = "extended";
  if (text.rfind(prefix, 0) == 0) {
    Precision p = Precision::extended();
    if (text.size() > prefix.size()) {
      if (text[prefix.size()] != ':') throw ValidationError("bad precision spec: " + text);
      const std::string digits = text.substr(prefix.size() + 1);
      try {
        const int d = std::stoi(digits);
        if (d < 20 || d > 1000) throw ValidationError("extended digits must be in [20, 1000]");
        p.digits = static_cast<unsigned>(d);
      } catch (const std::logic_error&) {
        throw ValidationError("bad precision digits: " + digits);
      }
    }
    return p;
  }
  throw ValidationError("precision must be 'double' or 'extended[:digits]' (got '" + text + "')");
}

std::string to_string(const Precision& precision) {
  return precision.is_extended() ? "extended:" + std::to_string(precision.digits) : "double";
}

Precision default_precision() {
  const char* env = std::getenv("ASTREE_PRECISION");
  return env ? parse_precision(env) : Precision{};
}

namespace {
std::recursive_mutex& precision_mutex() {
  static std::recursive_mutex m;
  return m;
}
}  // namespace

ExtendedPrecisionScope::ExtendedPrecisionScope(unsigned digits)
    : lock_(precision_mutex()), saved_digits_(ExtReal::default_precision()) {
  ExtReal::default_precision(digits);
}

ExtendedPrecisionScope::~ExtendedPrecisionScope() { ExtReal::default_precision(saved_digits_); }

// --- Flat files ------------------------------------------------------------------

std::string format_real(double value) {
  std::ostringstream os;
  os << std::setprecision(17) << value;
  return os.str();
}

namespace {

// Returns false at end of input; skips blank and '#' lines.
bool next_data_line(std::istream& in, std::string& line, int& line_no) {
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    return true;
  }
  return false;
}

void expect_header(std::istream& in, const std::string& header, int& line_no) {
  std::string line;
  if (!next_data_line(in, line, line_no) || line != header) {
    throw ValidationError("expected CSV header '" + header + "'");
  }
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(field);
  return out;
}

template <class T>
T parse_field(const std::string& s, int line_no) {
  std::istringstream is(s);
  T value;
  is >> value;
  if (!is || !(is >> std::ws).eof()) {
    throw ValidationError("line " + std::to_string(line_no) + ": cannot parse '" + s + "'");
  }
  return value;
}

}  // namespace

void write_profile_csv(std::ostream& out, const Profile& profile) {
  out << "depth,count\n";
  for (std::size_t n = 0; n < profile.counts.size(); ++n) {
    if (profile.counts[n] != 0) out << n << ',' << profile.counts[n] << '\n';
  }
}

Profile read_profile_csv(std::istream& in) {
  int line_no = 0;
  expect_header(in, "depth,count", line_no);
  Profile p{{}};
  std::string line;
  while (next_data_line(in, line, line_no)) {
    const auto f = split_fields(line);
    if (f.size() != 2) throw ValidationError("line " + std::to_string(line_no) + ": expected 2 fields");
    const int depth = parse_field<int>(f[0], line_no);
    const auto count = parse_field<std::int64_t>(f[1], line_no);
    if (depth < 0 || count < 0) throw ValidationError("line " + std::to_string(line_no) + ": negative value");
    if (static_cast<int>(p.counts.size()) <= depth) p.counts.resize(depth + 1, 0);
    p.counts[depth] += count;
  }
  return p;
}

void write_events_csv(std::ostream& out, const std::vector<SplitEvent>& events) {
  out << "time,depth\n";
  for (const auto& e : events) out << format_real(e.time) << ',' << e.depth << '\n';
}

std::vector<SplitEvent> read_events_csv(std::istream& in) {
  int line_no = 0;
  expect_header(in, "time,depth", line_no);
  std::vector<SplitEvent> events;
  std::string line;
  while (next_data_line(in, line, line_no)) {
    const auto f = split_fields(line);
    if (f.size() != 2) throw ValidationError("line " + std::to_string(line_no) + ": expected 2 fields");
    events.push_back({parse_field<double>(f[0], line_no), parse_field<int>(f[1], line_no)});
  }
  return events;
}

}  // namespace astree
