#include "astree/cli.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "astree/core.hpp"
#include "astree/fit.hpp"
#include "astree/montecarlo.hpp"
#include "astree/profile_analytics.hpp"
#include "astree/qseries.hpp"
#include "astree/senescence_analytics.hpp"
#include "astree/simulator.hpp"

namespace astree {

namespace {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

// --- Run metadata -------------------------------------------------------------

struct Meta {
  std::string command;
  std::vector<std::pair<std::string, std::string>> config;

  template <class T>
  void set(const std::string& key, const T& value) {
    std::ostringstream os;
    if constexpr (std::is_floating_point_v<T>) {
      os << format_real(value);
    } else {
      os << value;
    }
    config.emplace_back(key, os.str());
  }
  void set_list(const std::string& key, const std::vector<double>& values) {
    std::string s;
    for (std::size_t i = 0; i < values.size(); ++i) s += (i ? "," : "") + format_real(values[i]);
    config.emplace_back(key, s);
  }

  void write_comments(std::ostream& out) const {
    out << "# astree " << kVersion << '\n';
    out << "# command: " << command << '\n';
    for (const auto& [k, v] : config) out << "# " << k << '=' << v << '\n';
  }
  json to_json() const {
    json cfg = json::object();
    for (const auto& [k, v] : config) cfg[k] = v;
    return json{{"version", kVersion}, {"command", command}, {"config", cfg}};
  }
};

// Writes to a file when a path is given, otherwise to the dispatch stream.
class Sink {
 public:
  Sink(const std::string& path, std::ostream& fallback) : fallback_(fallback) {
    if (!path.empty()) {
      file_ = std::make_unique<std::ofstream>(path);
      if (!*file_) throw ValidationError("cannot open " + path + " for writing");
    }
  }
  std::ostream& stream() { return file_ ? *file_ : fallback_; }

 private:
  std::ostream& fallback_;
  std::unique_ptr<std::ofstream> file_;
};

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
  std::vector<std::string> trailer;  // extra comment lines after the rows (CSV only)
  json extra = json::object();       // extra top-level keys (JSON only)
};

void emit_table(const Table& table, const Meta& meta, bool as_json, std::ostream& out) {
  if (as_json) {
    json rows = json::array();
    for (const auto& row : table.rows) {
      json obj = json::object();
      for (std::size_t i = 0; i < table.columns.size(); ++i) obj[table.columns[i]] = row[i];
      rows.push_back(obj);
    }
    json doc{{"meta", meta.to_json()}, {"rows", rows}};
    for (auto it = table.extra.begin(); it != table.extra.end(); ++it) doc[it.key()] = it.value();
    out << doc.dump(2) << '\n';
    return;
  }
  meta.write_comments(out);
  for (std::size_t i = 0; i < table.columns.size(); ++i) out << (i ? "," : "") << table.columns[i];
  out << '\n';
  for (const auto& row : table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << format_real(row[i]);
    out << '\n';
  }
  for (const auto& line : table.trailer) out << "# " << line << '\n';
}

void emit_json(json doc, const Meta& meta, std::ostream& out) {
  doc["meta"] = meta.to_json();
  out << doc.dump(2) << '\n';
}

fs::path sibling(const std::string& path, const std::string& tag) {
  fs::path p(path);
  fs::path out = p.parent_path() / (p.stem().string() + "." + tag + p.extension().string());
  return out;
}

// --- Shared option bundles --------------------------------------------------

struct GridOptions {
  std::string times;
  int points = 0;
  double tmin = 0.0;
  double tmax = 0.0;
  bool log_spaced = false;

  void attach(CLI::App* app, const std::string& what) {
    app->add_option("--times", times, "comma-separated " + what);
    app->add_option("--grid,--points", points, "number of grid points");
    app->add_option("--tmin", tmin, "first grid time");
    app->add_option("--tmax", tmax, "last grid time");
    app->add_flag("--log", log_spaced, "log-spaced grid");
  }
  bool given() const { return !times.empty() || points > 0; }
  std::vector<double> resolve() const {
    if (!times.empty()) {
      if (points > 0) throw ValidationError("use either --times or --grid/--tmin/--tmax, not both");
      return parse_real_list(times);
    }
    if (points <= 0) throw ValidationError("a time grid is required (--times or --grid N --tmin A --tmax B)");
    return make_grid(tmin, tmax, points, log_spaced);
  }
};

struct Common {
  std::string precision_text;
  std::string out_path;
  bool as_json = false;
  unsigned threads = 0;

  void attach(CLI::App* app, bool with_precision, bool with_threads) {
    app->add_option("--out,-o", out_path, "output file (default: standard output)");
    app->add_flag("--json", as_json, "structured JSON output");
    if (with_precision) {
      app->add_option("--precision", precision_text,
                      "double | extended[:digits] (default: $ASTREE_PRECISION or double)");
    }
    if (with_threads) app->add_option("--threads", threads, "worker threads (default: all available)");
  }
  Precision precision() const {
    return precision_text.empty() ? default_precision() : parse_precision(precision_text);
  }
  SeriesControl control() const {
    SeriesControl ctl;
    ctl.precision = precision();
    return ctl;
  }
};

std::string joined(const std::vector<std::string>& args) {
  std::string s;
  for (std::size_t i = 0; i < args.size(); ++i) {
    const bool quote = args[i].find_first_of(" \t") != std::string::npos;
    s += (i ? " " : "") + (quote ? "'" + args[i] + "'" : args[i]);
  }
  return s;
}

std::vector<double> default_fig3_grid() { return make_grid(1e-3, 10.0, 100, true); }

std::string c_tag(double c) {
  std::ostringstream os;
  os << c;
  return os.str();
}

}  // namespace

// --- Parsing helpers (public) -------------------------------------------------

std::vector<int> parse_int_range(const std::string& text) {
  auto parse_int = [&](const std::string& s) {
    int v = 0;
    const char* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc() || ptr != end || s.empty()) throw ValidationError("bad integer '" + s + "' in range '" + text + "'");
    return v;
  };
  const auto dots = text.find("..");
  std::vector<int> out;
  if (dots == std::string::npos) {
    out.push_back(parse_int(text));
    return out;
  }
  const int a = parse_int(text.substr(0, dots));
  const int b = parse_int(text.substr(dots + 2));
  if (b < a) throw ValidationError("empty range '" + text + "'");
  for (int i = a; i <= b; ++i) out.push_back(i);
  return out;
}

std::vector<double> parse_real_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto first = item.find_first_not_of(" \t");
    item = first == std::string::npos ? "" : item.substr(first, item.find_last_not_of(" \t") - first + 1);
    double v = 0.0;
    const char* end = item.data() + item.size();
    auto [ptr, ec] = std::from_chars(item.data(), end, v);
    if (ec != std::errc() || ptr != end || item.empty()) throw ValidationError("bad number '" + item + "' in list '" + text + "'");
    out.push_back(v);
  }
  if (out.empty()) throw ValidationError("empty list");
  return out;
}

std::vector<double> make_grid(double tmin, double tmax, int points, bool log_spaced) {
  if (points < 1) throw ValidationError("grid needs at least one point");
  if (!(tmax >= tmin)) throw ValidationError("grid needs tmin <= tmax");
  if (log_spaced && !(tmin > 0.0)) throw ValidationError("log grid needs tmin > 0");
  std::vector<double> out(static_cast<std::size_t>(points));
  for (int k = 0; k < points; ++k) {
    const double f = points == 1 ? 0.0 : static_cast<double>(k) / (points - 1);
    out[k] = log_spaced ? std::exp(std::log(tmin) + f * (std::log(tmax) - std::log(tmin)))
                        : tmin + f * (tmax - tmin);
  }
  // Pin the endpoints so they are exactly what the user typed.
  out.front() = tmin;
  out.back() = tmax;
  return out;
}

// --- Dispatch -------------------------------------------------------------------

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return dispatch(args, out, err);
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"astree: Aldous-Shields random tree simulator and moment engine", "astree"};
  app.set_version_flag("--version", std::string("astree ") + kVersion);
  // `--h` is the truncation depth, so help is long-form only.
  app.set_help_flag("--help", "print this help and exit");
  app.require_subcommand(1);
  app.footer(
      "Exit status: 0 ok, 1 invalid input, 2 numerical failure, 3 verification FAIL.\n"
      "Ranges use A..B (inclusive). Default precision comes from ASTREE_PRECISION.");

  Meta meta;
  meta.command = "astree " + joined(args);
  int status = kExitOk;
  std::function<void()> action;

  // analytic ---------------------------------------------------------------
  auto* analytic = app.add_subcommand("analytic", "closed-form moments");
  analytic->require_subcommand(1);

  struct {
    double c = 0, t = 0;
    std::string depths = "0..10";
    Common common;
  } mean_opt;
  auto* a_mean = analytic->add_subcommand("mean", "exact mean profile y_n(t) and E[X_n(t)]");
  a_mean->add_option("--c", mean_opt.c, "splitting base c > 1")->required();
  a_mean->add_option("--t", mean_opt.t, "time")->required();
  a_mean->add_option("--depths", mean_opt.depths, "depth range A..B")->capture_default_str();
  mean_opt.common.attach(a_mean, true, false);
  a_mean->callback([&] {
    action = [&] {
      const auto& o = mean_opt;
      const Precision p = o.common.precision();
      meta.set("subcommand", "analytic mean");
      meta.set("c", o.c);
      meta.set("t", o.t);
      meta.set("depths", o.depths);
      meta.set("precision", to_string(p));
      Table table{{"depth", "y_n", "mean_count"}, {}, {}, json::object()};
      for (int n : parse_int_range(o.depths)) {
        table.rows.push_back({static_cast<double>(n), mean_occupancy(n, o.t, o.c, p), mean_count(n, o.t, o.c, p)});
      }
      Sink sink(o.common.out_path, out);
      emit_table(table, meta, o.common.as_json, sink.stream());
    };
  });

  struct {
    double c = 0, t = 0;
    int n = 0, nprime = 0;
    Common common;
  } cov_opt;
  auto* a_cov = analytic->add_subcommand("cov", "exact Cov[X_n(t), X_n'(t)] (JSON)");
  a_cov->add_option("--c", cov_opt.c, "splitting base c > 1")->required();
  a_cov->add_option("--t", cov_opt.t, "time")->required();
  a_cov->add_option("--n", cov_opt.n, "first depth")->required();
  a_cov->add_option("--nprime", cov_opt.nprime, "second depth")->required();
  cov_opt.common.attach(a_cov, true, false);
  a_cov->callback([&] {
    action = [&] {
      const auto& o = cov_opt;
      const Precision p = o.common.precision();
      meta.set("subcommand", "analytic cov");
      meta.set("c", o.c);
      meta.set("t", o.t);
      meta.set("n", o.n);
      meta.set("nprime", o.nprime);
      meta.set("precision", to_string(p));
      const double v = profile_cov_exact(o.n, o.nprime, o.t, o.c, p);
      Sink sink(o.common.out_path, out);
      emit_json({{"n", o.n}, {"nprime", o.nprime}, {"t", o.t}, {"c", o.c}, {"cov_exact", v}}, meta,
                sink.stream());
    };
  });

  struct {
    double c = 0, t = 0;
    int i = 0, iprime = 0, n = 0;
    bool exact = false;
    Common common;
  } asym_opt;
  auto* a_asym = analytic->add_subcommand("cov-asymptotic", "leading-order covariance and regime (JSON)");
  a_asym->add_option("--c", asym_opt.c, "splitting base c > 1")->required();
  a_asym->add_option("--t", asym_opt.t, "rescaled time")->required();
  a_asym->add_option("--i", asym_opt.i, "depth offset i")->capture_default_str();
  a_asym->add_option("--iprime", asym_opt.iprime, "depth offset i' >= i")->capture_default_str();
  a_asym->add_option("--n", asym_opt.n, "front depth n")->required();
  a_asym->add_flag("--exact", asym_opt.exact, "also evaluate the exact covariance at time t c^n and the ratio");
  asym_opt.common.attach(a_asym, true, false);
  a_asym->callback([&] {
    action = [&] {
      const auto& o = asym_opt;
      const SeriesControl ctl = o.common.control();
      meta.set("subcommand", "analytic cov-asymptotic");
      meta.set("c", o.c);
      meta.set("t", o.t);
      meta.set("i", o.i);
      meta.set("iprime", o.iprime);
      meta.set("n", o.n);
      meta.set("exact", o.exact);
      meta.set("precision", to_string(ctl.precision));
      const AsymptoticCov a = profile_cov_asymptotic(o.i, o.iprime, o.n, o.t, o.c, ctl);
      json doc{{"i", o.i},
               {"iprime", o.iprime},
               {"n", o.n},
               {"t", o.t},
               {"c", o.c},
               {"cov_asymptotic", a.value},
               {"regime", to_string(a.regime.tag)},
               {"prefactor", a.regime.prefactor},
               {"scale", a.regime.scale_description},
               {"a_ii", a.a_ii}};
      if (o.exact) {
        const double exact =
            profile_cov_exact(o.n + o.i, o.n + o.iprime, o.t * std::pow(o.c, o.n), o.c, ctl.precision);
        doc["cov_exact"] = exact;
        doc["ratio"] = exact / a.value;
      }
      Sink sink(o.common.out_path, out);
      emit_json(doc, meta, sink.stream());
    };
  });

  struct {
    double c = 0, t = 0;
    std::string range = "-5..5";
    Common common;
  } lp_opt;
  auto* a_lp = analytic->add_subcommand("limit-profile", "limit profile x_i(t)");
  a_lp->add_option("--c", lp_opt.c, "splitting base c > 1")->required();
  a_lp->add_option("--t", lp_opt.t, "rescaled time")->required();
  a_lp->add_option("--i", lp_opt.range, "offset range A..B")->capture_default_str();
  lp_opt.common.attach(a_lp, true, false);
  a_lp->callback([&] {
    action = [&] {
      const auto& o = lp_opt;
      const SeriesControl ctl = o.common.control();
      meta.set("subcommand", "analytic limit-profile");
      meta.set("c", o.c);
      meta.set("t", o.t);
      meta.set("i", o.range);
      meta.set("precision", to_string(ctl.precision));
      Table table{{"i", "x_i"}, {}, {}, json::object()};
      for (int i : parse_int_range(o.range)) {
        table.rows.push_back({static_cast<double>(i), limit_profile(i, o.t, o.c, ctl).value});
      }
      Sink sink(o.common.out_path, out);
      emit_table(table, meta, o.common.as_json, sink.stream());
    };
  });

  // qtable -----------------------------------------------------------------------
  auto* qtable = app.add_subcommand("qtable", "q-series coefficient tables");
  qtable->require_subcommand(1);
  struct {
    double c = 0;
    int kmax = 50;
    Common common;
  } q_opt;
  auto* q_dump = qtable->add_subcommand("dump", "CSV of a_k, b_k and b_inf");
  q_dump->add_option("--c", q_opt.c, "splitting base c > 1")->required();
  q_dump->add_option("--kmax", q_opt.kmax, "largest k")->capture_default_str();
  q_opt.common.attach(q_dump, true, false);
  q_dump->callback([&] {
    action = [&] {
      const auto& o = q_opt;
      SeriesControl ctl = o.common.control();
      if (o.kmax < 0) throw ValidationError("--kmax must be nonnegative");
      ctl.k_max = o.kmax;
      meta.set("subcommand", "qtable dump");
      meta.set("c", o.c);
      meta.set("kmax", o.kmax);
      meta.set("precision", to_string(ctl.precision));
      const QTable t = make_qtable(o.c, ctl);
      Sink sink(o.common.out_path, out);
      if (o.common.as_json) {
        emit_json({{"c", t.c}, {"a", t.a}, {"b", t.b}, {"b_inf", t.b_inf}}, meta, sink.stream());
      } else {
        meta.write_comments(sink.stream());
        write_qtable_csv(sink.stream(), t);
      }
    };
  });

  // simulate ---------------------------------------------------------------------
  struct {
    double c = 0, r = 1;
    std::optional<int> h;
    std::optional<std::int64_t> stop_external, stop_events;
    std::optional<double> stop_time;
    bool stop_absorption = false;
    std::uint64_t seed = 0, stream = 0;
    std::string snapshots, tree_out;
    Common common;
  } sim_opt;
  auto* sim = app.add_subcommand("simulate", "exact simulation of one trajectory");
  sim->add_option("--c", sim_opt.c, "splitting base c > 0")->required();
  sim->add_option("--r", sim_opt.r, "base rate r > 0")->capture_default_str();
  sim->add_option("--h", sim_opt.h, "truncation depth (depth h+1 is inert)");
  auto* o_ext = sim->add_option("--stop-external", sim_opt.stop_external, "stop at this many external vertices");
  auto* o_time = sim->add_option("--stop-time", sim_opt.stop_time, "stop at this time");
  auto* o_events = sim->add_option("--stop-events", sim_opt.stop_events, "stop after this many events");
  auto* o_abs = sim->add_flag("--stop-absorption", sim_opt.stop_absorption, "run until no vertex can split (needs --h)");
  o_ext->excludes(o_time, o_events, o_abs);
  o_time->excludes(o_events, o_abs);
  o_events->excludes(o_abs);
  sim->add_option("--seed", sim_opt.seed, "RNG seed")->required();
  sim->add_option("--stream", sim_opt.stream, "RNG stream (replicate index)")->capture_default_str();
  sim->add_option("--snapshots", sim_opt.snapshots, "comma-separated snapshot times");
  sim->add_option("--tree-out", sim_opt.tree_out, "also write the external vertex list (depth,path_bits)");
  sim_opt.common.attach(sim, false, false);
  sim->get_option("--out")->required();
  sim->callback([&] {
    action = [&] {
      const auto& o = sim_opt;
      StopRule stop;
      if (o.stop_external) {
        stop = TargetExternal{*o.stop_external};
      } else if (o.stop_time) {
        stop = MaxTime{*o.stop_time};
      } else if (o.stop_events) {
        stop = MaxEvents{*o.stop_events};
      } else if (o.stop_absorption) {
        stop = Absorption{};
      } else {
        throw ValidationError("one stop rule is required (--stop-external, --stop-time, --stop-events, --stop-absorption)");
      }
      meta.set("subcommand", "simulate");
      meta.set("c", o.c);
      meta.set("r", o.r);
      if (o.h) meta.set("h", *o.h);
      if (o.stop_external) meta.set("stop_external", *o.stop_external);
      if (o.stop_time) meta.set("stop_time", *o.stop_time);
      if (o.stop_events) meta.set("stop_events", *o.stop_events);
      if (o.stop_absorption) meta.set("stop_absorption", true);
      meta.set("seed", o.seed);
      meta.set("stream", o.stream);
      SimulationOptions options;
      if (!o.snapshots.empty()) {
        options.snapshot_times = parse_real_list(o.snapshots);
        meta.set_list("snapshots", options.snapshot_times);
      }
      const Parameters params{o.c, o.r, o.h};
      const SeedRecord seed{o.seed, o.stream};
      Trajectory traj;
      std::vector<PathWord> tree;
      if (!o.tree_out.empty()) {
        TreeRun run = simulate_tree(params, stop, seed, options);
        traj = std::move(run.trajectory);
        tree = std::move(run.external);
      } else {
        traj = simulate_profile(params, stop, seed, options);
      }
      {
        Sink events(o.common.out_path, out);
        meta.write_comments(events.stream());
        write_events_csv(events.stream(), traj.events);
      }
      const fs::path profile_path = sibling(o.common.out_path, "profile");
      {
        Sink profile(profile_path.string(), out);
        meta.write_comments(profile.stream());
        profile.stream() << "# final_time=" << format_real(traj.final_time) << '\n';
        write_profile_csv(profile.stream(), traj.final_profile);
      }
      fs::path snap_path;
      if (!traj.snapshots.empty()) {
        snap_path = sibling(o.common.out_path, "snapshots");
        Sink snaps(snap_path.string(), out);
        meta.write_comments(snaps.stream());
        snaps.stream() << "time,depth,count\n";
        for (const auto& s : traj.snapshots) {
          for (int n = 0; n <= s.profile.max_depth(); ++n) {
            if (s.profile.count(n) != 0) {
              snaps.stream() << format_real(s.time) << ',' << n << ',' << s.profile.count(n) << '\n';
            }
          }
        }
      }
      if (!o.tree_out.empty()) {
        Sink t(o.tree_out, out);
        meta.write_comments(t.stream());
        write_tree_csv(t.stream(), tree);
      }
      json summary{{"events", traj.events.size()},
                   {"external", traj.final_profile.total()},
                   {"final_time", traj.final_time},
                   {"events_file", o.common.out_path},
                   {"profile_file", profile_path.string()}};
      if (!snap_path.empty()) summary["snapshots_file"] = snap_path.string();
      if (!o.tree_out.empty()) summary["tree_file"] = o.tree_out;
      if (!traj.diagnostic.empty()) summary["diagnostic"] = traj.diagnostic;
      if (o.common.as_json) {
        emit_json(summary, meta, out);
      } else {
        out << "events=" << traj.events.size() << " external=" << traj.final_profile.total()
            << " final_time=" << format_real(traj.final_time) << '\n';
        if (!traj.diagnostic.empty()) out << "diagnostic: " << traj.diagnostic << '\n';
      }
    };
  });

  // senescence -------------------------------------------------------------------
  auto* sen = app.add_subcommand("senescence", "depth-truncated (senescence) model");
  sen->require_subcommand(1);
  struct {
    double c = 0, r = 1;
    int h = 0;
    std::uint64_t seed = 0, stream = 0;
    bool raw_time = false;
    GridOptions grid;
    Common common;
  } ss_opt;
  auto* s_sim = sen->add_subcommand("simulate", "one senescence trajectory on a time grid");
  s_sim->add_option("--c", ss_opt.c, "splitting base c > 0")->required();
  s_sim->add_option("--r", ss_opt.r, "base rate r > 0")->capture_default_str();
  s_sim->add_option("--h", ss_opt.h, "maximal number of divisions")->required();
  s_sim->add_option("--seed", ss_opt.seed, "RNG seed")->required();
  s_sim->add_option("--stream", ss_opt.stream, "RNG stream")->capture_default_str();
  s_sim->add_flag("--raw-time", ss_opt.raw_time, "grid is in model time (default: units of c^h)");
  ss_opt.grid.attach(s_sim, "observation times");
  ss_opt.common.attach(s_sim, false, false);
  s_sim->callback([&] {
    action = [&] {
      const auto& o = ss_opt;
      const std::vector<double> grid = o.grid.resolve();
      const double scale = o.raw_time ? 1.0 : std::pow(o.c, o.h);
      std::vector<double> model_times;
      for (double t : grid) model_times.push_back(t * scale);
      meta.set("subcommand", "senescence simulate");
      meta.set("c", o.c);
      meta.set("r", o.r);
      meta.set("h", o.h);
      meta.set("seed", o.seed);
      meta.set("stream", o.stream);
      meta.set("time_units", o.raw_time ? "model" : "c^h");
      meta.set_list("grid", grid);
      const auto states = simulate_senescence(Parameters{o.c, o.r, o.h}, model_times, SeedRecord{o.seed, o.stream});
      Table table{{"t", "model_time", "zp", "zs", "L"}, {}, {}, json::object()};
      for (std::size_t k = 0; k < states.size(); ++k) {
        const auto& s = states[k];
        table.rows.push_back({grid[k], s.time, static_cast<double>(s.zp), static_cast<double>(s.zs), s.L()});
      }
      Sink sink(o.common.out_path, out);
      emit_table(table, meta, o.common.as_json, sink.stream());
    };
  });

  struct {
    double c = 0, r = 1;
    GridOptions grid;
    Common common;
  } lc_opt;
  auto* s_lc = sen->add_subcommand("limit-curve", "large-h limit of the proliferating fraction");
  s_lc->add_option("--c", lc_opt.c, "splitting base c > 1")->required();
  s_lc->add_option("--r", lc_opt.r, "base rate r > 0")->capture_default_str();
  lc_opt.grid.attach(s_lc, "rescaled times");
  lc_opt.common.attach(s_lc, true, false);
  s_lc->callback([&] {
    action = [&] {
      const auto& o = lc_opt;
      const SeriesControl ctl = o.common.control();
      const std::vector<double> grid = o.grid.resolve();
      meta.set("subcommand", "senescence limit-curve");
      meta.set("c", o.c);
      meta.set("r", o.r);
      meta.set("precision", to_string(ctl.precision));
      meta.set_list("grid", grid);
      Table table{{"t", "L", "numerator", "denominator"}, {}, {}, json::object()};
      for (double t : grid) {
        const LimitCurvePoint p = limit_fraction(t, o.c, o.r, ctl);
        table.rows.push_back({t, p.L, p.numerator, p.denominator});
      }
      Sink sink(o.common.out_path, out);
      emit_table(table, meta, o.common.as_json, sink.stream());
    };
  });

  // verify -----------------------------------------------------------------------
  auto* verify = app.add_subcommand("verify", "Monte Carlo check of the analytic formulas");
  verify->require_subcommand(1);
  auto finish_battery = [&](const std::vector<MomentReport>& reports, const BatteryVerdict& v,
                            const Common& common) {
    Sink sink(common.out_path, out);
    std::ostringstream arr;
    write_reports_json(arr, reports);
    json doc{{"reports", json::parse(arr.str())},
             {"verdict",
              {{"pass", v.pass},
               {"max_abs_z", v.max_abs_z},
               {"fraction_above_2", v.fraction_above_2},
               {"max_abs_deviation", v.max_abs_deviation}}}};
    emit_json(doc, meta, sink.stream());
    err << v.summary << '\n';
    if (!v.pass) status = kExitVerifyFail;
  };

  struct {
    std::string c = "2", t = "1", depths = "0..8";
    std::int64_t replicates = 10000;
    std::uint64_t seed = 1;
    double z = 4.0;
    Common common;
  } vm_opt;
  auto* v_mean = verify->add_subcommand("mean", "mean profile battery");
  v_mean->add_option("--c", vm_opt.c, "comma-separated c values")->capture_default_str();
  v_mean->add_option("--t", vm_opt.t, "comma-separated times")->capture_default_str();
  v_mean->add_option("--depths", vm_opt.depths, "depth range A..B")->capture_default_str();
  v_mean->add_option("--replicates", vm_opt.replicates, "replicates per (c, t)")->capture_default_str();
  v_mean->add_option("--seed", vm_opt.seed, "RNG seed")->capture_default_str();
  v_mean->add_option("--z", vm_opt.z, "|z| threshold")->capture_default_str();
  vm_opt.common.attach(v_mean, false, true);
  v_mean->callback([&] {
    action = [&] {
      const auto& o = vm_opt;
      meta.set("subcommand", "verify mean");
      meta.set("c", o.c);
      meta.set("t", o.t);
      meta.set("depths", o.depths);
      meta.set("replicates", o.replicates);
      meta.set("seed", o.seed);
      meta.set("z", o.z);
      meta.set("threads", o.common.threads);
      std::vector<MomentReport> reports;
      const auto depths = parse_int_range(o.depths);
      std::uint64_t block = 0;
      for (double c : parse_real_list(o.c)) {
        for (double t : parse_real_list(o.t)) {
          // Each (c, t) cell gets its own seed so cells are independent.
          auto r = estimate_mean_profile(c, t, depths, o.replicates, o.seed + block++,
                                         MonteCarloOptions{o.common.threads});
          for (auto& m : r) m.quantity += " (c=" + c_tag(c) + ", t=" + c_tag(t) + ")";
          reports.insert(reports.end(), r.begin(), r.end());
        }
      }
      finish_battery(reports, judge_z(reports, o.z), o.common);
    };
  });

  struct {
    double c = 2, t = 2;
    std::string pairs = "2:2,3:4,4:4";
    std::int64_t replicates = 100000;
    std::uint64_t seed = 1;
    double z = 5.0;
    Common common;
  } vc_opt;
  auto* v_cov = verify->add_subcommand("cov", "covariance battery");
  v_cov->add_option("--c", vc_opt.c, "splitting base c > 1")->capture_default_str();
  v_cov->add_option("--t", vc_opt.t, "time")->capture_default_str();
  v_cov->add_option("--pairs", vc_opt.pairs, "comma-separated n:n' pairs")->capture_default_str();
  v_cov->add_option("--replicates", vc_opt.replicates, "replicates")->capture_default_str();
  v_cov->add_option("--seed", vc_opt.seed, "RNG seed")->capture_default_str();
  v_cov->add_option("--z", vc_opt.z, "|z| threshold")->capture_default_str();
  vc_opt.common.attach(v_cov, false, true);
  v_cov->callback([&] {
    action = [&] {
      const auto& o = vc_opt;
      meta.set("subcommand", "verify cov");
      meta.set("c", o.c);
      meta.set("t", o.t);
      meta.set("pairs", o.pairs);
      meta.set("replicates", o.replicates);
      meta.set("seed", o.seed);
      meta.set("z", o.z);
      meta.set("threads", o.common.threads);
      std::vector<std::pair<int, int>> pairs;
      std::stringstream ss(o.pairs);
      std::string item;
      while (std::getline(ss, item, ',')) {
        const auto colon = item.find(':');
        if (colon == std::string::npos) throw ValidationError("pair '" + item + "' is not of the form n:n'");
        const auto a = parse_int_range(item.substr(0, colon));
        const auto b = parse_int_range(item.substr(colon + 1));
        if (a.size() != 1 || b.size() != 1) throw ValidationError("pair '" + item + "' is not of the form n:n'");
        pairs.emplace_back(a[0], b[0]);
      }
      const auto reports =
          estimate_cov_set(o.c, o.t, pairs, o.replicates, o.seed, MonteCarloOptions{o.common.threads});
      finish_battery(reports, judge_z(reports, o.z), o.common);
    };
  });

  struct {
    std::string c = "1.2,1.3,1.5";
    double r = 1;
    int h = 20;
    std::int64_t replicates = 50;
    std::uint64_t seed = 1;
    double tolerance = 0.05;
    GridOptions grid;
    Common common;
  } vs_opt;
  auto* v_sen = verify->add_subcommand("senescence", "simulated L(t c^h) against the limit curve");
  v_sen->add_option("--c", vs_opt.c, "comma-separated c values")->capture_default_str();
  v_sen->add_option("--r", vs_opt.r, "base rate r > 0")->capture_default_str();
  v_sen->add_option("--h", vs_opt.h, "truncation depth")->capture_default_str();
  v_sen->add_option("--replicates", vs_opt.replicates, "replicates per c")->capture_default_str();
  v_sen->add_option("--seed", vs_opt.seed, "RNG seed")->capture_default_str();
  v_sen->add_option("--tolerance", vs_opt.tolerance, "max |mean L - L_inf| over the grid")->capture_default_str();
  vs_opt.grid.attach(v_sen, "rescaled times (default: 100 log points on [1e-3, 10])");
  vs_opt.common.attach(v_sen, false, true);
  v_sen->callback([&] {
    action = [&] {
      const auto& o = vs_opt;
      const std::vector<double> grid = o.grid.given() ? o.grid.resolve() : default_fig3_grid();
      meta.set("subcommand", "verify senescence");
      meta.set("c", o.c);
      meta.set("r", o.r);
      meta.set("h", o.h);
      meta.set("replicates", o.replicates);
      meta.set("seed", o.seed);
      meta.set("tolerance", o.tolerance);
      meta.set("threads", o.common.threads);
      meta.set_list("grid", grid);
      std::vector<MomentReport> reports;
      std::uint64_t block = 0;
      for (double c : parse_real_list(o.c)) {
        auto r = estimate_L_curve(c, o.r, o.h, grid, o.replicates, o.seed + block++,
                                  MonteCarloOptions{o.common.threads});
        for (auto& m : r) m.quantity += " (c=" + c_tag(c) + ")";
        reports.insert(reports.end(), r.begin(), r.end());
      }
      finish_battery(reports, judge_deviation(reports, o.tolerance), o.common);
    };
  });

  // fit --------------------------------------------------------------------------
  struct {
    std::string input, curve_out;
    bool fit_r = false;
    double r = 1.0;
    std::optional<int> h;
    FitSearch search;
    Common common;
  } fit_opt;
  auto* fit = app.add_subcommand("fit", "estimate c (and optionally r) from proliferating fractions");
  fit->add_option("--input", fit_opt.input, "CSV with header t,L[,weight]")->required();
  fit->add_flag("--fit-r", fit_opt.fit_r, "fit r as well");
  fit->add_option("--r", fit_opt.r, "fixed r (ignored with --fit-r)")->capture_default_str();
  fit->add_option("--c-lo", fit_opt.search.c_lo, "lower end of the c bracket")->capture_default_str();
  fit->add_option("--c-hi", fit_opt.search.c_hi, "upper end of the c bracket")->capture_default_str();
  fit->add_option("--tol", fit_opt.search.tol, "tolerance on log c")->capture_default_str();
  fit->add_option("--r-lo", fit_opt.search.r_lo, "lower end of the r bracket")->capture_default_str();
  fit->add_option("--r-hi", fit_opt.search.r_hi, "upper end of the r bracket")->capture_default_str();
  fit->add_option("--h", fit_opt.h, "times are raw model times; rescale by c^-h");
  fit->add_option("--curve-out", fit_opt.curve_out, "CSV t,L_fit of the fitted curve");
  fit_opt.common.attach(fit, false, false);
  fit->callback([&] {
    action = [&] {
      const auto& o = fit_opt;
      const auto obs = ingest_file(o.input);
      FitOptions options;
      options.search = o.search;
      options.h = o.h;
      options.r = o.fit_r ? std::nullopt : std::optional<double>(o.r);
      meta.set("subcommand", "fit");
      meta.set("input", o.input);
      meta.set("fit_r", o.fit_r);
      if (!o.fit_r) meta.set("r", o.r);
      meta.set("c_lo", o.search.c_lo);
      meta.set("c_hi", o.search.c_hi);
      meta.set("tol", o.search.tol);
      if (o.fit_r) {
        meta.set("r_lo", o.search.r_lo);
        meta.set("r_hi", o.search.r_hi);
      }
      if (o.h) meta.set("h", *o.h);
      const FitResult f = fit_c(obs, options);
      json valley = json::array();
      for (const auto& v : f.valley) valley.push_back({{"c", v.c}, {"r", v.r}, {"sse", v.sse}});
      json doc{{"c_hat", f.c_hat},
               {"r_hat", f.r_hat},
               {"sse", f.sse},
               {"iterations", f.iterations},
               {"bracket", {f.c_lo, f.c_hi}},
               {"boundary", f.boundary},
               {"certified", f.certified},
               {"diagnostics", f.diagnostics},
               {"valley", valley},
               {"observations", obs.size()}};
      {
        Sink sink(o.common.out_path, out);
        emit_json(doc, meta, sink.stream());
      }
      if (!o.curve_out.empty()) {
        Sink curve(o.curve_out, out);
        meta.write_comments(curve.stream());
        write_fit_curve_csv(curve.stream(), obs, f, o.h);
      }
    };
  });

  // repro ------------------------------------------------------------------------
  auto* repro = app.add_subcommand("repro", "figure reproduction recipes");
  repro->require_subcommand(1);
  struct {
    double c = 1.05;
    std::uint64_t seed = 7;
    std::int64_t external = 500;
    std::optional<int> max_depth;
    Common common;
  } f1_opt;
  auto* fig1 = repro->add_subcommand("fig1", "tree realization at 500 external vertices");
  fig1->add_option("--c", f1_opt.c, "splitting base c > 0")->capture_default_str();
  fig1->add_option("--seed", f1_opt.seed, "RNG seed")->capture_default_str();
  fig1->add_option("--external", f1_opt.external, "number of external vertices")->capture_default_str();
  fig1->add_option("--max-depth", f1_opt.max_depth, "only list vertices up to this depth");
  f1_opt.common.attach(fig1, false, false);
  fig1->callback([&] {
    action = [&] {
      const auto& o = f1_opt;
      meta.set("subcommand", "repro fig1");
      meta.set("c", o.c);
      meta.set("seed", o.seed);
      meta.set("external", o.external);
      if (o.max_depth) meta.set("max_depth", *o.max_depth);
      TreeRun run = simulate_tree(Parameters{o.c, 1.0, std::nullopt}, TargetExternal{o.external},
                                  SeedRecord{o.seed, 0});
      std::vector<PathWord> shown;
      for (auto& v : run.external) {
        if (!o.max_depth || v.depth() <= *o.max_depth) shown.push_back(v);
      }
      Sink sink(o.common.out_path, out);
      meta.write_comments(sink.stream());
      write_tree_csv(sink.stream(), shown);
    };
  });

  struct {
    std::string c = "1.2,1.3,1.5";
    int h = 20;
    std::int64_t replicates = 50;
    std::uint64_t seed = 1;
    std::string out_dir = ".";
    GridOptions grid;
    Common common;
  } f3_opt;
  auto* fig3 = repro->add_subcommand("fig3", "simulated and limiting proliferating-fraction curves");
  fig3->add_option("--c", f3_opt.c, "comma-separated c values")->capture_default_str();
  fig3->add_option("--h", f3_opt.h, "truncation depth")->capture_default_str();
  fig3->add_option("--replicates", f3_opt.replicates, "replicates per c")->capture_default_str();
  fig3->add_option("--seed", f3_opt.seed, "RNG seed")->capture_default_str();
  fig3->add_option("--out-dir", f3_opt.out_dir, "directory for fig3_c<c>.csv")->capture_default_str();
  f3_opt.grid.attach(fig3, "rescaled times (default: 100 log points on [1e-3, 10])");
  f3_opt.common.attach(fig3, false, true);
  fig3->callback([&] {
    action = [&] {
      const auto& o = f3_opt;
      const std::vector<double> grid = o.grid.given() ? o.grid.resolve() : default_fig3_grid();
      meta.set("subcommand", "repro fig3");
      meta.set("c", o.c);
      meta.set("h", o.h);
      meta.set("r", 1.0);
      meta.set("replicates", o.replicates);
      meta.set("seed", o.seed);
      meta.set("threads", o.common.threads);
      meta.set_list("grid", grid);
      fs::create_directories(o.out_dir);
      json files = json::array();
      std::uint64_t block = 0;
      for (double c : parse_real_list(o.c)) {
        const auto reports = estimate_L_curve(c, 1.0, o.h, grid, o.replicates, o.seed + block++,
                                              MonteCarloOptions{o.common.threads});
        Table table{{"t", "L_sim", "L_sim_se", "L_limit"}, {}, {}, json::object()};
        double max_dev = 0.0;
        for (std::size_t k = 0; k < grid.size(); ++k) {
          table.rows.push_back({grid[k], reports[k].estimate, reports[k].std_error, reports[k].exact});
          max_dev = std::max(max_dev, std::abs(reports[k].estimate - reports[k].exact));
        }
        const fs::path path = fs::path(o.out_dir) / ("fig3_c" + c_tag(c) + ".csv");
        Meta m = meta;
        m.set("panel_c", c);
        Sink sink(path.string(), out);
        emit_table(table, m, false, sink.stream());
        files.push_back({{"c", c}, {"file", path.string()}, {"max_abs_deviation", max_dev}});
        if (!o.common.as_json) {
          out << path.string() << ": max |L_sim - L_limit| = " << format_real(max_dev) << '\n';
        }
      }
      if (o.common.as_json) emit_json({{"files", files}}, meta, out);
    };
  });

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion& e) {
    out << e.what() << '\n';
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    // Show the usage of the deepest subcommand that was selected.
    const CLI::App* deepest = &app;
    for (;;) {
      const auto subs = deepest->get_subcommands();
      if (subs.empty()) break;
      deepest = subs.front();
    }
    err << deepest->help();
    return kExitValidation;
  }

  if (!action) {
    err << app.help();
    return kExitValidation;
  }
  try {
    action();
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const json::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  }
  return status;
}

}  // namespace astree
