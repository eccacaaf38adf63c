#include "astree/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>

namespace astree {

namespace {

constexpr double kTwoToMinus53 = 0x1.0p-53;

// Uniform on the open interval (0, 1).
double uniform_open(std::mt19937_64& rng) {
  return (static_cast<double>(rng() >> 11) + 0.5) * kTwoToMinus53;
}

// Uniform on [0, 1).
double uniform_half_open(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * kTwoToMinus53;
}

void check_snapshot_times(const std::vector<double>& times) {
  if (!std::is_sorted(times.begin(), times.end())) {
    throw ValidationError("snapshot times must be ascending");
  }
  for (double t : times) {
    if (!std::isfinite(t) || t < 0.0) throw ValidationError("snapshot times must be finite and >= 0");
  }
}

}  // namespace

std::mt19937_64 make_rng(const SeedRecord& seed, std::uint64_t salt) {
  auto lo = [](std::uint64_t x) { return static_cast<std::uint32_t>(x); };
  auto hi = [](std::uint64_t x) { return static_cast<std::uint32_t>(x >> 32); };
  std::seed_seq seq{lo(seed.seed), hi(seed.seed), lo(seed.stream), hi(seed.stream), lo(salt), hi(salt)};
  return std::mt19937_64(seq);
}

// --- SplitProcess ------------------------------------------------------------

SplitProcess::SplitProcess(const Parameters& params, const SeedRecord& seed)
    : params_(validate(params, Context::Simulate)), rng_(make_rng(seed)) {
  schedule();
}

double SplitProcess::rate_factor(int depth) {
  while (static_cast<int>(factor_.size()) <= depth) {
    const int n = static_cast<int>(factor_.size());
    double f = params_.r * std::exp(-n * std::log(params_.c));
    if (params_.h && n > *params_.h) f = 0.0;
    if (!std::isfinite(f)) {
      throw NumericalError("split rate at depth " + std::to_string(n) + " overflows");
    }
    factor_.push_back(f);
  }
  return factor_[depth];
}

void SplitProcess::schedule() {
  double total = 0.0;
  for (int n = lo_; n <= hi_; ++n) {
    total += static_cast<double>(profile_.counts[n]) * rate_factor(n);
  }
  total_rate_ = total;
  if (total == 0.0) {
    next_time_ = std::numeric_limits<double>::infinity();
    return;
  }
  const double wait = -std::log(uniform_open(rng_)) / total;
  pending_selector_ = uniform_half_open(rng_);
  next_time_ = time_sum_ + (time_comp_ + wait);
  next_wait_ = wait;
}

int SplitProcess::select_depth() const {
  const double target = pending_selector_ * total_rate_;
  double cumulative = 0.0;
  int last_active = lo_;
  for (int n = lo_; n <= hi_; ++n) {
    const double w = static_cast<double>(profile_.counts[n]) * factor_[n];
    if (w == 0.0) continue;
    cumulative += w;
    last_active = n;
    if (target < cumulative) return n;
  }
  return last_active;  // rounding left target at the very top
}

SplitEvent SplitProcess::fire() {
  if (absorbed()) throw ValidationError("fire() on an absorbed process");
  const int depth = select_depth();
  // Neumaier update of the clock.
  const double t = time_sum_ + next_wait_;
  if (std::abs(time_sum_) >= std::abs(next_wait_)) {
    time_comp_ += (time_sum_ - t) + next_wait_;
  } else {
    time_comp_ += (next_wait_ - t) + time_sum_;
  }
  time_sum_ = t;

  auto& x = profile_.counts;
  if (static_cast<int>(x.size()) <= depth + 1) x.resize(depth + 2, 0);
  x[depth] -= 1;
  x[depth + 1] += 2;
  external_ += 1;
  events_ += 1;
  hi_ = std::max(hi_, depth + 1);
  while (x[lo_] == 0) ++lo_;
  rate_factor(hi_);

  const SplitEvent event{time(), depth};
  schedule();
  return event;
}

void SplitProcess::advance_to(double t) {
  while (next_time_ <= t) fire();
}

// --- Drivers -----------------------------------------------------------------

namespace {

bool stop_reached(const StopRule& stop, const SplitProcess& proc) {
  if (const auto* s = std::get_if<TargetExternal>(&stop)) return proc.external() >= s->count;
  if (const auto* s = std::get_if<MaxEvents>(&stop)) return proc.events() >= s->count;
  return false;
}

void check_stop_rule(const Parameters& params, const StopRule& stop) {
  if (std::holds_alternative<Absorption>(stop) && !params.h) {
    throw ValidationError("absorption stop rule requires a truncation depth h");
  }
  if (const auto* s = std::get_if<MaxTime>(&stop)) {
    if (!(s->time >= 0.0) || !std::isfinite(s->time)) throw ValidationError("max_time must be finite and >= 0");
  }
  if (const auto* s = std::get_if<MaxEvents>(&stop); s && s->count < 0) {
    throw ValidationError("max_events must be >= 0");
  }
  if (const auto* s = std::get_if<TargetExternal>(&stop); s && s->count < 1) {
    throw ValidationError("target_external must be >= 1");
  }
}

template <class OnEvent>
Trajectory run(const Parameters& params, const StopRule& stop, const SeedRecord& seed,
               const SimulationOptions& options, OnEvent&& on_event) {
  const Parameters p = validate(params, Context::Simulate);
  check_stop_rule(p, stop);
  check_snapshot_times(options.snapshot_times);

  Trajectory traj;
  traj.seed = seed;
  SplitProcess proc(p, seed);
  const auto& snaps = options.snapshot_times;
  std::size_t next_snap = 0;
  auto emit_snapshots_before = [&](double limit, bool inclusive) {
    while (next_snap < snaps.size() &&
           (snaps[next_snap] < limit || (inclusive && snaps[next_snap] == limit))) {
      traj.snapshots.push_back({snaps[next_snap], proc.profile()});
      ++next_snap;
    }
  };

  if (stop_reached(stop, proc)) {
    traj.diagnostic = "stop rule satisfied by the initial state; no events simulated";
  }
  const auto* max_time = std::get_if<MaxTime>(&stop);
  while (traj.diagnostic.empty() && !stop_reached(stop, proc)) {
    const double te = proc.next_event_time();
    if (max_time && te > max_time->time) break;
    if (proc.absorbed()) {
      if (!std::holds_alternative<Absorption>(stop)) {
        traj.diagnostic = "process absorbed before the stop rule was met";
      }
      break;
    }
    if (proc.events() >= options.event_limit) {
      throw NumericalError("event limit " + std::to_string(options.event_limit) +
                           " exceeded (explosive parameters?)");
    }
    emit_snapshots_before(te, false);
    const SplitEvent e = proc.fire();
    on_event(e);
    if (options.record_events) traj.events.push_back(e);
    if (options.observer) options.observer(e, proc.profile());
  }

  if (max_time) {
    traj.final_time = max_time->time;
  } else {
    traj.final_time = proc.time();
  }
  if (proc.absorbed()) {
    emit_snapshots_before(std::numeric_limits<double>::infinity(), true);
  } else {
    emit_snapshots_before(traj.final_time, true);
  }
  traj.final_profile = proc.profile();
  return traj;
}

}  // namespace

Trajectory simulate_profile(const Parameters& params, const StopRule& stop, const SeedRecord& seed,
                            const SimulationOptions& options) {
  return run(params, stop, seed, options, [](const SplitEvent&) {});
}

TreeRun simulate_tree(const Parameters& params, const StopRule& stop, const SeedRecord& seed,
                      const SimulationOptions& options) {
  std::mt19937_64 pick_rng = make_rng(seed, 1);
  std::vector<std::vector<PathWord>> by_depth(1);
  by_depth[0].push_back(PathWord{});
  TreeRun out;
  out.trajectory = run(params, stop, seed, options, [&](const SplitEvent& e) {
    auto& bucket = by_depth[e.depth];
    const auto idx = static_cast<std::size_t>(uniform_half_open(pick_rng) *
                                              static_cast<double>(bucket.size()));
    const std::size_t i = std::min(idx, bucket.size() - 1);
    PathWord parent = std::move(bucket[i]);
    bucket[i] = std::move(bucket.back());
    bucket.pop_back();
    if (static_cast<int>(by_depth.size()) <= e.depth + 1) by_depth.resize(e.depth + 2);
    by_depth[e.depth + 1].push_back(parent.child(false));
    by_depth[e.depth + 1].push_back(parent.child(true));
  });
  for (auto& bucket : by_depth) {
    for (auto& v : bucket) out.external.push_back(std::move(v));
  }
  std::sort(out.external.begin(), out.external.end(), [](const PathWord& a, const PathWord& b) {
    return a.depth() != b.depth() ? a.depth() < b.depth() : a.bits < b.bits;
  });
  return out;
}

std::vector<SenescenceState> simulate_senescence(const Parameters& params,
                                                 const std::vector<double>& grid,
                                                 const SeedRecord& seed,
                                                 const SimulationOptions& options) {
  const Parameters p = validate(params, Context::Simulate);
  if (!p.h) throw ValidationError("simulate_senescence requires a truncation depth h");
  check_snapshot_times(grid);
  const int h = *p.h;
  SplitProcess proc(p, seed);
  std::vector<SenescenceState> out;
  out.reserve(grid.size());
  for (double g : grid) {
    while (proc.next_event_time() <= g) {
      if (proc.events() >= options.event_limit) {
        throw NumericalError("event limit exceeded in simulate_senescence");
      }
      const SplitEvent e = proc.fire();
      if (options.observer) options.observer(e, proc.profile());
    }
    SenescenceState s;
    s.profile = proc.profile();
    for (int n = 0; n <= h; ++n) s.zp += s.profile.count(n);
    s.zs = s.profile.count(h + 1);
    s.time = g;
    out.push_back(std::move(s));
  }
  return out;
}

DyadicRational tail_count(const Profile& profile, int h) {
  const int top = profile.max_depth();
  if (top < h + 1) return {};
  DyadicRational::Integer num = 0;
  for (int n = h + 1; n <= top; ++n) {
    if (profile.counts[n] != 0) {
      num += DyadicRational::Integer(profile.counts[n]) << static_cast<unsigned>(top - n);
    }
  }
  return {std::move(num), static_cast<unsigned>(top - (h + 1))};
}

std::vector<TailCount> coupled_tail_count(const Trajectory& trajectory, int h) {
  if (h < 0) throw ValidationError("coupled_tail_count: h must be nonnegative");
  std::vector<TailCount> out;
  out.reserve(trajectory.snapshots.size());
  for (const auto& s : trajectory.snapshots) out.push_back({s.time, tail_count(s.profile, h)});
  return out;
}

void write_tree_csv(std::ostream& out, const std::vector<PathWord>& external) {
  out << "depth,path_bits\n";
  for (const auto& v : external) out << v.depth() << ',' << v.to_string() << '\n';
}

}  // namespace astree
