// Exact event-driven simulation of the splitting process.
//
// Every external vertex at depth n splits at rate r c^{-n}. Since the rates
// depend on depth only, the process lumps exactly onto the profile: depth n
// fires at total rate r X_n c^{-n} and moves one vertex from n to two at n+1.
// With a truncation depth h, vertices at depth h+1 are inert (senescent).
#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <variant>
#include <vector>

#include "astree/core.hpp"

namespace astree {

struct TargetExternal {
  std::int64_t count;
};
struct MaxTime {
  double time;
};
struct MaxEvents {
  std::int64_t count;
};
/// Run until no vertex can split; only meaningful with a truncation depth.
struct Absorption {};

using StopRule = std::variant<TargetExternal, MaxTime, MaxEvents, Absorption>;

/// Per-(seed, stream, salt) generator. Salt separates auxiliary draws (such
/// as the vertex pick of the tree simulator) from the event stream.
std::mt19937_64 make_rng(const SeedRecord& seed, std::uint64_t salt = 0);

/// The profile-level engine. Each event consumes two 64-bit draws in a fixed
/// order: the waiting time first, then the depth selector.
class SplitProcess {
 public:
  SplitProcess(const Parameters& params, const SeedRecord& seed);

  double time() const { return time_sum_ + time_comp_; }
  const Profile& profile() const { return profile_; }
  std::int64_t external() const { return external_; }
  std::int64_t events() const { return events_; }
  bool absorbed() const { return total_rate_ == 0.0; }
  /// Infinity once absorbed.
  double next_event_time() const { return next_time_; }

  /// Fires the pending event and schedules the next one.
  SplitEvent fire();
  /// Fires every event with time <= t.
  void advance_to(double t);

 private:
  double rate_factor(int depth);
  void schedule();
  int select_depth() const;

  Parameters params_;
  std::mt19937_64 rng_;
  Profile profile_ = Profile::root();
  std::vector<double> factor_;  // r c^{-n}; zero at the inert depth
  int lo_ = 0;                  // shallowest occupied depth
  int hi_ = 0;                  // deepest occupied depth
  std::int64_t external_ = 1;
  std::int64_t events_ = 0;
  double time_sum_ = 0.0;
  double time_comp_ = 0.0;
  double total_rate_ = 0.0;
  double next_time_ = 0.0;
  double next_wait_ = 0.0;
  double pending_selector_ = 0.0;
};

struct SimulationOptions {
  std::vector<double> snapshot_times;  // ascending
  bool record_events = true;
  /// Guards against explosive runs (c < 1 with a time stop).
  std::int64_t event_limit = 200'000'000;
  /// Called after every event with the post-event profile.
  std::function<void(const SplitEvent&, const Profile&)> observer;
};

Trajectory simulate_profile(const Parameters& params, const StopRule& stop, const SeedRecord& seed,
                            const SimulationOptions& options = {});

struct TreeRun {
  std::vector<PathWord> external;  // sorted lexicographically by (depth, bits)
  Trajectory trajectory;
};

/// Same event sequence as simulate_profile for the same seed; additionally
/// tracks which vertex split, chosen uniformly within the firing depth from
/// an independent stream.
TreeRun simulate_tree(const Parameters& params, const StopRule& stop, const SeedRecord& seed,
                      const SimulationOptions& options = {});

struct SenescenceState {
  Profile profile;
  std::int64_t zp = 0;  // external vertices at depth <= h
  std::int64_t zs = 0;  // external vertices at depth h+1
  double time = 0.0;

  double L() const { return static_cast<double>(zp) / static_cast<double>(zp + zs); }
};

/// Runs the truncated model (params.h required) and records the state at
/// each grid time (ascending).
std::vector<SenescenceState> simulate_senescence(const Parameters& params,
                                                 const std::vector<double>& grid,
                                                 const SeedRecord& seed,
                                                 const SimulationOptions& options = {});

struct TailCount {
  double time;
  DyadicRational value;
};

/// sum_{n>=h+1} 2^{h+1-n} X_n at each snapshot of a full-model trajectory:
/// the number of depth-(h+1) vertices with an external descendant-or-self.
std::vector<TailCount> coupled_tail_count(const Trajectory& trajectory, int h);

/// The same count for a single profile.
DyadicRational tail_count(const Profile& profile, int h);

void write_tree_csv(std::ostream& out, const std::vector<PathWord>& external);

}  // namespace astree
