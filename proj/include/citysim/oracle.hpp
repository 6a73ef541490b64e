#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <vector>

#include "citysim/episode.hpp"
#include "citysim/error.hpp"
#include "citysim/rng.hpp"

namespace citysim {

/// Whether a straight step from `from` to `to` enters a signalized crosswalk
/// band whose pedestrian gate currently says wait.
bool step_gated(const World& world, Vec2 from, Vec2 to);

/// Follows axis-aligned targets in body-frame steps: turn to face the
/// dominant axis toward the next target, step forward, drop a target once
/// within half a step on both axes. Waits at gated crosswalks, yields
/// (for a bounded number of stays) to traffic crossing the next step, and
/// routes around static obstacles on the step lattice.
class Walker {
 public:
  void set_targets(std::vector<Vec2> targets);
  bool arrived() const { return targets_.empty() && detour_.empty(); }

  /// Next movement action, or nullopt once all targets are reached and the
  /// heading equals `final_heading` (if given).
  std::optional<RobotAction> next(const World& world, std::uint32_t agent, std::optional<double> final_heading);

 private:
  static constexpr int kMaxYield = 20;
  RobotAction move(const World& world, const Pose& pose, double heading, bool lateral);
  bool plan_detour(const World& world, Vec2 p);

  std::deque<Vec2> targets_;
  std::deque<Vec2> detour_;
  int yielded_ = 0;
};

/// Action that rotates `heading` toward `target` (right on a reversal).
RobotAction turn_toward(double heading, double target);

/// Ground-truth MMNav policy: follows the planned route subtask by subtask
/// and evaluates at each goal.
class MMNavOracle {
 public:
  explicit MMNavOracle(const MMNavTask& task);
  RobotAction next(const Episode& ep);

 private:
  std::vector<std::vector<Vec2>> targets_;  // per subtask
  std::size_t loaded_ = static_cast<std::size_t>(-1);
  Walker walker_;
};

/// Ground-truth MRS pair policy: both robots walk the shortest sidewalk
/// route toward its midpoint and check as soon as the other is in view.
class MRSOracle {
 public:
  MRSOracle(const MRSTask& task, const World& world);
  /// nullopt while this robot waits at the meeting node for the other.
  std::optional<RobotAction> next(const Episode& ep, std::uint32_t agent);

 private:
  Walker walkers_[2];
};

/// Uniformly random actions over the movement set plus the task's
/// completion action.
class RandomAgent {
 public:
  RandomAgent(std::uint64_t seed, TaskKind kind) : rng_(seed), kind_(kind) {}
  RobotAction next();

 private:
  Rng rng_;
  TaskKind kind_;
};

/// Drives every available agent with `policy(ep, agent)` until the episode
/// ends. A policy returning nullopt leaves that agent idle for the poll.
/// Throws OracleBlocked if every agent is left idle.
template <class Policy>
EpisodeResult run_episode(Episode& ep, Policy&& policy) {
  while (!ep.done()) {
    for (std::uint32_t a = 0; a < ep.agents() && !ep.done(); ++a) {
      if (!ep.buffer().available(a)) continue;
      std::optional<RobotAction> action = policy(ep, a);
      if (action) ep.submit(a, std::move(*action));
    }
    if (ep.buffer().idle()) throw Error(ErrorCode::oracle_blocked, "policy left every agent idle");
    ep.poll();
  }
  return ep.result();
}

EpisodeResult run_mmnav_oracle(Episode& ep);
EpisodeResult run_mrs_oracle(Episode& ep);
EpisodeResult run_random(Episode& ep, std::uint64_t seed);

}  // namespace citysim
