#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "citysim/env.hpp"
#include "citysim/metrics.hpp"
#include "citysim/tasks.hpp"

namespace citysim {

enum class EpisodeStatus : std::uint8_t { running, success, failure };
std::string_view status_name(EpisodeStatus s);

/// One executed action: what was asked, what happened, and the safety events
/// raised since the agent's previous record.
struct LogRecord {
  std::uint64_t tick = 0;
  std::uint32_t agent = 0;
  RobotAction action;
  std::string outcome;  // ok, blocked, success, failure, delivered, noop
  std::vector<SafetyEvent> events;
  Pose pose;  // after the action
  std::int64_t start = 0;
  std::int64_t end = 0;
};

struct Message {
  std::uint32_t from = 0;
  std::string text;
  std::uint64_t tick = 0;
};

/// A task bound to a live world. Robot 0 is the MMNav robot or the MRS main
/// robot; robot 1 is the MRS follower.
class Episode {
 public:
  Episode(const CityMap& map, MMNavTask task, EnvConfig config = {});
  Episode(const CityMap& map, MRSTask task, EnvConfig config = {});

  TaskKind kind() const { return kind_; }
  std::size_t agents() const { return world_.robot_count(); }
  World& world() { return world_; }
  const World& world() const { return world_; }
  ControlBuffer& buffer() { return buffer_; }
  const ControlBuffer& buffer() const { return buffer_; }

  const MMNavTask* mmnav() const { return mmnav_ ? &*mmnav_ : nullptr; }
  const MRSTask* mrs() const { return mrs_ ? &*mrs_ : nullptr; }

  /// Throws BadRequest once the episode is over, AgentBusy / UnknownAgent /
  /// MessageTooLong from the buffer.
  void submit(std::uint32_t agent, RobotAction action);
  /// One buffer poll with task semantics applied to each completion.
  std::vector<LogRecord> poll();
  /// Submit and poll until this agent's action completes.
  LogRecord step(std::uint32_t agent, RobotAction action);

  EpisodeStatus status() const { return status_; }
  bool done() const { return status_ != EpisodeStatus::running; }
  /// Index of the subtask being worked on (MMNav).
  std::size_t current_subtask() const { return completed_; }
  const Subtask* current() const;
  int steps() const { return steps_; }
  int budget() const;
  const std::vector<LogRecord>& log() const { return log_; }

  /// Messages received since the last call.
  std::vector<Message> take_messages(std::uint32_t agent);

  EpisodeResult result() const;

 private:
  void apply(LogRecord& r, const Completion& c);

  TaskKind kind_;
  std::optional<MMNavTask> mmnav_;
  std::optional<MRSTask> mrs_;
  World world_;
  ControlBuffer buffer_;
  EpisodeStatus status_ = EpisodeStatus::running;
  std::size_t completed_ = 0;
  bool met_ = false;
  int steps_ = 0;
  std::vector<LogRecord> log_;
  std::vector<std::vector<Message>> inbox_;
  SafetyCounts safety_;
};

}  // namespace citysim
