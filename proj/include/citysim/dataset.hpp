#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "citysim/task_io.hpp"

namespace citysim {

inline constexpr std::string_view kDatasetSchema = "citysim.dataset";

struct Supervision {
  double distance = 0.0;  // Manhattan, agent to the hint capture position
  Cardinal orientation = Cardinal::N;  // cardinal of the hint capture heading
  std::vector<ActionKind> remaining;       // to the active subtask's goal, closing evaluate included
  std::vector<ActionKind> remaining_task;  // to the end of the task
};

struct StepRecord {
  std::string task;
  int step = 0;
  std::size_t subtask = 0;
  std::string instruction;
  Pose pose;  // before the action
  Scan observation;
  RobotAction action;
  Supervision supervision;
};

Json to_json(const StepRecord& r);
StepRecord step_record_from(const Json& j);

/// Supervision for a static world: the oracle walk from `pose` through the
/// subtask's remaining route targets, then evaluate. Empty when the agent
/// already stands at the goal pose.
Supervision annotate_step(const CityMap& map, Pose pose, const Subtask& subtask, std::span<const Vec2> targets,
                          const EnvConfig& config = {});

struct Rollout {
  std::vector<RobotAction> actions;
  std::vector<StepRecord> records;
  EpisodeResult result;
};

/// Closed-loop oracle run with one record per action; remaining-action
/// fields are the suffix the oracle actually executed. Throws OracleBlocked
/// if the oracle does not finish the task.
Rollout rollout_oracle(const CityMap& map, const MMNavTask& task, const EnvConfig& config = {});

/// Oracle run of either benchmark, recorded as a replayable transcript.
struct OracleRun {
  Transcript transcript;
  std::vector<LogRecord> log;
  EpisodeResult result;
};
OracleRun record_oracle(const CityMap& map, const TaskFile& task, const EnvConfig& config = {});

struct DatasetConfig {
  std::uint64_t seed = 1;
  int maps = 100;
  int tasks_per_map = 2;
  int min_steps = 100;
  int max_attempts = 200;  // per map
  Difficulty difficulty = Difficulty::easy;
  unsigned threads = 0;  // 0 = hardware concurrency
};

struct DatasetManifest {
  int maps = 0;
  int trajectories = 0;
  std::int64_t steps = 0;
  std::uint64_t seed = 0;
  Difficulty difficulty = Difficulty::easy;
  int min_steps = 0;
};

Json to_json(const DatasetManifest& m);
DatasetManifest manifest_from(const Json& j);

/// Training-map spec for map `index` of a dataset (train asset pool).
CitySpec dataset_map_spec(const DatasetConfig& c, int index);

/// Rolls out tasks on freshly generated training maps, writing
/// tasks.jsonl, records.jsonl and manifest.json under `out`.
DatasetManifest export_dataset(const DatasetConfig& c, const std::filesystem::path& out);

/// Writes the rollouts of given tasks (all on `map`) as a dataset.
DatasetManifest export_tasks(const CityMap& map, std::span<const MMNavTask> tasks, const std::filesystem::path& out);

struct DatasetReport {
  std::int64_t records = 0;
  std::int64_t violations = 0;
  int test_only_assets = 0;
  std::vector<std::string> messages;  // first few violations

  bool ok() const { return violations == 0 && test_only_assets == 0; }
};

/// Reloads every record and re-checks it: manifest totals, distance and
/// orientation recomputed from the pose, the remaining actions replayed in a
/// static world reach the subtask goal, observations match on easy maps, and
/// no test-only building asset appears on a training map.
DatasetReport validate_dataset(const std::filesystem::path& dir, unsigned threads = 0);

}  // namespace citysim
