#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "citysim/city_io.hpp"
#include "citysim/episode.hpp"
#include "citysim/tasks.hpp"

namespace citysim {

inline constexpr std::string_view kTaskSchema = "citysim.task";
inline constexpr std::string_view kTranscriptSchema = "citysim.transcript";
inline constexpr int kTaskVersion = 1;

Json to_json(const Pose& p);
Pose pose_from(const Json& j);

Json to_json(const Scan& s);
Scan scan_from(const Json& j);

Json to_json(const RobotAction& a);
RobotAction action_from(const Json& j);

Json to_json(const SafetyEvent& e);
SafetyEvent event_from(const Json& j);

Json to_json(const LogRecord& r);
LogRecord log_record_from(const Json& j);

Json to_json(const EpisodeResult& r);
EpisodeResult result_from(const Json& j);

Json to_json(const MetricsReport& r);

Json to_json(const Subtask& s);
Subtask subtask_from(const Json& j);

Json to_json(const MemoryEntry& e);
MemoryEntry memory_entry_from(const Json& j);

/// Task files carry the generating spec and the hash of the map they were
/// generated on, so the map can be regenerated or checked.
Json to_json(const MMNavTask& t, std::uint64_t map_hash);
Json to_json(const MRSTask& t, std::uint64_t map_hash);

using AnyTask = std::variant<MMNavTask, MRSTask>;
struct TaskFile {
  AnyTask task;
  std::uint64_t map_hash = 0;
};
TaskFile task_from_json(const Json& j);

void save_task(const AnyTask& task, std::uint64_t map_hash, const std::filesystem::path& path);
TaskFile load_task(const std::filesystem::path& path);

/// The map a task belongs to: regenerated from its spec, checked against the
/// recorded hash (SchemaError on mismatch).
CityMap map_for_task(const TaskFile& f);

Json to_json(const EnvConfig& c);
/// Overrides the fields present in `j`; others keep their value in `base`.
EnvConfig env_config_from(const Json& j, EnvConfig base = {});

/// One submitted action: the buffer poll index it was submitted before, the
/// agent, and the action.
struct TranscriptEntry {
  std::int64_t poll = 0;
  std::uint32_t agent = 0;
  RobotAction action;
};

/// Replayable record of a session: task, config, submissions, and the
/// resulting final poses, status and log hash.
struct Transcript {
  TaskFile task;
  EnvConfig config;
  std::vector<TranscriptEntry> entries;
  std::vector<Pose> final_poses;
  EpisodeStatus status = EpisodeStatus::running;
  std::uint64_t log_hash = 0;
};

Json to_json(const Transcript& t);
Transcript transcript_from(const Json& j);

/// Hash of the serialized log records, one canonical line per record.
std::uint64_t log_hash(const std::vector<LogRecord>& log);

/// One task of either benchmark.
AnyTask generate_task(const World& world, TaskKind kind, Rng& rng, Difficulty difficulty);

/// Builds an episode for a task on its map.
std::unique_ptr<Episode> make_episode(const CityMap& map, const AnyTask& task, const EnvConfig& config);

struct ReplayResult {
  std::vector<Pose> final_poses;
  EpisodeStatus status = EpisodeStatus::running;
  std::uint64_t log_hash = 0;
  std::vector<LogRecord> log;
};

/// Re-runs the transcript in fast mode: each entry is submitted before its
/// recorded poll, then the buffer is drained until every agent is idle.
ReplayResult replay(const CityMap& map, const Transcript& t);

}  // namespace citysim
