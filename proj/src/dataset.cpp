#include "citysim/dataset.hpp"

#include <atomic>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "citysim/oracle.hpp"
#include "json_fields.hpp"

namespace citysim {

using namespace detail;

namespace {

Json kinds_json(const std::vector<ActionKind>& v) {
  Json j = Json::array();
  for (ActionKind k : v) j.push_back(action_name(k));
  return j;
}

std::vector<ActionKind> kinds_from(const Json& j) {
  std::vector<ActionKind> v;
  for (const Json& k : j) v.push_back(action_from_name(k.get<std::string>()));
  return v;
}

CityMap without_traffic(CityMap map) {
  map.spawns.clear();
  return map;
}

// Static-world execution: with no moving agents the outcome of an action
// does not depend on timing, so the buffer's polling can be skipped.
void run_action(World& w, std::uint32_t agent, ActionKind k) {
  const RobotAction a = RobotAction::of(k);
  w.begin(agent, a);
  w.finish(agent, a);
  w.take_events(agent);
}

unsigned worker_count(unsigned requested, std::size_t jobs) {
  unsigned n = requested != 0 ? requested : std::max(1u, std::thread::hardware_concurrency());
  return static_cast<unsigned>(std::min<std::size_t>(n, std::max<std::size_t>(jobs, 1)));
}

// Runs job(i) for i in [0, n) on a small pool; the first exception wins.
template <class Job>
void parallel_for(std::size_t n, unsigned threads, Job&& job) {
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex m;
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        job(i);
      } catch (...) {
        std::lock_guard lock(m);
        if (!failure) failure = std::current_exception();
        next = n;
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < worker_count(threads, n); ++t) pool.emplace_back(work);
  work();
  for (std::thread& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

void write_lines(std::ofstream& out, const std::filesystem::path& path, const std::string& text) {
  out << text;
  if (!out) throw Error(ErrorCode::io_error, "cannot write " + path.string());
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io_error, "cannot open " + path.string() + " for writing");
  return out;
}

struct MapOutput {
  std::string tasks;
  std::string records;
  int trajectories = 0;
  std::int64_t steps = 0;
};

void append_rollout(MapOutput& o, const MMNavTask& t, std::uint64_t hash, const Rollout& r) {
  o.tasks += to_json(t, hash).dump() + "\n";
  for (const StepRecord& s : r.records) o.records += to_json(s).dump() + "\n";
  ++o.trajectories;
  o.steps += static_cast<std::int64_t>(r.records.size());
}

DatasetManifest write_dataset(const std::vector<MapOutput>& parts, DatasetManifest m, const std::filesystem::path& out) {
  std::error_code ec;
  std::filesystem::create_directories(out, ec);
  if (ec) throw Error(ErrorCode::io_error, "cannot create " + out.string() + ": " + ec.message());
  std::ofstream tasks = open_out(out / "tasks.jsonl");
  std::ofstream records = open_out(out / "records.jsonl");
  for (const MapOutput& p : parts) {
    write_lines(tasks, out / "tasks.jsonl", p.tasks);
    write_lines(records, out / "records.jsonl", p.records);
    m.trajectories += p.trajectories;
    m.steps += p.steps;
  }
  write_file(out / "manifest.json", to_json(m).dump(2) + "\n");
  return m;
}

}  // namespace

Json to_json(const StepRecord& r) {
  const Supervision& s = r.supervision;
  return {{"task", r.task},
          {"step", r.step},
          {"subtask", r.subtask},
          {"instruction", r.instruction},
          {"pose", to_json(r.pose)},
          {"observation", to_json(r.observation)},
          {"action", to_json(r.action)},
          {"supervision",
           {{"distance", s.distance},
            {"orientation", cardinal_letter(s.orientation)},
            {"remaining", kinds_json(s.remaining)},
            {"remaining_task", kinds_json(s.remaining_task)}}}};
}

StepRecord step_record_from(const Json& j) {
  try {
    StepRecord r;
    r.task = get<std::string>(j, "task");
    r.step = get<int>(j, "step");
    r.subtask = get<std::size_t>(j, "subtask");
    r.instruction = get<std::string>(j, "instruction");
    r.pose = pose_from(field(j, "pose"));
    r.observation = scan_from(field(j, "observation"));
    r.action = action_from(field(j, "action"));
    const Json& s = field(j, "supervision");
    r.supervision.distance = get<double>(s, "distance");
    r.supervision.orientation = cardinal_from_letter(get<std::string>(s, "orientation"));
    r.supervision.remaining = kinds_from(field(s, "remaining"));
    r.supervision.remaining_task = kinds_from(field(s, "remaining_task"));
    return r;
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    schema_fail(std::string("malformed step record: ") + e.what());
  }
}

Supervision annotate_step(const CityMap& map, Pose pose, const Subtask& subtask, std::span<const Vec2> targets,
                          const EnvConfig& config) {
  Supervision s;
  s.distance = manhattan(pose.position, subtask.goal.pose.position);
  s.orientation = cardinal_of(subtask.goal.pose.heading);
  const CityMap still = without_traffic(map);
  World w(still, config);
  const auto robot = w.add_robot(pose);
  Walker walker;
  walker.set_targets({targets.begin(), targets.end()});
  for (int guard = 0; guard < 10000; ++guard) {
    const auto a = walker.next(w, robot, subtask.goal.pose.heading);
    if (!a) {
      if (!s.remaining.empty()) s.remaining.push_back(ActionKind::evaluate);
      s.remaining_task = s.remaining;
      return s;
    }
    s.remaining.push_back(a->kind);
    run_action(w, robot, a->kind);
  }
  throw Error(ErrorCode::oracle_blocked, "no route to the subtask goal from the given pose");
}

Rollout rollout_oracle(const CityMap& map, const MMNavTask& task, const EnvConfig& config) {
  Episode ep(map, task, config);
  MMNavOracle oracle(task);
  Rollout r;
  while (!ep.done()) {
    if (ep.buffer().available(0)) {
      StepRecord rec;
      rec.task = task.id;
      rec.step = static_cast<int>(r.records.size());
      rec.subtask = ep.current_subtask();
      rec.instruction = task.subtasks[rec.subtask].instruction;
      rec.pose = ep.world().robot(0).pose;
      rec.observation = ep.world().observe(0);
      rec.action = oracle.next(ep);
      ep.submit(0, rec.action);
      r.actions.push_back(rec.action);
      r.records.push_back(std::move(rec));
    }
    ep.poll();
  }
  r.result = ep.result();
  if (ep.status() != EpisodeStatus::success) {
    throw Error(ErrorCode::oracle_blocked, "oracle did not finish task " + task.id + " within " +
                                               std::to_string(task.step_budget) + " steps");
  }
  // Hindsight supervision: the executed suffix up to each subtask's evaluate.
  const std::size_t n = r.actions.size();
  std::vector<std::size_t> close(n);
  for (std::size_t i = n; i-- > 0;) {
    close[i] = r.actions[i].kind == ActionKind::evaluate ? i : close[i + 1];
  }
  for (std::size_t i = 0; i < n; ++i) {
    StepRecord& rec = r.records[i];
    const Goal& g = task.subtasks[rec.subtask].goal;
    Supervision& s = rec.supervision;
    s.distance = manhattan(rec.pose.position, g.pose.position);
    s.orientation = cardinal_of(g.pose.heading);
    if (i != close[i]) {
      for (std::size_t k = i; k <= close[i]; ++k) s.remaining.push_back(r.actions[k].kind);
    }
    s.remaining_task = s.remaining;
    for (std::size_t k = close[i] + 1; k < n; ++k) s.remaining_task.push_back(r.actions[k].kind);
  }
  return r;
}

OracleRun record_oracle(const CityMap& map, const TaskFile& task, const EnvConfig& config) {
  OracleRun run;
  Transcript& t = run.transcript;
  t.task = task;
  t.config = config;
  auto ep = make_episode(map, task.task, config);
  std::optional<MMNavOracle> nav;
  std::optional<MRSOracle> mrs;
  if (const MMNavTask* m = ep->mmnav()) nav.emplace(*m);
  if (const MRSTask* m = ep->mrs()) mrs.emplace(*m, ep->world());
  run_episode(*ep, [&](Episode& e, std::uint32_t agent) -> std::optional<RobotAction> {
    std::optional<RobotAction> a = nav ? std::optional(nav->next(e)) : mrs->next(e, agent);
    if (a) t.entries.push_back({e.buffer().polls(), agent, *a});
    return a;
  });
  while (!ep->buffer().idle()) ep->poll();
  for (std::uint32_t a = 0; a < ep->agents(); ++a) t.final_poses.push_back(ep->world().robot(a).pose);
  t.status = ep->status();
  run.log = ep->log();
  t.log_hash = log_hash(run.log);
  run.result = ep->result();
  return run;
}

Json to_json(const DatasetManifest& m) {
  return {{"schema", kDatasetSchema},
          {"version", 1},
          {"maps", m.maps},
          {"trajectories", m.trajectories},
          {"steps", m.steps},
          {"seed", std::to_string(m.seed)},
          {"difficulty", difficulty_name(m.difficulty)},
          {"min_steps", m.min_steps},
          {"tasks", "tasks.jsonl"},
          {"records", "records.jsonl"}};
}

DatasetManifest manifest_from(const Json& j) {
  try {
    if (get<std::string>(j, "schema") != kDatasetSchema) schema_fail("not a dataset manifest");
    DatasetManifest m;
    m.maps = get<int>(j, "maps");
    m.trajectories = get<int>(j, "trajectories");
    m.steps = get<std::int64_t>(j, "steps");
    m.seed = std::stoull(get<std::string>(j, "seed"));
    m.difficulty = difficulty_from_name(get<std::string>(j, "difficulty"));
    m.min_steps = get<int>(j, "min_steps");
    return m;
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    schema_fail(std::string("malformed manifest: ") + e.what());
  }
}

CitySpec dataset_map_spec(const DatasetConfig& c, int index) {
  CitySpec base;
  base.seed = derive_seed(c.seed, static_cast<std::uint64_t>(index) + 1);
  CitySpec spec = variant_for(base, c.difficulty);
  spec.buildings.asset_pool = AssetPool::train;
  return spec;
}

DatasetManifest export_dataset(const DatasetConfig& c, const std::filesystem::path& out) {
  if (c.maps <= 0 || c.tasks_per_map <= 0) throw Error(ErrorCode::empty_input, "dataset needs maps and tasks");
  std::vector<MapOutput> parts(static_cast<std::size_t>(c.maps));
  parallel_for(parts.size(), c.threads, [&](std::size_t i) {
    const CitySpec spec = dataset_map_spec(c, static_cast<int>(i));
    const CityMap map = generate_city(spec);
    const std::uint64_t hash = map_hash(map);
    const World world(map);
    Rng rng(derive_seed(spec.seed, Stream::tasks));
    int kept = 0;
    for (int attempt = 0; kept < c.tasks_per_map; ++attempt) {
      if (attempt >= c.max_attempts) {
        throw Error(ErrorCode::no_valid_pair, "map " + std::to_string(i) + ": no task with " +
                                                  std::to_string(c.min_steps) + " oracle steps");
      }
      const MMNavTask task = generate_mmnav_task(world, rng, c.difficulty);
      const Rollout r = rollout_oracle(map, task);
      if (static_cast<int>(r.records.size()) < c.min_steps) continue;
      append_rollout(parts[i], task, hash, r);
      ++kept;
    }
  });
  DatasetManifest m;
  m.maps = c.maps;
  m.seed = c.seed;
  m.difficulty = c.difficulty;
  m.min_steps = c.min_steps;
  return write_dataset(parts, m, out);
}

DatasetManifest export_tasks(const CityMap& map, std::span<const MMNavTask> tasks, const std::filesystem::path& out) {
  if (tasks.empty()) throw Error(ErrorCode::empty_input, "no tasks to export");
  const std::uint64_t hash = map_hash(map);
  std::vector<MapOutput> parts(1);
  for (const MMNavTask& t : tasks) append_rollout(parts[0], t, hash, rollout_oracle(map, t));
  DatasetManifest m;
  m.maps = 1;
  m.seed = map.spec.seed;
  m.difficulty = tasks.front().difficulty;
  return write_dataset(parts, m, out);
}

DatasetReport validate_dataset(const std::filesystem::path& dir, unsigned threads) {
  const DatasetManifest manifest = manifest_from(Json::parse(read_file(dir / "manifest.json")));
  DatasetReport report;
  std::mutex m;
  auto violation = [&](const std::string& what) {
    std::lock_guard lock(m);
    ++report.violations;
    if (report.messages.size() < 20) report.messages.push_back(what);
  };

  std::vector<TaskFile> tasks;
  {
    std::istringstream in(read_file(dir / "tasks.jsonl"));
    for (std::string line; std::getline(in, line);) {
      if (!line.empty()) tasks.push_back(task_from_json(Json::parse(line)));
    }
  }
  std::map<std::string, std::size_t> task_index;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (!std::holds_alternative<MMNavTask>(tasks[i].task)) schema_fail("dataset tasks must be MMNav tasks");
    task_index[std::get<MMNavTask>(tasks[i].task).id] = i;
  }
  std::vector<std::vector<StepRecord>> by_task(tasks.size());
  {
    std::istringstream in(read_file(dir / "records.jsonl"));
    for (std::string line; std::getline(in, line);) {
      if (line.empty()) continue;
      StepRecord r = step_record_from(Json::parse(line));
      ++report.records;
      auto it = task_index.find(r.task);
      if (it == task_index.end()) {
        violation("record for unknown task " + r.task);
        continue;
      }
      by_task[it->second].push_back(std::move(r));
    }
  }
  if (report.records != manifest.steps) {
    violation("manifest steps " + std::to_string(manifest.steps) + " != records " + std::to_string(report.records));
  }
  if (static_cast<int>(tasks.size()) != manifest.trajectories) {
    violation("manifest trajectories " + std::to_string(manifest.trajectories) + " != tasks " +
              std::to_string(tasks.size()));
  }
  std::set<std::uint64_t> hashes;
  for (const TaskFile& t : tasks) hashes.insert(t.map_hash);
  if (static_cast<int>(hashes.size()) != manifest.maps) {
    violation("manifest maps " + std::to_string(manifest.maps) + " != distinct maps " + std::to_string(hashes.size()));
  }

  std::atomic<int> test_only{0};
  parallel_for(tasks.size(), threads, [&](std::size_t ti) {
    const MMNavTask& task = std::get<MMNavTask>(tasks[ti].task);
    const CityMap map = map_for_task(tasks[ti]);
    if (task.spec.buildings.asset_pool == AssetPool::train) {
      for (const Building& b : map.buildings) {
        const BuildingAsset* a = find_asset(b.asset);
        if (a != nullptr && a->test_only) ++test_only;
      }
    }
    const CityMap still = without_traffic(map);
    World w(still);
    const auto robot = w.add_robot(task.start);
      const bool easy = task.difficulty == Difficulty::easy;
    int expected = 0;
    for (const StepRecord& r : by_task[ti]) {
      const std::string where = task.id + " step " + std::to_string(r.step);
      if (r.step != expected++) violation(where + ": steps out of order");
      if (r.subtask >= task.subtasks.size()) {
        violation(where + ": subtask index out of range");
        continue;
      }
      const Subtask& s = task.subtasks[r.subtask];
      const Supervision& sup = r.supervision;
      if (sup.distance != manhattan(r.pose.position, s.goal.pose.position)) violation(where + ": distance mismatch");
      if (sup.orientation != cardinal_of(s.goal.pose.heading)) violation(where + ": orientation mismatch");
      if (r.instruction != s.instruction) violation(where + ": instruction mismatch");
      if (sup.remaining_task.size() < sup.remaining.size() ||
          !std::equal(sup.remaining.begin(), sup.remaining.end(), sup.remaining_task.begin())) {
        violation(where + ": remaining actions are not a prefix of the task suffix");
      }
      w.set_pose(robot, r.pose);
      if (easy && !(w.observe(robot) == r.observation)) violation(where + ": observation differs from the map");
      for (std::size_t k = 0; k + 1 < sup.remaining.size(); ++k) run_action(w, robot, sup.remaining[k]);
      if (!sup.remaining.empty() && sup.remaining.back() != ActionKind::evaluate) {
        violation(where + ": remaining actions do not end with evaluate");
      }
      if (!check_subtask_success(w, robot, s)) violation(where + ": remaining actions miss the subtask goal");
    }
  });
  report.test_only_assets = test_only;
  return report;
}

}  // namespace citysim
