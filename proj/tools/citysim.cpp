#include <CLI11.hpp>

#include <chrono>
#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <thread>

#include "audit.hpp"
#include "citysim/dataset.hpp"
#include "citysim/error.hpp"
#include "citysim/server.hpp"
#include "eval.hpp"

using namespace citysim;
namespace fs = std::filesystem;

namespace {

struct Common {
  std::uint64_t seed = 1;
  std::string difficulty = "easy";
  std::string benchmark = "mmnav";
};

Difficulty difficulty(const Common& c) { return difficulty_from_name(c.difficulty); }

CityMap city_for(const Common& c) {
  CitySpec spec;
  spec.seed = c.seed;
  return generate_city(variant_for(spec, difficulty(c)));
}

void print(const Json& j) { std::cout << j.dump(2) << "\n"; }

std::string task_id(const AnyTask& t) {
  return std::visit([](const auto& x) { return x.id; }, t);
}

TaskFile task_or_generated(const std::string& path, const Common& c) {
  if (!path.empty()) return load_task(path);
  const CityMap map = city_for(c);
  const World w(map);
  Rng rng(derive_seed(c.seed, Stream::tasks));
  return {generate_task(w, task_kind_from_name(c.benchmark), rng, difficulty(c)), map_hash(map)};
}

int cmd_generate(const Common& c, double area, const std::string& spec_path, const std::string& out) {
  CitySpec spec;
  if (!spec_path.empty()) spec = spec_from_json(Json::parse(read_file(spec_path)));
  spec.seed = c.seed;
  if (area > 0) spec.target_area_km2 = area;
  const CityMap map = generate_city(variant_for(spec, difficulty(c)));
  if (out.empty() || out == "-") {
    std::cout << serialize_map(map) << "\n";
  } else {
    save_map(map, out);
    print({{"map", out},
           {"hash", hex64(map_hash(map))},
           {"area_km2", map.area_km2()},
           {"roads", map.roads.size()},
           {"intersections", map.intersections.size()},
           {"buildings", map.buildings.size()},
           {"elements", map.elements.size()},
           {"spawns", map.spawns.size()}});
  }
  return 0;
}

int cmd_gen_tasks(const Common& c, const std::string& map_path, int count, const std::string& out) {
  const Difficulty d = difficulty(c);
  CityMap map;
  if (map_path.empty()) {
    map = city_for(c);
  } else {
    map = load_map(map_path);
    if (to_json(variant_for(map.spec, d)) != to_json(map.spec)) {
      throw Error(ErrorCode::bad_request, "map " + map_path + " was not generated as a " + c.difficulty + " map");
    }
  }
  fs::create_directories(out);
  if (map_path.empty()) save_map(map, fs::path(out) / "map.json");
  const World w(map);
  const std::uint64_t hash = map_hash(map);
  Rng rng(derive_seed(c.seed, Stream::tasks));
  Json files = Json::array();
  for (int i = 0; i < count; ++i) {
    const AnyTask t = generate_task(w, task_kind_from_name(c.benchmark), rng, d);
    const fs::path p = fs::path(out) / (task_id(t) + ".json");
    save_task(t, hash, p);
    files.push_back(p.string());
  }
  print({{"map_hash", hex64(hash)}, {"tasks", files}});
  return 0;
}

int cmd_simulate(const Common& c, const std::string& map_path, std::int64_t ticks, const std::string& dump, int every) {
  const CityMap map = map_path.empty() ? city_for(c) : load_map(map_path);
  World w(map);
  std::ofstream out;
  if (!dump.empty()) {
    out.open(dump, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::io_error, "cannot open " + dump);
    w.traffic().dump(out);
  }
  const auto t0 = std::chrono::steady_clock::now();
  for (std::int64_t i = 0; i < ticks; ++i) {
    w.advance_to(static_cast<std::int64_t>(w.tick() + 1) * kUnitsPerTick);
    if (out.is_open() && every > 0 && (i + 1) % every == 0) w.traffic().dump(out);
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const TrafficStats& s = w.traffic().stats();
  print({{"ticks", w.tick()},
         {"time", w.traffic().clock().time()},
         {"state_hash", hex64(w.state_hash())},
         {"vehicles", w.traffic().vehicles().size()},
         {"pedestrians", w.traffic().pedestrians().size()},
         {"crosswalk_entries", s.crosswalk_entries},
         {"entries_under_wait", s.entries_under_wait},
         {"gate_waits", s.gate_waits},
         {"routes_completed", s.routes_completed},
         {"ticks_per_second", secs > 0 ? static_cast<double>(ticks) / secs : 0.0}});
  return 0;
}

int cmd_serve(const Common& c, const std::string& config_path, const std::optional<int>& port,
              const std::string& mode, const std::string& task, bool generate) {
  ServerConfig cfg = load_server_config(config_path.empty() ? std::nullopt : std::optional<fs::path>(config_path),
                                        [](const char* k) { return std::getenv(k); });
  if (port) cfg.port = *port;
  if (!mode.empty()) cfg.mode = clock_mode_from_name(mode);
  if (!task.empty()) cfg.task = task;
  cfg = server_config_from(Json::object(), cfg);

  // Block termination signals in every thread; the main thread waits for them.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  Session session(cfg);
  if (generate && cfg.task.empty()) {
    const Json r = session.handle(
        {{"op", "reset"}, {"generate", {{"benchmark", c.benchmark}, {"seed", c.seed}, {"difficulty", c.difficulty}}}});
    if (r["status"] != "ok") throw Error(ErrorCode::config_error, r.dump());
  }
  Server server(session);
  server.start();
  std::cout << "listening on " << cfg.host << ":" << server.port() << " (" << clock_mode_name(cfg.mode) << ")"
            << std::endl;
  int sig = 0;
  sigwait(&signals, &sig);
  server.stop();
  return 0;
}

int cmd_info(const std::string& config_path) {
  ServerConfig cfg = load_server_config(config_path.empty() ? std::nullopt : std::optional<fs::path>(config_path),
                                        [](const char* k) { return std::getenv(k); });
  Session session(cfg);
  print(session.handle({{"op", "info"}}));
  return 0;
}

int cmd_rollout(const Common& c, const std::string& task_path, const std::string& log, const std::string& result,
                const std::string& transcript) {
  const TaskFile task = task_or_generated(task_path, c);
  const CityMap map = map_for_task(task);
  const OracleRun run = record_oracle(map, task);
  if (!log.empty()) {
    std::string text;
    for (const LogRecord& r : run.log) text += to_json(r).dump() + "\n";
    write_file(log, text);
  }
  if (!result.empty()) write_file(result, to_json(run.result).dump() + "\n");
  if (!transcript.empty()) write_file(transcript, to_json(run.transcript).dump() + "\n");
  print({{"task", task_id(task.task)}, {"result", to_json(run.result)}, {"log_hash", hex64(run.transcript.log_hash)}});
  return run.result.success || run.result.met ? 0 : 1;
}

int cmd_export(const Common& c, DatasetConfig dc, const std::string& out, bool validate) {
  dc.seed = c.seed;
  dc.difficulty = difficulty(c);
  const auto t0 = std::chrono::steady_clock::now();
  const DatasetManifest m = export_dataset(dc, out);
  Json j = to_json(m);
  j["seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  int code = 0;
  if (validate) {
    const DatasetReport r = validate_dataset(out, dc.threads);
    j["validation"] = {{"records", r.records}, {"violations", r.violations}, {"test_only_assets", r.test_only_assets},
                       {"messages", r.messages}};
    code = r.ok() ? 0 : 1;
  }
  print(j);
  return code;
}

int cmd_eval(const std::vector<std::string>& inputs, const std::string& json_out) {
  std::vector<fs::path> paths(inputs.begin(), inputs.end());
  const std::vector<MetricsReport> rows = tools::evaluate_logs(paths);
  std::cout << format_report_table(rows);
  if (!json_out.empty()) {
    Json j = {{"rows", Json::array()}};
    for (const MetricsReport& r : rows) j["rows"].push_back(to_json(r));
    write_file(json_out, j.dump(2) + "\n");
  }
  return 0;
}

int cmd_validate(const std::string& path) {
  if (fs::is_directory(path)) {
    const DatasetReport r = validate_dataset(path);
    print({{"kind", "dataset"}, {"records", r.records}, {"violations", r.violations},
           {"test_only_assets", r.test_only_assets}, {"messages", r.messages}, {"ok", r.ok()}});
    return r.ok() ? 0 : 1;
  }
  const std::string text = read_file(path);
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::schema_error, path + ": " + e.what());
  }
  const std::string schema = j.is_object() ? j.value("schema", std::string()) : std::string();
  if (schema == kMapSchema) {
    const CityMap map = parse_map(text);
    const tools::MapAudit a = tools::audit_map(map);
    const bool regenerates = map_hash(generate_city(map.spec)) == map_hash(map);
    print({{"kind", "map"}, {"hash", hex64(map_hash(map))}, {"regenerates", regenerates},
           {"building_overlaps", a.building_overlaps}, {"road_overlaps", a.road_overlaps},
           {"sidewalk_components", a.sidewalk_components}, {"road_components", a.road_components},
           {"ok", a.sound()}});
    return a.sound() ? 0 : 1;
  }
  if (schema == kTaskSchema) {
    const TaskFile t = task_from_json(j);
    map_for_task(t);
    print({{"kind", "task"}, {"id", task_id(t.task)}, {"ok", true}});
    return 0;
  }
  if (schema == kTranscriptSchema) {
    const Transcript t = transcript_from(j);
    const ReplayResult r = replay(map_for_task(t.task), t);
    const bool ok = r.final_poses == t.final_poses && r.status == t.status && r.log_hash == t.log_hash;
    print({{"kind", "transcript"}, {"entries", t.entries.size()}, {"replays", ok}, {"ok", ok}});
    return ok ? 0 : 1;
  }
  if (schema == kDatasetSchema) return cmd_validate(fs::path(path).parent_path().string());
  throw Error(ErrorCode::schema_error, path + ": unrecognized schema '" + schema + "'");
}

int cmd_replay(const std::string& path) {
  const Transcript t = transcript_from(Json::parse(read_file(path)));
  const ReplayResult r = replay(map_for_task(t.task), t);
  Json poses = Json::array();
  for (const Pose& p : r.final_poses) poses.push_back(to_json(p));
  const bool ok = r.final_poses == t.final_poses && r.status == t.status && r.log_hash == t.log_hash;
  print({{"final_poses", poses}, {"status", status_name(r.status)}, {"log_hash", hex64(r.log_hash)}, {"matches", ok}});
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Headless urban embodied-agent simulator"};
  app.require_subcommand(1);
  app.fallthrough();
  Common c;
  app.add_option("--seed", c.seed, "Seed for every randomized stage")->capture_default_str();
  app.add_option("--difficulty", c.difficulty, "easy or hard map variant")
      ->check(CLI::IsMember({"easy", "hard"}))
      ->capture_default_str();
  app.add_option("--benchmark", c.benchmark, "mmnav or mrs")->check(CLI::IsMember({"mmnav", "mrs"}))->capture_default_str();

  std::function<int()> run;

  auto* gen = app.add_subcommand("generate", "Generate a city map from a spec");
  double area = 0;
  std::string spec_path, out;
  gen->add_option("--area", area, "Target area in km2");
  gen->add_option("--spec", spec_path, "CitySpec JSON file");
  gen->add_option("-o,--out", out, "Map file ('-' for stdout)");
  gen->callback([&] { run = [&] { return cmd_generate(c, area, spec_path, out); }; });

  auto* tasks = app.add_subcommand("gen-tasks", "Generate benchmark task files");
  std::string map_path;
  int count = 1;
  tasks->add_option("--map", map_path, "Map file (generated from --seed when absent)");
  tasks->add_option("-n,--count", count, "Number of tasks")->check(CLI::PositiveNumber)->capture_default_str();
  tasks->add_option("-o,--out", out, "Output directory")->required();
  tasks->callback([&] { run = [&] { return cmd_gen_tasks(c, map_path, count, out); }; });

  auto* sim = app.add_subcommand("simulate", "Run background traffic headlessly");
  std::int64_t ticks = 600;
  std::string dump;
  int every = 60;
  sim->add_option("--map", map_path, "Map file (generated from --seed when absent)");
  sim->add_option("--ticks", ticks, "World ticks to run")->check(CLI::NonNegativeNumber)->capture_default_str();
  sim->add_option("--dump", dump, "Write agent states as JSON lines");
  sim->add_option("--every", every, "Dump interval in ticks")->check(CLI::PositiveNumber)->capture_default_str();
  sim->callback([&] { run = [&] { return cmd_simulate(c, map_path, ticks, dump, every); }; });

  auto* serve = app.add_subcommand("serve", "Run the environment server");
  std::string config_path, mode, task_path;
  std::optional<int> port;
  bool generate_task_flag = false;
  serve->add_option("--config", config_path, "Server config JSON");
  serve->add_option("--port", port, "TCP port (0 picks one)");
  serve->add_option("--mode", mode, "fast or realtime")->check(CLI::IsMember({"fast", "realtime"}));
  serve->add_option("--task", task_path, "Task file to load at startup");
  serve->add_flag("--generate", generate_task_flag, "Start with a task generated from --seed/--benchmark/--difficulty");
  serve->callback([&] { run = [&] { return cmd_serve(c, config_path, port, mode, task_path, generate_task_flag); }; });

  auto* info = app.add_subcommand("info", "Print server defaults and protocol summary");
  info->add_option("--config", config_path, "Server config JSON");
  info->callback([&] { run = [&] { return cmd_info(config_path); }; });

  auto* rollout = app.add_subcommand("rollout-oracle", "Run the oracle agent on a task");
  std::string log, result, transcript;
  rollout->add_option("--task", task_path, "Task file (generated from --seed when absent)");
  rollout->add_option("--log", log, "Episode log output (JSON lines)");
  rollout->add_option("--result", result, "Episode result output");
  rollout->add_option("--transcript", transcript, "Replayable transcript output");
  rollout->callback([&] { run = [&] { return cmd_rollout(c, task_path, log, result, transcript); }; });

  auto* ex = app.add_subcommand("export-dataset", "Export oracle trajectories on training maps");
  DatasetConfig dc;
  bool validate = false;
  ex->add_option("--maps", dc.maps, "Training maps")->check(CLI::PositiveNumber)->capture_default_str();
  ex->add_option("--tasks-per-map", dc.tasks_per_map, "Tasks per map")->check(CLI::PositiveNumber)->capture_default_str();
  ex->add_option("--min-steps", dc.min_steps, "Minimum oracle steps per trajectory")->capture_default_str();
  ex->add_option("--threads", dc.threads, "Worker threads (0 = all cores)")->capture_default_str();
  ex->add_option("-o,--out", out, "Output directory")->required();
  ex->add_flag("--validate", validate, "Run the validator on the result");
  ex->callback([&] { run = [&] { return cmd_export(c, dc, out, validate); }; });

  auto* ev = app.add_subcommand("eval", "Aggregate episode results into a metrics report");
  std::vector<std::string> inputs;
  std::string json_out;
  ev->add_option("inputs", inputs, "Result files (JSON lines) or log directories")->required();
  ev->add_option("--json", json_out, "Also write machine-readable rows");
  ev->callback([&] { run = [&] { return cmd_eval(inputs, json_out); }; });

  auto* val = app.add_subcommand("validate", "Check a map, task, transcript or dataset");
  std::string target;
  val->add_option("path", target, "File or dataset directory")->required();
  val->callback([&] { run = [&] { return cmd_validate(target); }; });

  auto* rep = app.add_subcommand("replay", "Replay a transcript in fast mode");
  rep->add_option("transcript", target, "Transcript file")->required();
  rep->callback([&] { run = [&] { return cmd_replay(target); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  try {
    return run();
  } catch (const Error& e) {
    std::cerr << "citysim: " << error_code_name(e.code()) << ": " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "citysim: " << e.what() << "\n";
    return 2;
  }
}
