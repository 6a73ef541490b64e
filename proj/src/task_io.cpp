#include "citysim/task_io.hpp"

#include "json_fields.hpp"

namespace citysim {

using namespace detail;

namespace {

std::uint64_t parse_hex(const std::string& s) {
  try {
    std::size_t used = 0;
    const std::uint64_t v = std::stoull(s, &used, 16);
    if (used != s.size()) schema_fail("bad hex value: " + s);
    return v;
  } catch (const std::logic_error&) {
    schema_fail("bad hex value: " + s);
  }
}

template <class F>
auto guarded(const char* what, F&& f) {
  try {
    return f();
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    schema_fail(std::string("malformed ") + what + ": " + e.what());
  }
}

Turn turn_from(const std::string& s) {
  if (s == "left") return Turn::left;
  if (s == "right") return Turn::right;
  schema_fail("bad turn: " + s);
}

Json pid_json(const PidGains& g) { return Json::array({g.kp, g.ki, g.kd}); }

void read_pid(const Json& j, const char* key, PidGains& g) {
  auto it = j.find(key);
  if (it == j.end()) return;
  if (!it->is_array() || it->size() != 3) schema_fail(std::string("bad field '") + key + "': expected [kp, ki, kd]");
  g = {(*it)[0].get<double>(), (*it)[1].get<double>(), (*it)[2].get<double>()};
}

Json task_header(std::string_view kind, const std::string& id, const CitySpec& spec, std::uint64_t hash,
                 Difficulty d) {
  return {{"schema", kTaskSchema},
          {"version", kTaskVersion},
          {"kind", kind},
          {"id", id},
          {"map", {{"spec", to_json(spec)}, {"hash", hex64(hash)}}},
          {"difficulty", difficulty_name(d)}};
}

}  // namespace

Json to_json(const Pose& p) { return {{"position", vec_json(p.position)}, {"heading", p.heading}}; }

Pose pose_from(const Json& j) {
  return guarded("pose", [&] { return Pose{vec_from(field(j, "position")), get<double>(j, "heading")}; });
}

Json to_json(const Scan& s) {
  Json cls = Json::array();
  for (EntityClass c : s.cls) cls.push_back(entity_class_name(c));
  Json marks = Json::array();
  for (const VisibleLandmark& l : s.landmarks) {
    marks.push_back({{"building", l.building}, {"bearing", l.bearing}, {"range", l.range}});
  }
  return {{"pose", to_json(s.pose)}, {"view", look_name(s.view)}, {"depth", s.depth},
          {"class", cls},            {"ids", s.ids},                {"landmarks", marks}};
}

Scan scan_from(const Json& j) {
  return guarded("scan", [&] {
    Scan s;
    s.pose = pose_from(field(j, "pose"));
    s.view = look_from_name(get<std::string>(j, "view"));
    s.depth = get<std::vector<double>>(j, "depth");
    for (const Json& c : field(j, "class")) s.cls.push_back(entity_class_from_name(c.get<std::string>()));
    s.ids = get<std::vector<std::int64_t>>(j, "ids");
    for (const Json& l : field(j, "landmarks")) {
      s.landmarks.push_back({get<std::uint32_t>(l, "building"), get<double>(l, "bearing"), get<double>(l, "range")});
    }
    if (s.cls.size() != s.depth.size() || s.ids.size() != s.depth.size()) schema_fail("scan arrays differ in length");
    return s;
  });
}

Json to_json(const RobotAction& a) {
  Json j = {{"action", action_name(a.kind)}};
  if (a.kind == ActionKind::look) j["view"] = look_name(a.view);
  if (a.kind == ActionKind::send_message) j["text"] = a.text;
  return j;
}

RobotAction action_from(const Json& j) {
  return guarded("action", [&] {
    RobotAction a = RobotAction::of(action_from_name(get<std::string>(j, "action")));
    if (a.kind == ActionKind::look) {
      std::string v = "level";
      read_opt(j, "view", v);
      a.view = look_from_name(v);
    }
    if (a.kind == ActionKind::send_message) a.text = get<std::string>(j, "text");
    return a;
  });
}

Json to_json(const SafetyEvent& e) {
  return {{"kind", safety_name(e.kind)},
          {"tick", e.tick},
          {"agent", e.agent},
          {"other", entity_class_name(e.other)},
          {"other_id", e.other_id}};
}

SafetyEvent event_from(const Json& j) {
  return guarded("safety event", [&] {
    SafetyEvent e;
    e.kind = safety_from_name(get<std::string>(j, "kind"));
    e.tick = get<std::uint64_t>(j, "tick");
    e.agent = get<std::uint32_t>(j, "agent");
    e.other = entity_class_from_name(get<std::string>(j, "other"));
    e.other_id = get<std::int64_t>(j, "other_id");
    return e;
  });
}

Json to_json(const LogRecord& r) {
  Json events = Json::array();
  for (const SafetyEvent& e : r.events) events.push_back(to_json(e));
  return {{"tick", r.tick},     {"agent", r.agent}, {"action", to_json(r.action)}, {"outcome", r.outcome},
          {"events", events},   {"pose", to_json(r.pose)}, {"start", r.start},     {"end", r.end}};
}

LogRecord log_record_from(const Json& j) {
  return guarded("log record", [&] {
    LogRecord r;
    r.tick = get<std::uint64_t>(j, "tick");
    r.agent = get<std::uint32_t>(j, "agent");
    r.action = action_from(field(j, "action"));
    r.outcome = get<std::string>(j, "outcome");
    for (const Json& e : field(j, "events")) r.events.push_back(event_from(e));
    r.pose = pose_from(field(j, "pose"));
    r.start = get<std::int64_t>(j, "start");
    r.end = get<std::int64_t>(j, "end");
    return r;
  });
}

Json to_json(const EpisodeResult& r) {
  return {{"task", r.task},
          {"kind", task_kind_name(r.kind)},
          {"success", r.success},
          {"subtasks", r.subtasks},
          {"completed", r.completed},
          {"d0", r.d0},
          {"dT", r.dT},
          {"safety",
           {{"static", r.safety.static_collisions},
            {"dynamic", r.safety.dynamic_collisions},
            {"red_light", r.safety.red_light_violations}}},
          {"D0", r.D0},
          {"DT", r.DT},
          {"met", r.met},
          {"steps", r.steps}};
}

Json to_json(const MetricsReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? Json(*v) : Json(); };
  auto ci = [](const std::optional<Interval>& v) { return v ? Json::array({v->lower, v->upper}) : Json(); };
  return {{"model", r.model},
          {"mmnav_episodes", r.mmnav_episodes},
          {"mrs_episodes", r.mrs_episodes},
          {"sr", opt(r.sr)},
          {"sr_ci", ci(r.sr_ci)},
          {"ssr", opt(r.ssr)},
          {"dp", opt(r.dp)},
          {"mean_static", opt(r.mean_static)},
          {"mean_dynamic", opt(r.mean_dynamic)},
          {"mean_red_light", opt(r.mean_red_light)},
          {"csr", opt(r.csr)},
          {"csr_ci", ci(r.csr_ci)},
          {"tp", opt(r.tp)}};
}

EpisodeResult result_from(const Json& j) {
  return guarded("episode result", [&] {
    EpisodeResult r;
    r.task = get<std::string>(j, "task");
    r.kind = task_kind_from_name(get<std::string>(j, "kind"));
    r.success = get<bool>(j, "success");
    read_opt(j, "subtasks", r.subtasks);
    read_opt(j, "completed", r.completed);
    read_opt(j, "d0", r.d0);
    read_opt(j, "dT", r.dT);
    if (auto it = j.find("safety"); it != j.end()) {
      read_opt(*it, "static", r.safety.static_collisions);
      read_opt(*it, "dynamic", r.safety.dynamic_collisions);
      read_opt(*it, "red_light", r.safety.red_light_violations);
    }
    read_opt(j, "D0", r.D0);
    read_opt(j, "DT", r.DT);
    read_opt(j, "met", r.met);
    read_opt(j, "steps", r.steps);
    if (r.completed < 0 || r.completed > r.subtasks || r.d0 < 0 || r.dT < 0 || r.D0 < 0 || r.DT < 0) {
      schema_fail("episode result " + r.task + " has out-of-range counts or distances");
    }
    return r;
  });
}

Json to_json(const Subtask& s) {
  return {{"kind", subtask_name(s.kind)},
          {"instruction", s.instruction},
          {"goal",
           {{"pose", to_json(s.goal.pose)},
            {"position_tolerance", s.goal.position_tolerance},
            {"heading_tolerance", s.goal.heading_tolerance}}},
          {"hint", to_json(s.hint)},
          {"landmark", s.landmark ? Json(*s.landmark) : Json(nullptr)},
          {"landmark_description", s.landmark_description},
          {"side", side_name(s.side)},
          {"turn", s.turn == Turn::left ? "left" : "right"},
          {"at_intersection", s.at_intersection}};
}

Subtask subtask_from(const Json& j) {
  return guarded("subtask", [&] {
    Subtask s;
    s.kind = subtask_from_name(get<std::string>(j, "kind"));
    s.instruction = get<std::string>(j, "instruction");
    const Json& g = field(j, "goal");
    s.goal.pose = pose_from(field(g, "pose"));
    s.goal.position_tolerance = get<double>(g, "position_tolerance");
    s.goal.heading_tolerance = get<double>(g, "heading_tolerance");
    s.hint = scan_from(field(j, "hint"));
    if (const Json& l = field(j, "landmark"); !l.is_null()) s.landmark = l.get<std::uint32_t>();
    s.landmark_description = get<std::string>(j, "landmark_description");
    s.side = side_from_name(get<std::string>(j, "side"));
    s.turn = turn_from(get<std::string>(j, "turn"));
    s.at_intersection = get<bool>(j, "at_intersection");
    return s;
  });
}

Json to_json(const MemoryEntry& e) {
  return {{"landmark", e.landmark},       {"street", e.street},  {"pose", to_json(e.pose)},
          {"description", e.description}, {"hint", to_json(e.hint)}};
}

MemoryEntry memory_entry_from(const Json& j) {
  return guarded("memory entry", [&] {
    MemoryEntry e;
    e.landmark = get<std::uint32_t>(j, "landmark");
    e.street = get<std::uint32_t>(j, "street");
    e.pose = pose_from(field(j, "pose"));
    e.description = get<std::string>(j, "description");
    e.hint = scan_from(field(j, "hint"));
    return e;
  });
}

Json to_json(const MMNavTask& t, std::uint64_t hash) {
  Json j = task_header("mmnav", t.id, t.spec, hash, t.difficulty);
  j["start"] = to_json(t.start);
  j["start_building"] = t.start_building;
  j["goal_building"] = t.goal_building;
  Json subtasks = Json::array();
  for (const Subtask& s : t.subtasks) subtasks.push_back(to_json(s));
  j["subtasks"] = subtasks;
  j["path_nodes"] = t.path_nodes;
  Json path = Json::array(), corners = Json::array();
  for (Vec2 p : t.path) path.push_back(vec_json(p));
  for (Vec2 p : t.corners) corners.push_back(vec_json(p));
  j["path"] = path;
  j["corners"] = corners;
  j["path_length"] = t.path_length;
  j["step_budget"] = t.step_budget;
  return j;
}

Json to_json(const MRSTask& t, std::uint64_t hash) {
  Json j = task_header("mrs", t.id, t.spec, hash, t.difficulty);
  Json memory = Json::array();
  for (const MemoryEntry& e : t.memory.entries) memory.push_back(to_json(e));
  j["memory"] = memory;
  j["spawn_main"] = to_json(t.spawn_main);
  j["spawn_follower"] = to_json(t.spawn_follower);
  j["node_main"] = t.node_main;
  j["node_follower"] = t.node_follower;
  j["oracle_distance"] = t.oracle_distance;
  j["step_budget"] = t.step_budget;
  return j;
}

TaskFile task_from_json(const Json& j) {
  return guarded("task", [&] {
    if (get<std::string>(j, "schema") != kTaskSchema) schema_fail("not a task file");
    if (get<int>(j, "version") != kTaskVersion) schema_fail("unsupported task version");
    TaskFile f;
    const Json& map = field(j, "map");
    f.map_hash = parse_hex(get<std::string>(map, "hash"));
    const std::string kind = get<std::string>(j, "kind");
    if (kind == "mmnav") {
      MMNavTask t;
      t.id = get<std::string>(j, "id");
      t.spec = spec_from_json(field(map, "spec"));
      t.difficulty = difficulty_from_name(get<std::string>(j, "difficulty"));
      t.start = pose_from(field(j, "start"));
      t.start_building = get<std::uint32_t>(j, "start_building");
      t.goal_building = get<std::uint32_t>(j, "goal_building");
      for (const Json& s : field(j, "subtasks")) t.subtasks.push_back(subtask_from(s));
      if (t.subtasks.empty()) schema_fail("task has no subtasks");
      t.path_nodes = get<std::vector<std::uint32_t>>(j, "path_nodes");
      for (const Json& p : field(j, "path")) t.path.push_back(vec_from(p));
      for (const Json& p : field(j, "corners")) t.corners.push_back(vec_from(p));
      t.path_length = get<double>(j, "path_length");
      t.step_budget = get<int>(j, "step_budget");
      f.task = std::move(t);
    } else if (kind == "mrs") {
      MRSTask t;
      t.id = get<std::string>(j, "id");
      t.spec = spec_from_json(field(map, "spec"));
      t.difficulty = difficulty_from_name(get<std::string>(j, "difficulty"));
      for (const Json& e : field(j, "memory")) t.memory.entries.push_back(memory_entry_from(e));
      t.spawn_main = pose_from(field(j, "spawn_main"));
      t.spawn_follower = pose_from(field(j, "spawn_follower"));
      t.node_main = get<std::uint32_t>(j, "node_main");
      t.node_follower = get<std::uint32_t>(j, "node_follower");
      t.oracle_distance = get<double>(j, "oracle_distance");
      t.step_budget = get<int>(j, "step_budget");
      f.task = std::move(t);
    } else {
      schema_fail("unknown task kind: " + kind);
    }
    return f;
  });
}

void save_task(const AnyTask& task, std::uint64_t hash, const std::filesystem::path& path) {
  const Json j = std::visit([&](const auto& t) { return to_json(t, hash); }, task);
  write_file(path, j.dump() + "\n");
}

TaskFile load_task(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    schema_fail(path.string() + " is not valid JSON: " + e.what());
  }
  return task_from_json(j);
}

CityMap map_for_task(const TaskFile& f) {
  const CitySpec& spec = std::visit([](const auto& t) -> const CitySpec& { return t.spec; }, f.task);
  CityMap map = generate_city(spec);
  if (map_hash(map) != f.map_hash) {
    schema_fail("task map hash " + hex64(f.map_hash) + " does not match the regenerated map " + hex64(map_hash(map)));
  }
  return map;
}

Json to_json(const EnvConfig& c) {
  const TrafficConfig& t = c.traffic;
  return {{"robot_radius", c.robot_radius},
          {"step_length", c.step_length},
          {"translate_duration", c.translate_duration},
          {"rotate_duration", c.rotate_duration},
          {"stay_duration", c.stay_duration},
          {"poll_interval", c.poll_interval},
          {"ray_count", c.ray_count},
          {"fov", c.fov},
          {"ray_range", c.ray_range},
          {"ground_range", c.ground_range},
          {"max_message", c.max_message},
          {"traffic",
           {{"dt", t.dt},
            {"green", t.green},
            {"proceed_threshold", t.proceed_threshold},
            {"cruise_speed", t.cruise_speed},
            {"max_speed", t.max_speed},
            {"turn_speed", t.turn_speed},
            {"max_accel", t.max_accel},
            {"max_decel", t.max_decel},
            {"brake_decel", t.brake_decel},
            {"speed_pid", pid_json(t.speed_pid)},
            {"heading_pid", pid_json(t.heading_pid)},
            {"max_turn_rate", t.max_turn_rate},
            {"arrival_radius", t.arrival_radius},
            {"lane_offset", t.lane_offset},
            {"stop_offset", t.stop_offset},
            {"commit_margin", t.commit_margin},
            {"walk_speed", t.walk_speed},
            {"pedestrian_turn_rate", t.pedestrian_turn_rate},
            {"pedestrian_arrival", t.pedestrian_arrival},
            {"route_hops", t.route_hops},
            {"weights",
             {{"straight", t.weights.straight},
              {"left", t.weights.left},
              {"right", t.weights.right},
              {"reverse", t.weights.reverse}}},
            {"vehicle_radius", t.vehicle_radius},
            {"pedestrian_radius", t.pedestrian_radius}}}};
}

EnvConfig env_config_from(const Json& j, EnvConfig c) {
  if (!j.is_object()) schema_fail("config must be an object");
  read_opt(j, "robot_radius", c.robot_radius);
  read_opt(j, "step_length", c.step_length);
  read_opt(j, "translate_duration", c.translate_duration);
  read_opt(j, "rotate_duration", c.rotate_duration);
  read_opt(j, "stay_duration", c.stay_duration);
  read_opt(j, "poll_interval", c.poll_interval);
  read_opt(j, "ray_count", c.ray_count);
  read_opt(j, "fov", c.fov);
  read_opt(j, "ray_range", c.ray_range);
  read_opt(j, "ground_range", c.ground_range);
  read_opt(j, "max_message", c.max_message);
  if (auto it = j.find("traffic"); it != j.end()) {
    const Json& t = *it;
    TrafficConfig& x = c.traffic;
    read_opt(t, "dt", x.dt);
    read_opt(t, "green", x.green);
    read_opt(t, "proceed_threshold", x.proceed_threshold);
    read_opt(t, "cruise_speed", x.cruise_speed);
    read_opt(t, "max_speed", x.max_speed);
    read_opt(t, "turn_speed", x.turn_speed);
    read_opt(t, "max_accel", x.max_accel);
    read_opt(t, "max_decel", x.max_decel);
    read_opt(t, "brake_decel", x.brake_decel);
    read_pid(t, "speed_pid", x.speed_pid);
    read_pid(t, "heading_pid", x.heading_pid);
    read_opt(t, "max_turn_rate", x.max_turn_rate);
    read_opt(t, "arrival_radius", x.arrival_radius);
    read_opt(t, "lane_offset", x.lane_offset);
    read_opt(t, "stop_offset", x.stop_offset);
    read_opt(t, "commit_margin", x.commit_margin);
    read_opt(t, "walk_speed", x.walk_speed);
    read_opt(t, "pedestrian_turn_rate", x.pedestrian_turn_rate);
    read_opt(t, "pedestrian_arrival", x.pedestrian_arrival);
    read_opt(t, "route_hops", x.route_hops);
    if (auto w = t.find("weights"); w != t.end()) {
      read_opt(*w, "straight", x.weights.straight);
      read_opt(*w, "left", x.weights.left);
      read_opt(*w, "right", x.weights.right);
      read_opt(*w, "reverse", x.weights.reverse);
    }
    read_opt(t, "vehicle_radius", x.vehicle_radius);
    read_opt(t, "pedestrian_radius", x.pedestrian_radius);
  }
  return c;
}

Json to_json(const Transcript& t) {
  Json entries = Json::array();
  for (const TranscriptEntry& e : t.entries) entries.push_back({{"poll", e.poll}, {"agent", e.agent}, {"action", to_json(e.action)}});
  Json poses = Json::array();
  for (const Pose& p : t.final_poses) poses.push_back(to_json(p));
  return {{"schema", kTranscriptSchema},
          {"version", kTaskVersion},
          {"task", std::visit([&](const auto& x) { return to_json(x, t.task.map_hash); }, t.task.task)},
          {"config", to_json(t.config)},
          {"entries", entries},
          {"final_poses", poses},
          {"status", status_name(t.status)},
          {"log_hash", hex64(t.log_hash)}};
}

Transcript transcript_from(const Json& j) {
  return guarded("transcript", [&] {
    if (get<std::string>(j, "schema") != kTranscriptSchema) schema_fail("not a transcript");
    Transcript t;
    t.task = task_from_json(field(j, "task"));
    t.config = env_config_from(field(j, "config"));
    std::int64_t last = 0;
    for (const Json& e : field(j, "entries")) {
      TranscriptEntry x{get<std::int64_t>(e, "poll"), get<std::uint32_t>(e, "agent"), action_from(field(e, "action"))};
      if (x.poll < last) schema_fail("transcript entries must be in poll order");
      last = x.poll;
      t.entries.push_back(std::move(x));
    }
    for (const Json& p : field(j, "final_poses")) t.final_poses.push_back(pose_from(p));
    const std::string status = get<std::string>(j, "status");
    if (status == "running") t.status = EpisodeStatus::running;
    else if (status == "success") t.status = EpisodeStatus::success;
    else if (status == "failure") t.status = EpisodeStatus::failure;
    else schema_fail("bad status: " + status);
    t.log_hash = parse_hex(get<std::string>(j, "log_hash"));
    return t;
  });
}

std::uint64_t log_hash(const std::vector<LogRecord>& log) {
  std::uint64_t h = fnv1a(nullptr, 0);
  for (const LogRecord& r : log) {
    const std::string line = to_json(r).dump() + "\n";
    h = fnv1a(line.data(), line.size(), h);
  }
  return h;
}

AnyTask generate_task(const World& world, TaskKind kind, Rng& rng, Difficulty difficulty) {
  if (kind == TaskKind::mmnav) return generate_mmnav_task(world, rng, difficulty);
  return generate_mrs_task(world, rng, difficulty);
}

std::unique_ptr<Episode> make_episode(const CityMap& map, const AnyTask& task, const EnvConfig& config) {
  return std::visit([&](const auto& t) { return std::make_unique<Episode>(map, t, config); }, task);
}

ReplayResult replay(const CityMap& map, const Transcript& t) {
  auto ep = make_episode(map, t.task.task, t.config);
  for (const TranscriptEntry& e : t.entries) {
    while (ep->buffer().polls() < e.poll) ep->poll();
    ep->submit(e.agent, e.action);
  }
  while (!ep->buffer().idle()) ep->poll();
  ReplayResult r;
  for (std::uint32_t a = 0; a < ep->agents(); ++a) r.final_poses.push_back(ep->world().robot(a).pose);
  r.status = ep->status();
  r.log = ep->log();
  r.log_hash = log_hash(r.log);
  return r;
}

}  // namespace citysim
