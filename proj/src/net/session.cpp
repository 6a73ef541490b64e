#include <chrono>
#include <cstdlib>

#include "citysim/error.hpp"
#include "citysim/server.hpp"
#include "../json_fields.hpp"

namespace citysim {

using namespace detail;

namespace {

[[noreturn]] void bad_request(const std::string& what) { throw Error(ErrorCode::bad_request, what); }

[[noreturn]] void config_fail(const std::string& what) { throw Error(ErrorCode::config_error, what); }

Json error_response(ErrorCode code, const std::string& message) {
  return {{"status", "error"}, {"error", {{"code", error_code_name(code)}, {"message", message}}}};
}

double parse_number(const char* name, const char* text) {
  char* end = nullptr;
  const double v = std::strtod(text, &end);
  if (end == text || *end != '\0') config_fail(std::string(name) + " is not a number: " + text);
  return v;
}

void check(const ServerConfig& c) {
  if (c.port < 0 || c.port > 65535) config_fail("port out of range: " + std::to_string(c.port));
  if (!(c.tick_rate > 0.0)) config_fail("tick_rate must be positive");
  if (c.position_tolerance && !(*c.position_tolerance > 0.0)) config_fail("position_tolerance must be positive");
  if (c.heading_tolerance && !(*c.heading_tolerance > 0.0 && *c.heading_tolerance <= 180.0)) {
    config_fail("heading_tolerance must be in (0, 180]");
  }
  if (c.max_line < 64) config_fail("max_line too small");
}

Json messages_json(std::vector<Message> in) {
  Json out = Json::array();
  for (const Message& m : in) out.push_back({{"from", m.from}, {"text", m.text}, {"tick", m.tick}});
  return out;
}

Json poses_json(const std::vector<Pose>& poses) {
  Json out = Json::array();
  for (const Pose& p : poses) out.push_back(to_json(p));
  return out;
}

}  // namespace

std::string_view clock_mode_name(ClockMode m) { return m == ClockMode::fast ? "fast" : "realtime"; }

ClockMode clock_mode_from_name(std::string_view s) {
  if (s == "fast") return ClockMode::fast;
  if (s == "realtime") return ClockMode::realtime;
  config_fail("unknown clock mode '" + std::string(s) + "'");
}

Json to_json(const ServerConfig& c) {
  Json j = {{"host", c.host},
            {"port", c.port},
            {"mode", clock_mode_name(c.mode)},
            {"tick_rate", c.tick_rate},
            {"position_tolerance", c.position_tolerance ? Json(*c.position_tolerance) : Json()},
            {"heading_tolerance", c.heading_tolerance ? Json(*c.heading_tolerance) : Json()},
            {"map", c.map.string()},
            {"task", c.task.string()},
            {"log_dir", c.log_dir.string()},
            {"max_line", c.max_line},
            {"env", to_json(c.env)}};
  return j;
}

ServerConfig server_config_from(const Json& j, ServerConfig c) {
  try {
    if (!j.is_object()) config_fail("server config must be an object");
    read_opt(j, "host", c.host);
    read_opt(j, "port", c.port);
    if (auto it = j.find("mode"); it != j.end()) c.mode = clock_mode_from_name(it->get<std::string>());
    read_opt(j, "tick_rate", c.tick_rate);
    for (auto [key, out] : {std::pair{"position_tolerance", &c.position_tolerance},
                            std::pair{"heading_tolerance", &c.heading_tolerance}}) {
      if (auto it = j.find(key); it != j.end()) *out = it->is_null() ? std::nullopt : std::optional(it->get<double>());
    }
    if (auto it = j.find("map"); it != j.end()) c.map = it->get<std::string>();
    if (auto it = j.find("task"); it != j.end()) c.task = it->get<std::string>();
    if (auto it = j.find("log_dir"); it != j.end()) c.log_dir = it->get<std::string>();
    read_opt(j, "max_line", c.max_line);
    if (auto it = j.find("env"); it != j.end()) c.env = env_config_from(*it, c.env);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::config_error) throw;
    config_fail(e.what());
  } catch (const std::exception& e) {
    config_fail(std::string("bad server config: ") + e.what());
  }
  check(c);
  return c;
}

ServerConfig load_server_config(const std::optional<std::filesystem::path>& file, const EnvLookup& env) {
  ServerConfig c;
  if (file) {
    Json j;
    try {
      j = Json::parse(read_file(*file));
    } catch (const Json::exception& e) {
      config_fail(file->string() + ": " + e.what());
    } catch (const Error& e) {
      config_fail(e.what());
    }
    c = server_config_from(j, c);
  }
  if (const char* v = env("CITYSIM_HOST")) c.host = v;
  if (const char* v = env("CITYSIM_PORT")) c.port = static_cast<int>(parse_number("CITYSIM_PORT", v));
  if (const char* v = env("CITYSIM_MODE")) c.mode = clock_mode_from_name(v);
  if (const char* v = env("CITYSIM_TICK_RATE")) c.tick_rate = parse_number("CITYSIM_TICK_RATE", v);
  if (const char* v = env("CITYSIM_POSITION_TOLERANCE")) {
    c.position_tolerance = parse_number("CITYSIM_POSITION_TOLERANCE", v);
  }
  if (const char* v = env("CITYSIM_HEADING_TOLERANCE")) {
    c.heading_tolerance = parse_number("CITYSIM_HEADING_TOLERANCE", v);
  }
  if (const char* v = env("CITYSIM_MAP")) c.map = v;
  if (const char* v = env("CITYSIM_TASK")) c.task = v;
  if (const char* v = env("CITYSIM_LOG_DIR")) c.log_dir = v;
  check(c);
  return c;
}

Session::Session(ServerConfig config) : config_(std::move(config)) {
  check(config_);
  if (!config_.task.empty()) {
    TaskFile t = load_task(config_.task);
    std::optional<CityMap> map;
    if (!config_.map.empty()) map = load_map(config_.map);
    load(std::move(t), std::move(map));
  }
}

Session::~Session() { stop_clock(); }

void Session::start_clock() {
  if (config_.mode != ClockMode::realtime || clock_.joinable()) return;
  stopping_ = false;
  clock_ = std::thread([this] { clock_loop(); });
}

void Session::stop_clock() {
  {
    std::lock_guard lock(m_);
    stopping_ = true;
  }
  changed_.notify_all();
  if (clock_.joinable()) clock_.join();
}

void Session::clock_loop() {
  using clock = std::chrono::steady_clock;
  // One buffer poll per poll interval of simulated time, scaled so the world
  // advances tick_rate ticks per wall second.
  const double sim_per_wall = config_.tick_rate * config_.env.traffic.dt;
  const auto period = std::chrono::duration_cast<clock::duration>(
      std::chrono::duration<double>(config_.env.poll_interval / sim_per_wall));
  auto next = clock::now();
  Lock lock(m_);
  while (!stopping_) {
    next += period;
    if (changed_.wait_until(lock, next, [&] { return stopping_; })) break;
    if (ep_ && !ep_->done()) poll_once();
    if (clock::now() > next + 50 * period) next = clock::now();  // fell far behind: do not spiral
  }
}

void Session::load(TaskFile task, std::optional<CityMap> map) {
  if (map) {
    if (map_hash(*map) != task.map_hash) bad_request("map does not match the task's map hash");
  } else {
    map = map_for_task(task);
  }
  std::visit(
      [&](auto& t) {
        if constexpr (std::is_same_v<std::decay_t<decltype(t)>, MMNavTask>) {
          for (Subtask& s : t.subtasks) {
            if (config_.position_tolerance) s.goal.position_tolerance = *config_.position_tolerance;
            if (config_.heading_tolerance) s.goal.heading_tolerance = *config_.heading_tolerance;
          }
        }
      },
      task.task);
  ep_.reset();
  map_ = std::make_unique<CityMap>(std::move(*map));
  task_ = std::move(task);
  restart();
}

void Session::restart() {
  ep_ = make_episode(*map_, task_->task, config_.env);
  ++serial_;
  entries_.clear();
  completed_.assign(ep_->agents(), 0);
  last_.assign(ep_->agents(), std::nullopt);
  flushed_ = false;
  changed_.notify_all();
}

Episode& Session::episode() {
  if (!ep_) bad_request("no task loaded; send reset with a task first");
  return *ep_;
}

std::uint32_t Session::agent_of(const Json& req) const {
  auto it = req.find("agent");
  if (it == req.end()) return 0;
  if (!it->is_number_integer() || it->get<std::int64_t>() < 0) bad_request("agent must be a non-negative integer");
  const auto a = it->get<std::int64_t>();
  if (!ep_ || a >= static_cast<std::int64_t>(ep_->agents())) {
    throw Error(ErrorCode::unknown_agent, "no agent " + std::to_string(a));
  }
  return static_cast<std::uint32_t>(a);
}

void Session::submit(std::uint32_t agent, const RobotAction& action) {
  Episode& ep = episode();
  const std::int64_t poll = ep.buffer().polls();
  ep.submit(agent, action);
  entries_.push_back({poll, agent, action});
}

void Session::poll_once() {
  for (LogRecord& r : ep_->poll()) {
    ++completed_[r.agent];
    last_[r.agent] = std::move(r);
  }
  if (ep_->done()) flush_log();
  changed_.notify_all();
}

void Session::flush_log() {
  if (flushed_ || config_.log_dir.empty()) return;
  flushed_ = true;
  std::string text;
  for (const LogRecord& r : ep_->log()) text += to_json(r).dump() + "\n";
  std::error_code ec;
  std::filesystem::create_directories(config_.log_dir, ec);
  const std::string id = std::visit([](const auto& t) { return t.id; }, task_->task);
  write_file(config_.log_dir / (id + "-" + std::to_string(serial_) + ".jsonl"), text);
  write_file(config_.log_dir / (id + "-" + std::to_string(serial_) + ".result.json"),
             to_json(ep_->result()).dump() + "\n");
}

std::string Session::status_text() const {
  switch (ep_->status()) {
    case EpisodeStatus::running: return "ok";
    case EpisodeStatus::success: return "episode_success";
    case EpisodeStatus::failure: return "episode_failed";
  }
  return "ok";
}

Json Session::agent_payload(std::uint32_t agent) const {
  Json j = {{"agent", agent}, {"agents", ep_->agents()}, {"pose", to_json(ep_->world().robot(agent).pose)}};
  if (const MMNavTask* t = ep_->mmnav()) {
    j["subtasks"] = t->subtasks.size();
    j["subtask"] = ep_->current_subtask();
    if (const Subtask* s = ep_->current()) {
      j["instruction"] = s->instruction;
      j["hint"] = to_json(s->hint);
      j["tolerance"] = {{"position", s->goal.position_tolerance}, {"heading", s->goal.heading_tolerance}};
    }
    j["step_budget"] = t->step_budget;
  } else if (const MRSTask* t = ep_->mrs()) {
    // The landmark memory is the main robot's prior only.
    if (agent == 0) {
      Json mem = Json::array();
      for (const MemoryEntry& e : t->memory.entries) mem.push_back(to_json(e));
      j["memory"] = std::move(mem);
    }
    j["role"] = agent == 0 ? "main" : "follower";
    j["step_budget"] = t->step_budget;
  }
  return j;
}

Json Session::completion_payload(const LogRecord& r) {
  Json j = {{"status", status_text()}, {"record", to_json(r)}};
  j["observation"] = to_json(ep_->world().observe(r.agent));
  j["messages"] = messages_json(ep_->take_messages(r.agent));
  if (ep_->mmnav()) {
    j["subtask"] = ep_->current_subtask();
    // A successful evaluate hands over the next subtask.
    if (r.action.kind == ActionKind::evaluate && r.outcome == "success") {
      if (const Subtask* s = ep_->current()) {
        j["instruction"] = s->instruction;
        j["hint"] = to_json(s->hint);
      }
    }
  }
  if (ep_->done()) j["result"] = to_json(ep_->result());
  return j;
}

Json Session::handle_line(std::string_view line) {
  Json req;
  try {
    req = Json::parse(line);
  } catch (const Json::exception& e) {
    return error_response(ErrorCode::bad_request, std::string("malformed request: ") + e.what());
  }
  return handle(req);
}

Json Session::handle(const Json& req) {
  Json id;
  if (req.is_object()) {
    if (auto it = req.find("id"); it != req.end()) id = *it;
  }
  Json resp;
  try {
    if (!req.is_object()) bad_request("request must be an object");
    auto it = req.find("op");
    if (it == req.end() || !it->is_string()) bad_request("request needs a string 'op'");
    Lock lock(m_);
    resp = dispatch(it->get<std::string>(), req, lock);
  } catch (const Error& e) {
    resp = error_response(e.code(), e.what());
  } catch (const Json::exception& e) {
    resp = error_response(ErrorCode::bad_request, e.what());
  } catch (const std::exception& e) {
    resp = error_response(ErrorCode::bad_request, e.what());
  }
  if (!id.is_null()) resp["id"] = id;
  return resp;
}

Json Session::dispatch(const std::string& op, const Json& req, Lock& lock) {
  if (op == "info") return op_info();
  if (op == "reset") return op_reset(req);
  if (op == "replay") return op_replay(req);
  if (op == "map") {
    if (!map_) bad_request("no map loaded");
    return {{"status", "ok"}, {"map", to_json(*map_)}, {"hash", hex64(map_hash(*map_))}};
  }
  episode();
  if (op == "observe") return op_observe(agent_of(req));
  if (op == "snapshot") return op_snapshot();
  if (op == "transcript") return op_transcript(req);
  if (op == "tick") return op_tick(req);
  if (op == "wait") return op_wait(agent_of(req), lock);
  if (op == "task") return {{"status", status_text()}, {"task", agent_payload(agent_of(req))}};
  if (op == "step" || op == "submit") {
    auto it = req.find("action");
    if (it == req.end()) bad_request(op + " needs an action");
    const RobotAction a = action_from(*it);
    const std::uint32_t agent = agent_of(req);
    return op == "step" ? op_step(agent, a, lock) : op_submit(agent, a);
  }
  if (op == "send_message") {
    auto it = req.find("text");
    if (it == req.end() || !it->is_string()) bad_request("send_message needs a string 'text'");
    return op_step(agent_of(req), RobotAction{ActionKind::send_message, LookView::level, it->get<std::string>()}, lock);
  }
  if (op == "evaluate") return op_step(agent_of(req), RobotAction::of(ActionKind::evaluate), lock);
  if (op == "check_task_complete") {
    return op_step(agent_of(req), RobotAction::of(ActionKind::check_task_complete), lock);
  }
  throw Error(ErrorCode::unknown_op, "unknown op '" + op + "'");
}

Json Session::op_reset(const Json& req) {
  // Everything is parsed and checked before the session changes.
  std::optional<TaskFile> next;
  std::optional<CityMap> map;
  if (auto it = req.find("task"); it != req.end()) {
    next = task_from_json(*it);
  } else if (auto p = req.find("path"); p != req.end()) {
    next = load_task(p->get<std::string>());
  } else if (auto g = req.find("generate"); g != req.end()) {
    const auto seed = g->value("seed", std::uint64_t{1});
    const Difficulty d = difficulty_from_name(g->value("difficulty", std::string("easy")));
    const TaskKind kind = task_kind_from_name(g->value("benchmark", std::string("mmnav")));
    CitySpec spec;
    spec.seed = seed;
    map = generate_city(variant_for(spec, d));
    const World w(*map);
    Rng rng(derive_seed(seed, Stream::tasks));
    next = TaskFile{generate_task(w, kind, rng, d), map_hash(*map)};
  } else if (!task_) {
    bad_request("no task loaded; reset needs 'task', 'path' or 'generate'");
  }
  const std::size_t agents = std::holds_alternative<MRSTask>(next ? next->task : task_->task) ? 2 : 1;
  std::uint32_t agent = 0;
  if (auto it = req.find("agent"); it != req.end()) {
    if (!it->is_number_integer() || it->get<std::int64_t>() < 0) bad_request("agent must be a non-negative integer");
    if (it->get<std::int64_t>() >= static_cast<std::int64_t>(agents)) {
      throw Error(ErrorCode::unknown_agent, "no agent " + std::to_string(it->get<std::int64_t>()));
    }
    agent = it->get<std::uint32_t>();
  }
  if (next) {
    load(std::move(*next), std::move(map));
  } else {
    restart();
  }
  Json j = {{"status", "ok"}, {"episode", serial_}, {"task", agent_payload(agent)}};
  j["observation"] = to_json(ep_->world().observe(agent));
  return j;
}

Json Session::op_observe(std::uint32_t agent) {
  return {{"status", status_text()},
          {"tick", ep_->world().tick()},
          {"busy", !ep_->buffer().available(agent)},
          {"observation", to_json(ep_->world().observe(agent))},
          {"messages", messages_json(ep_->take_messages(agent))}};
}

Json Session::op_submit(std::uint32_t agent, const RobotAction& action) {
  submit(agent, action);
  return {{"status", "ok"}, {"poll", ep_->buffer().polls()}};
}

Json Session::op_step(std::uint32_t agent, const RobotAction& action, Lock& lock) {
  const std::uint64_t serial = serial_;
  const std::uint64_t before = completed_[agent];
  submit(agent, action);
  if (config_.mode == ClockMode::fast) {
    while (completed_[agent] == before) poll_once();
  } else {
    start_clock();
    changed_.wait(lock, [&] { return stopping_ || serial_ != serial || completed_[agent] != before; });
    if (serial_ != serial) bad_request("episode was reset before the action completed");
    if (completed_[agent] == before) bad_request("server is shutting down");
  }
  return completion_payload(*last_[agent]);
}

Json Session::op_wait(std::uint32_t agent, Lock& lock) {
  const std::uint64_t serial = serial_;
  if (config_.mode == ClockMode::fast) {
    while (!ep_->buffer().available(agent)) poll_once();
  } else {
    changed_.wait(lock, [&] { return stopping_ || serial_ != serial || ep_->buffer().available(agent); });
    if (serial_ != serial) bad_request("episode was reset while waiting");
  }
  if (!last_[agent]) return {{"status", status_text()}, {"record", nullptr}};
  return completion_payload(*last_[agent]);
}

Json Session::op_tick(const Json& req) {
  if (config_.mode != ClockMode::fast) bad_request("tick is only available in fast mode");
  const auto count = req.value("count", std::int64_t{1});
  if (count < 1 || count > 1000000) bad_request("count must be in [1, 1000000]");
  Json records = Json::array();
  for (std::int64_t i = 0; i < count && !ep_->done(); ++i) {
    const auto before = completed_;
    poll_once();
    for (std::uint32_t a = 0; a < completed_.size(); ++a) {
      if (completed_[a] != before[a]) records.push_back(to_json(*last_[a]));
    }
  }
  return {{"status", status_text()}, {"poll", ep_->buffer().polls()}, {"tick", ep_->world().tick()},
          {"records", std::move(records)}};
}

Json Session::op_info() const {
  Json ops = {"info",   "reset",  "task",  "observe",    "step",       "submit", "tick", "wait", "send_message",
              "evaluate", "check_task_complete", "snapshot", "map", "transcript", "replay"};
  Json errors = Json::array();
  for (int c = 0; c <= static_cast<int>(ErrorCode::export_error); ++c) {
    errors.push_back(error_code_name(static_cast<ErrorCode>(c)));
  }
  Json j = {{"status", "ok"}, {"name", "citysim"}, {"protocol", 1}, {"config", to_json(config_)},
            {"defaults", to_json(ServerConfig{})}, {"ops", ops}, {"errors", errors}};
  j["actions"] = Json::array();
  for (int k = 0; k <= static_cast<int>(ActionKind::check_task_complete); ++k) {
    j["actions"].push_back(action_name(static_cast<ActionKind>(k)));
  }
  if (task_) {
    j["task"] = std::visit([](const auto& t) { return t.id; }, task_->task);
    j["episode"] = serial_;
  }
  return j;
}

Json Session::op_snapshot() const {
  const World& w = ep_->world();
  const TrafficSim& t = w.traffic();
  Json robots = Json::array();
  for (std::uint32_t a = 0; a < w.robot_count(); ++a) {
    const Robot& r = w.robot(a);
    robots.push_back({{"id", a},
                      {"pose", to_json(r.pose)},
                      {"view", look_name(r.view)},
                      {"busy", !ep_->buffer().available(a)}});
  }
  Json vehicles = Json::array();
  for (const VehicleAgent& v : t.vehicles()) {
    vehicles.push_back({{"id", v.id}, {"pose", to_json(v.pose)}, {"speed", v.speed}});
  }
  Json peds = Json::array();
  for (const PedestrianAgent& p : t.pedestrians()) {
    peds.push_back({{"id", p.id}, {"pose", to_json(p.pose)}, {"holding", p.holding}});
  }
  Json lights = Json::array();
  for (const TrafficLight& l : t.lights()) {
    lights.push_back({{"intersection", l.intersection},
                      {"green_axis", axis_name(l.green_axis)},
                      {"remaining", l.remaining},
                      {"ns", signal_gate(l, Axis::NS, t.config().proceed_threshold) == GateVerdict::proceed ? "proceed" : "wait"},
                      {"ew", signal_gate(l, Axis::EW, t.config().proceed_threshold) == GateVerdict::proceed ? "proceed" : "wait"}});
  }
  Json j = {{"status", status_text()}, {"episode", serial_},  {"tick", w.tick()},       {"time", w.traffic().clock().time()},
            {"poll", ep_->buffer().polls()}, {"robots", robots}, {"vehicles", vehicles}, {"pedestrians", peds},
            {"lights", lights},         {"steps", ep_->steps()}};
  if (const Subtask* s = ep_->current()) {
    j["subtask"] = ep_->current_subtask();
    j["instruction"] = s->instruction;
    j["hint"] = {{"landmarks", to_json(s->hint)["landmarks"]}, {"pose", to_json(s->hint.pose)}};
  }
  return j;
}

Transcript Session::transcript() const {
  Transcript t;
  t.task = *task_;
  t.config = config_.env;
  t.entries = entries_;
  for (std::uint32_t a = 0; a < ep_->agents(); ++a) t.final_poses.push_back(ep_->world().robot(a).pose);
  t.status = ep_->status();
  t.log_hash = log_hash(ep_->log());
  return t;
}

Json Session::op_transcript(const Json& req) const {
  if (!ep_->buffer().idle()) bad_request("transcript needs every agent idle");
  const Transcript t = transcript();
  Json j = to_json(t);
  if (auto p = req.find("path"); p != req.end()) {
    if (t.entries.empty()) throw Error(ErrorCode::export_error, "nothing recorded yet");
    try {
      write_file(p->get<std::string>(), j.dump() + "\n");
    } catch (const Error& e) {
      throw Error(ErrorCode::export_error, e.what());
    }
  }
  return {{"status", "ok"}, {"transcript", std::move(j)}};
}

Json Session::op_replay(const Json& req) const {
  Transcript t;
  if (auto it = req.find("transcript"); it != req.end()) {
    t = transcript_from(*it);
  } else if (auto p = req.find("path"); p != req.end()) {
    t = transcript_from(Json::parse(read_file(p->get<std::string>())));
  } else {
    bad_request("replay needs 'transcript' or 'path'");
  }
  const CityMap map = map_ && task_ && task_->map_hash == t.task.map_hash ? *map_ : map_for_task(t.task);
  const ReplayResult r = replay(map, t);
  return {{"status", "ok"},
          {"final_poses", poses_json(r.final_poses)},
          {"episode_status", status_name(r.status)},
          {"log_hash", hex64(r.log_hash)},
          {"matches", r.final_poses == t.final_poses && r.status == t.status && r.log_hash == t.log_hash}};
}

}  // namespace citysim
