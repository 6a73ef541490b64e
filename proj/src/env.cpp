#include "citysim/env.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <limits>

#include "citysim/error.hpp"

namespace citysim {

namespace {

constexpr std::array<std::string_view, 11> kActionNames = {
    "move_forward", "move_backward", "move_left", "move_right", "turn_left", "turn_right",
    "stay",         "evaluate",      "look",      "send_message", "check_task_complete",
};
constexpr std::array<std::string_view, 3> kLookNames = {"level", "up", "down"};
constexpr std::array<std::string_view, 3> kSafetyNames = {"static_collision", "dynamic_collision",
                                                          "red_light_violation"};

// Direction of a translation relative to the body heading.
double translation_offset(ActionKind a) {
  switch (a) {
    case ActionKind::move_backward: return 180.0;
    case ActionKind::move_left: return -90.0;
    case ActionKind::move_right: return 90.0;
    default: return 0.0;
  }
}

std::size_t utf8_length(std::string_view s) {
  std::size_t n = 0;
  for (unsigned char c : s) n += (c & 0xC0) != 0x80;
  return n;
}

// Entry parameter of a ray into the open interior of a box, if it enters
// within (0, limit]. Rays that only graze the boundary or move away from a
// box they touch do not enter it.
std::optional<double> open_entry(Vec2 o, Vec2 d, const Aabb& b) {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  const std::array<double, 2> os = {o.x, o.y};
  const std::array<double, 2> ds = {d.x, d.y};
  const std::array<double, 2> mins = {b.min.x, b.min.y};
  const std::array<double, 2> maxs = {b.max.x, b.max.y};
  for (int k = 0; k < 2; ++k) {
    if (ds[k] == 0.0) {
      if (!(mins[k] < os[k] && os[k] < maxs[k])) return std::nullopt;
      continue;
    }
    double t1 = (mins[k] - os[k]) / ds[k];
    double t2 = (maxs[k] - os[k]) / ds[k];
    if (t1 > t2) std::swap(t1, t2);
    lo = std::max(lo, t1);
    hi = std::min(hi, t2);
  }
  if (!(lo < hi) || hi <= 0.0) return std::nullopt;
  return std::max(lo, 0.0);
}

Axis band_crossing_axis(Cardinal arm) { return axis_of(arm) == Axis::NS ? Axis::EW : Axis::NS; }

}  // namespace

std::int64_t to_time_units(double seconds) {
  const double u = seconds * static_cast<double>(kTimeUnitsPerSecond);
  const double r = std::round(u);
  if (!(r >= 0.0) || std::abs(u - r) > 1e-6) {
    throw Error(ErrorCode::config_error, "duration is not a multiple of 1/600 s: " + std::to_string(seconds));
  }
  return static_cast<std::int64_t>(r);
}

std::string_view action_name(ActionKind a) { return kActionNames[static_cast<std::size_t>(a)]; }

ActionKind action_from_name(std::string_view s) {
  for (std::size_t i = 0; i < kActionNames.size(); ++i) {
    if (kActionNames[i] == s) return static_cast<ActionKind>(i);
  }
  throw Error(ErrorCode::bad_request, "unknown action: " + std::string(s));
}

bool is_translation(ActionKind a) {
  return a == ActionKind::move_forward || a == ActionKind::move_backward || a == ActionKind::move_left ||
         a == ActionKind::move_right;
}

bool is_rotation(ActionKind a) { return a == ActionKind::turn_left || a == ActionKind::turn_right; }

std::string_view look_name(LookView v) { return kLookNames[static_cast<std::size_t>(v)]; }

LookView look_from_name(std::string_view s) {
  for (std::size_t i = 0; i < kLookNames.size(); ++i) {
    if (kLookNames[i] == s) return static_cast<LookView>(i);
  }
  throw Error(ErrorCode::bad_request, "unknown view: " + std::string(s));
}

std::string_view safety_name(SafetyKind k) { return kSafetyNames[static_cast<std::size_t>(k)]; }

SafetyKind safety_from_name(std::string_view s) {
  for (std::size_t i = 0; i < kSafetyNames.size(); ++i) {
    if (kSafetyNames[i] == s) return static_cast<SafetyKind>(i);
  }
  throw Error(ErrorCode::schema_error, "unknown safety event: " + std::string(s));
}

void SafetyCounts::add(const SafetyEvent& e) {
  switch (e.kind) {
    case SafetyKind::static_collision: ++static_collisions; break;
    case SafetyKind::dynamic_collision: ++dynamic_collisions; break;
    case SafetyKind::red_light_violation: ++red_light_violations; break;
  }
}

bool Scan::has_landmark(std::uint32_t building) const {
  return std::any_of(landmarks.begin(), landmarks.end(), [&](const VisibleLandmark& l) { return l.building == building; });
}

double ray_heading(const EnvConfig& c, double heading, int k) {
  return normalize_heading(heading - c.fov / 2 + c.fov * k / c.ray_count);
}

World::World(const CityMap& map, EnvConfig config)
    : map_(map), config_(std::move(config)), sidewalks_(build_waypoint_graph(map)) {
  if (config_.ray_count <= 0 || config_.fov <= 0.0 || config_.ray_range <= 0.0 || config_.robot_radius < 0.0) {
    throw Error(ErrorCode::config_error, "invalid observation or robot parameters");
  }
  to_time_units(config_.translate_duration);
  to_time_units(config_.rotate_duration);
  to_time_units(config_.stay_duration);
  if (std::abs(config_.traffic.dt * kTimeUnitsPerSecond - static_cast<double>(kUnitsPerTick)) > 1e-9) {
    throw Error(ErrorCode::config_error, "world tick must be 1/60 s");
  }
  traffic_ = std::make_unique<TrafficSim>(map_, sidewalks_, config_.traffic);
  std::vector<SceneBox> grown = map_.scene().boxes();
  for (SceneBox& b : grown) b.box = b.box.inflated(config_.robot_radius, config_.robot_radius);
  inflated_ = RayScene(std::move(grown));
}

std::uint32_t World::add_robot(Pose pose) {
  Robot r;
  r.id = static_cast<std::uint32_t>(robots_.size());
  r.pose = {pose.position, normalize_heading(pose.heading)};
  robots_.push_back(std::move(r));
  Robot& added = robots_.back();
  detect(added);
  added.pending.clear();  // starting state is not an event
  return added.id;
}

const Robot& World::robot(std::uint32_t id) const {
  if (id >= robots_.size()) throw Error(ErrorCode::unknown_agent, "unknown agent " + std::to_string(id));
  return robots_[id];
}

void World::set_pose(std::uint32_t id, Pose pose) {
  robot(id);
  Robot& r = robots_[id];
  r.pose = {pose.position, normalize_heading(pose.heading)};
  r.moving = false;
  detect(r);
  r.pending.clear();
}

Vec2 World::position_at(const Robot& r, std::int64_t t) const {
  if (!r.moving) return r.pose.position;
  if (t >= r.end || r.end <= r.start) return r.to;
  const double f = static_cast<double>(t - r.start) / static_cast<double>(r.end - r.start);
  return r.from + (r.to - r.from) * std::clamp(f, 0.0, 1.0);
}

void World::advance_to(std::int64_t t) {
  while (static_cast<std::int64_t>(tick() + 1) * kUnitsPerTick <= t) {
    traffic_->tick();
    now_ = static_cast<std::int64_t>(tick()) * kUnitsPerTick;
    for (Robot& r : robots_) {
      r.pose.position = position_at(r, now_);
      detect(r);
    }
  }
  now_ = std::max(now_, t);
}

double World::sweep(Vec2 p, double heading, double limit) const {
  const Vec2 d = heading_vector(heading);
  RayScene::Candidates c;
  inflated_.gather(Aabb::from_corners(p, p + d * limit), kAllClasses, c);
  double best = limit;
  for (std::uint32_t i : c.index) {
    const auto t = open_entry(p, d, inflated_.boxes()[i].box);
    if (t && *t < best) best = *t;
  }
  return best;
}

std::int64_t World::begin(std::uint32_t id, const RobotAction& a) {
  robot(id);
  Robot& r = robots_[id];
  if (is_translation(a.kind)) {
    const double h = normalize_heading(r.pose.heading + translation_offset(a.kind));
    const double d = sweep(r.pose.position, h, config_.step_length);
    r.moving = true;
    r.from = r.pose.position;
    r.to = r.pose.position + heading_vector(h) * d;
    r.start = now_;
    r.end = now_ + to_time_units(config_.translate_duration);
    return r.end - r.start;
  }
  if (is_rotation(a.kind)) return to_time_units(config_.rotate_duration);
  if (a.kind == ActionKind::stay) return to_time_units(config_.stay_duration);
  return 0;
}

void World::finish(std::uint32_t id, const RobotAction& a) {
  robot(id);
  Robot& r = robots_[id];
  if (is_translation(a.kind)) {
    r.pose.position = r.to;
    r.moving = false;
  } else if (a.kind == ActionKind::turn_left) {
    r.pose.heading = turn_heading(r.pose.heading, Turn::left);
  } else if (a.kind == ActionKind::turn_right) {
    r.pose.heading = turn_heading(r.pose.heading, Turn::right);
  } else if (a.kind == ActionKind::look) {
    r.view = a.view;
  }
  detect(r);
}

std::vector<SafetyEvent> World::take_events(std::uint32_t id) {
  robot(id);
  std::vector<SafetyEvent> out;
  out.swap(robots_[id].pending);
  return out;
}

void World::detect(Robot& r) {
  const Vec2 p = r.pose.position;
  std::vector<std::pair<EntityClass, std::int64_t>> now;

  // Static contact: the center inside a footprint grown by the radius.
  RayScene::Candidates c;
  inflated_.gather(Aabb{p, p}, kAllClasses, c);
  for (std::uint32_t i : c.index) {
    const SceneBox& b = inflated_.boxes()[i];
    if (b.box.contains(p)) now.emplace_back(b.cls, b.id);
  }
  const TrafficConfig& tc = traffic_->config();
  for (const VehicleAgent& v : traffic_->vehicles()) {
    if (distance(v.pose.position, p) < config_.robot_radius + tc.vehicle_radius) {
      now.emplace_back(EntityClass::vehicle, v.id);
    }
  }
  for (const PedestrianAgent& q : traffic_->pedestrians()) {
    if (distance(q.pose.position, p) < config_.robot_radius + tc.pedestrian_radius) {
      now.emplace_back(EntityClass::pedestrian, q.id);
    }
  }
  std::sort(now.begin(), now.end());
  for (const auto& key : now) {
    if (std::binary_search(r.contacts.begin(), r.contacts.end(), key)) continue;
    const bool moving = key.first == EntityClass::vehicle || key.first == EntityClass::pedestrian;
    r.pending.push_back({moving ? SafetyKind::dynamic_collision : SafetyKind::static_collision, tick(), r.id,
                         key.first, key.second});
  }
  r.contacts = std::move(now);

  // Crosswalk bands of signalized intersections.
  std::vector<std::int64_t> bands;
  for (const Intersection& in : map_.intersections) {
    if (!in.signalized) continue;
    for (int a = 0; a < 4; ++a) {
      const Cardinal arm = static_cast<Cardinal>(a);
      if (!in.has_arm(arm) || !map_.crosswalk_band(in, arm).contains(p)) continue;
      const std::int64_t key = 4 * static_cast<std::int64_t>(in.id) + a;
      bands.push_back(key);
      if (std::find(r.bands.begin(), r.bands.end(), key) != r.bands.end()) continue;
      const TrafficLight* light = traffic_->light_at(in.id);
      if (light != nullptr && light->green_axis != band_crossing_axis(arm)) {
        r.pending.push_back({SafetyKind::red_light_violation, tick(), r.id, EntityClass::driveway, in.id});
      }
    }
  }
  r.bands = std::move(bands);
}

Scan World::scan(Pose pose, LookView view, bool dynamic, std::int64_t exclude_robot) const {
  const EnvConfig& c = config_;
  const Vec2 o = pose.position;
  const double range = view == LookView::down ? c.ground_range : c.ray_range;

  const RayScene& statics = view == LookView::up ? map_.building_scene() : map_.scene();
  RayScene::Candidates boxes;
  statics.gather(Aabb::from_center(o, range, range), kAllClasses, boxes);

  // Moving entities are low; they drop out of the elevated view.
  kernels::DiscSoA discs;
  std::vector<std::pair<EntityClass, std::int64_t>> disc_ids;
  if (dynamic && view != LookView::up) {
    auto add = [&](Vec2 q, double radius, EntityClass cls, std::int64_t id) {
      if (manhattan(q, o) <= 2 * (range + radius)) {
        discs.push(q, radius);
        disc_ids.emplace_back(cls, id);
      }
    };
    const TrafficConfig& tc = traffic_->config();
    for (const VehicleAgent& v : traffic_->vehicles()) add(v.pose.position, tc.vehicle_radius, EntityClass::vehicle, v.id);
    for (const PedestrianAgent& q : traffic_->pedestrians()) {
      add(q.pose.position, tc.pedestrian_radius, EntityClass::pedestrian, q.id);
    }
    for (const Robot& r : robots_) {
      if (static_cast<std::int64_t>(r.id) != exclude_robot) add(r.pose.position, c.robot_radius, EntityClass::robot, r.id);
    }
  }

  Scan s;
  s.pose = pose;
  s.view = view;
  s.depth.resize(static_cast<std::size_t>(c.ray_count));
  s.cls.resize(s.depth.size());
  s.ids.resize(s.depth.size());
  const kernels::KernelSet& k = kernels::active();
  const auto bv = kernels::view(boxes.soa);
  const auto dv = kernels::view(discs);
  for (int i = 0; i < c.ray_count; ++i) {
    const double h = ray_heading(c, pose.heading, i);
    const kernels::Ray ray{o, heading_vector(h), range};
    const kernels::NearestHit hb = k.ray_boxes(ray, bv);
    const kernels::NearestHit hd = k.ray_discs(ray, dv);
    const auto u = static_cast<std::size_t>(i);
    if (hd.hit() && (!hb.hit() || hd.t < hb.t)) {
      s.depth[u] = hd.t;
      s.cls[u] = disc_ids[static_cast<std::size_t>(hd.index)].first;
      s.ids[u] = disc_ids[static_cast<std::size_t>(hd.index)].second;
    } else if (hb.hit()) {
      const SceneBox& b = statics.boxes()[boxes.index[static_cast<std::size_t>(hb.index)]];
      s.depth[u] = hb.t;
      s.cls[u] = b.cls;
      s.ids[u] = b.id;
    } else if (view == LookView::down) {
      s.depth[u] = range;
      s.cls[u] = map_.on_carriageway(o + ray.dir * range) ? EntityClass::driveway : EntityClass::sidewalk;
      s.ids[u] = -1;
    } else {
      s.depth[u] = range;
      s.cls[u] = EntityClass::sky;
      s.ids[u] = -1;
    }
    if (s.cls[u] == EntityClass::building) {
      const auto id = static_cast<std::uint32_t>(s.ids[u]);
      auto it = std::find_if(s.landmarks.begin(), s.landmarks.end(), [&](const VisibleLandmark& l) { return l.building == id; });
      if (it == s.landmarks.end()) {
        s.landmarks.push_back({id, h, s.depth[u]});
      } else if (s.depth[u] < it->range) {
        it->bearing = h;
        it->range = s.depth[u];
      }
    }
  }
  std::sort(s.landmarks.begin(), s.landmarks.end(), [](const VisibleLandmark& a, const VisibleLandmark& b) {
    return a.range != b.range ? a.range < b.range : a.building < b.building;
  });
  return s;
}

Scan World::observe(std::uint32_t id) const { return observe(id, robot(id).view); }

Scan World::observe(std::uint32_t id, LookView view) const {
  const Robot& r = robot(id);
  return scan(r.pose, view, true, r.id);
}

Scan World::scan_static(Pose pose, LookView view) const { return scan(pose, view, false, -1); }

bool World::visible(std::uint32_t observer, std::uint32_t target) const {
  robot(target);
  const Scan s = observe(observer, LookView::level);
  for (std::size_t i = 0; i < s.cls.size(); ++i) {
    if (s.cls[i] == EntityClass::robot && s.ids[i] == static_cast<std::int64_t>(target)) return true;
  }
  return false;
}

std::uint64_t World::state_hash() const {
  std::uint64_t h = traffic_->state_hash();
  for (const Robot& r : robots_) {
    const std::array<std::uint64_t, 3> bits = {std::bit_cast<std::uint64_t>(r.pose.position.x),
                                               std::bit_cast<std::uint64_t>(r.pose.position.y),
                                               std::bit_cast<std::uint64_t>(r.pose.heading)};
    h = fnv1a(bits.data(), sizeof(bits), h);
  }
  return h;
}

ControlBuffer::ControlBuffer(World& world)
    : world_(world), interval_(to_time_units(world.config().poll_interval)) {
  if (interval_ <= 0) throw Error(ErrorCode::config_error, "poll interval must be positive");
}

ControlBuffer::Slot& ControlBuffer::slot(std::uint32_t agent) {
  world_.robot(agent);
  if (slots_.size() < world_.robot_count()) slots_.resize(world_.robot_count());
  return slots_[agent];
}

void ControlBuffer::submit(std::uint32_t agent, RobotAction action) {
  Slot& s = slot(agent);
  if (s.pending || s.running) throw Error(ErrorCode::agent_busy, "agent " + std::to_string(agent) + " is busy");
  if (action.kind == ActionKind::send_message && utf8_length(action.text) > world_.config().max_message) {
    throw Error(ErrorCode::message_too_long, "message exceeds " + std::to_string(world_.config().max_message) + " characters");
  }
  s.pending = std::move(action);
}

bool ControlBuffer::available(std::uint32_t agent) const {
  world_.robot(agent);
  if (agent >= slots_.size()) return true;
  return !slots_[agent].pending && !slots_[agent].running;
}

bool ControlBuffer::idle() const {
  return std::all_of(slots_.begin(), slots_.end(), [](const Slot& s) { return !s.pending && !s.running; });
}

std::vector<Completion> ControlBuffer::poll() {
  const std::int64_t t = polls_ * interval_;
  ++polls_;
  world_.advance_to(t);
  if (slots_.size() < world_.robot_count()) slots_.resize(world_.robot_count());
  std::vector<Completion> done;
  for (std::uint32_t a = 0; a < slots_.size(); ++a) {
    Slot& s = slots_[a];
    if (!s.running || s.end > t) continue;
    world_.finish(a, *s.running);
    Completion c;
    c.agent = a;
    c.action = std::move(*s.running);
    c.start = s.start;
    c.end = t;
    c.tick = world_.tick();
    c.before = s.before;
    c.after = world_.robot(a).pose;
    c.events = world_.take_events(a);
    s.running.reset();
    done.push_back(std::move(c));
  }
  for (std::uint32_t a = 0; a < slots_.size(); ++a) {
    Slot& s = slots_[a];
    if (!s.pending || s.running) continue;
    s.before = world_.robot(a).pose;
    s.start = t;
    s.end = t + world_.begin(a, *s.pending);
    s.running = std::move(s.pending);
    s.pending.reset();
  }
  return done;
}

}  // namespace citysim
