#include "citysim/traffic.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>

#include "citysim/error.hpp"

namespace citysim {

namespace {

// Tolerance on the "still before the line" test so that a vehicle parked
// exactly on a stop line is not counted as having crossed it.
constexpr double kLineEps = 1e-9;

Vec2 unit(Vec2 v) {
  const double n = length(v);
  return n > 0.0 ? v * (1.0 / n) : Vec2{0, 1};
}

// Right-hand normal of a travel direction.
Vec2 right_of(Vec2 d) { return {d.y, -d.x}; }

double heading_of(Vec2 d) { return bearing({0, 0}, d); }

}  // namespace

TrafficLight advance_traffic_light(TrafficLight light, double dt) {
  light.remaining -= dt;
  if (light.remaining <= 1e-9 * light.green) {
    light.green_axis = light.green_axis == Axis::NS ? Axis::EW : Axis::NS;
    light.remaining = light.green;
  }
  return light;
}

GateVerdict signal_gate(const TrafficLight& light, Axis approach, double threshold) {
  return light.green_axis == approach && light.remaining > threshold ? GateVerdict::proceed : GateVerdict::wait;
}

double pid_step(const PidGains& g, PidState& s, double error, double measurement, double dt, double lo, double hi) {
  const double deriv = s.primed ? -(measurement - s.prev_measurement) / dt : 0.0;
  const double integral = s.integral + error * dt;
  double out = g.kp * error + g.ki * integral + g.kd * deriv;
  if (out > hi) {
    out = hi;
    if (error < 0.0) s.integral = integral;
  } else if (out < lo) {
    out = lo;
    if (error > 0.0) s.integral = integral;
  } else {
    s.integral = integral;
  }
  s.prev_measurement = measurement;
  s.primed = true;
  return out;
}

StepResult vehicle_control_step(VehicleAgent& v, const TrafficConfig& c, const LightView& lights) {
  StepResult r;
  while (!v.points.empty()) {
    const DrivePoint& t = v.points.front();
    if (t.stop_line) break;  // stop lines are only consumed by crossing them
    const double ahead = dot(t.p - v.pose.position, t.dir);
    if (distance(v.pose.position, t.p) <= c.arrival_radius || ahead <= 0.0) {
      v.points.pop_front();
    } else {
      break;
    }
  }
  if (v.points.empty()) {
    r.route_done = true;
    return r;
  }
  const DrivePoint& t = v.points.front();
  const double dt = c.dt;

  // Heading channel: derivative acts on the measured turn rate.
  const double desired = bearing(v.pose.position, t.p);
  const double err = heading_difference(v.pose.heading, desired);
  double rate = c.heading_pid.kp * err + c.heading_pid.ki * v.heading_state.integral - c.heading_pid.kd * v.turn_rate;
  v.heading_state.integral += err * dt;
  rate = std::clamp(rate, -c.max_turn_rate, c.max_turn_rate);
  v.turn_rate = rate;
  v.pose.heading = normalize_heading(v.pose.heading + rate * dt);

  // Target speed: the point's limit, anticipating the following point's
  // limit, scaled down while the heading error is large.
  double limit = t.speed_limit;
  if (v.points.size() > 1) {
    const double next_limit = v.points[1].speed_limit;
    limit = std::min(limit, std::sqrt(next_limit * next_limit + 2.0 * c.brake_decel * distance(v.pose.position, t.p)));
  }
  const double e = std::abs(err) * std::numbers::pi / 180.0;
  const double scale = std::abs(err) >= 90.0 ? 0.1 : std::max(0.1, std::cos(e) * std::cos(e));
  v.target_speed = limit * scale;

  const TrafficLight* light = (t.stop_line && t.gate >= 0) ? lights.at(static_cast<std::uint32_t>(t.gate)) : nullptr;
  const double ahead = dot(t.p - v.pose.position, t.dir);
  double cap = std::numeric_limits<double>::infinity();
  if (light != nullptr) {
    const double d = std::max(0.0, ahead);
    if (!v.committed && signal_gate(*light, t.approach, c.proceed_threshold) == GateVerdict::proceed) {
      // Commit only if the line is reached with green to spare.
      const double v_est = std::max(std::min(v.speed, limit), 1.0);
      if (light->remaining - d / v_est - c.commit_margin > c.proceed_threshold) v.committed = true;
    }
    if (!v.committed) cap = std::min(std::sqrt(2.0 * c.brake_decel * d), d / dt);
  }

  const double accel = pid_step(c.speed_pid, v.speed_state, v.target_speed - v.speed, v.speed, dt, -c.max_decel, c.max_accel);
  double speed = std::clamp(v.speed + accel * dt, 0.0, c.max_speed);
  if (speed > cap) {
    speed = std::max(cap, v.speed - c.max_decel * dt);
    v.speed_state.integral = 0.0;
  }

  const Vec2 old = v.pose.position;
  v.pose.position = old + heading_vector(v.pose.heading) * (speed * dt);
  v.speed = speed;
  double ahead_new = dot(t.p - v.pose.position, t.dir);
  if (light != nullptr && !v.committed && ahead_new < 0.0 && ahead_new > -kLineEps) {
    v.pose.position += t.dir * ahead_new;  // rounding residue: stay on the line
    ahead_new = 0.0;
  }

  if (t.stop_line && ahead > -kLineEps && ahead_new <= -kLineEps) {
    if (light != nullptr) {
      r.entered = true;
      r.intersection = t.gate;
      r.under_wait = signal_gate(*light, t.approach, c.proceed_threshold) == GateVerdict::wait;
    }
    v.points.pop_front();
    v.committed = false;
    v.waiting = false;
  } else if (light != nullptr && !v.committed && speed == 0.0 && !v.waiting) {
    v.waiting = true;
    r.began_wait = true;
    r.intersection = t.gate;
  }
  if (v.points.size() < 3) r.route_done = true;
  return r;
}

StepResult pedestrian_step(PedestrianAgent& p, const TrafficConfig& c, const WaypointGraph& g, const LightView& lights) {
  StepResult r;
  if (p.next >= p.route.size()) {
    r.route_done = true;
    return r;
  }
  const std::uint32_t target_id = p.route[p.next];
  if (p.holding) {
    const Edge* e = g.edge_between(p.route[p.next - 1], target_id);
    const TrafficLight* light = lights.at(e->intersection);
    if (light != nullptr && signal_gate(*light, e->crossing, c.proceed_threshold) == GateVerdict::wait) return r;
    p.holding = false;
    r.entered = true;
    r.intersection = static_cast<std::int32_t>(e->intersection);
    r.under_wait = light != nullptr && signal_gate(*light, e->crossing, c.proceed_threshold) == GateVerdict::wait;
  }

  const Vec2 target = g.node(target_id).position;
  const double err = heading_difference(p.pose.heading, bearing(p.pose.position, target));
  const double max_turn = p.max_turn_rate * c.dt;
  p.pose.heading = normalize_heading(p.pose.heading + std::clamp(err, -max_turn, max_turn));
  p.pose.position += heading_vector(p.pose.heading) * (p.walk_speed * c.dt);

  if (distance(p.pose.position, target) <= c.pedestrian_arrival) {
    ++p.next;
    if (p.next < p.route.size()) {
      const Edge* e = g.edge_between(target_id, p.route[p.next]);
      if (e != nullptr && e->gated) {
        const TrafficLight* light = lights.at(e->intersection);
        if (light != nullptr && signal_gate(*light, e->crossing, c.proceed_threshold) == GateVerdict::wait) {
          p.holding = true;
          r.began_wait = true;
          r.intersection = static_cast<std::int32_t>(e->intersection);
        } else {
          r.entered = true;
          r.intersection = static_cast<std::int32_t>(e->intersection);
        }
      }
    }
  }
  if (p.next + 1 >= p.route.size()) r.route_done = true;
  return r;
}

TrafficSim::TrafficSim(const CityMap& map, const WaypointGraph& sidewalks, TrafficConfig config)
    : map_(map), sidewalks_(sidewalks), roads_(build_road_graph(map)), config_(config) {
  clock_.dt = config_.dt;
  light_index_.assign(map.intersections.size(), -1);
  Rng light_rng(derive_seed(map.spec.seed, Stream::lights));
  for (const Intersection& in : map.intersections) {
    if (!in.signalized) continue;
    TrafficLight l;
    l.intersection = in.id;
    l.green = config_.green;
    l.green_axis = light_rng.bernoulli(0.5) ? Axis::NS : Axis::EW;
    l.remaining = (1.0 - light_rng.uniform()) * config_.green;  // offset in (0, green]
    light_index_[in.id] = static_cast<std::int32_t>(lights_.size());
    lights_.push_back(l);
  }

  const std::uint64_t agent_base = derive_seed(map.spec.seed, Stream::agents);
  for (const SpawnRecord& s : map.spawns) {
    const RoadSegment& r = map.roads[s.road];
    Rng rng(derive_seed(agent_base, (static_cast<std::uint64_t>(s.kind) << 32) | s.id));
    if (s.kind == AgentKind::vehicle) {
      VehicleAgent v;
      v.id = static_cast<std::uint32_t>(vehicles_.size());
      v.seed = rng.next_u64();
      // Right-hand traffic: the lane on side +1 of a NS road runs north, on an
      // EW road it runs west.
      const bool toward_to = r.axis == Axis::NS ? s.side > 0 : s.side < 0;
      const Vec2 dir = toward_to ? r.tangent() : r.tangent() * -1.0;
      v.pose.position = r.point(s.along, 0.0, 1) + right_of(dir) * config_.lane_offset;
      v.pose.heading = heading_of(dir);
      v.route = toward_to ? std::vector<std::uint32_t>{r.from, r.to} : std::vector<std::uint32_t>{r.to, r.from};
      v.planned = 1;
      v.target_speed = config_.cruise_speed;
      plan_vehicle(v);
      vehicles_.push_back(std::move(v));
    } else if (s.kind == AgentKind::pedestrian) {
      PedestrianAgent p;
      p.id = static_cast<std::uint32_t>(pedestrians_.size());
      p.seed = rng.next_u64();
      p.walk_speed = config_.walk_speed;
      p.max_turn_rate = config_.pedestrian_turn_rate;
      p.pose.position = r.point(s.along, r.sidewalk_offset, s.side);
      const auto chain = sidewalks_.chain(r.id, s.side);
      std::size_t k = 0;
      while (k + 2 < chain.size() && dot(sidewalks_.node(chain[k + 1]).position - r.a, r.tangent()) <= s.along) ++k;
      const bool forward = rng.bernoulli(0.5);
      const std::uint32_t behind = forward ? chain[k] : chain[k + 1];
      const std::uint32_t ahead = forward ? chain[k + 1] : chain[k];
      p.pose.heading = bearing(p.pose.position, sidewalks_.node(ahead).position);
      p.route = {behind, ahead};
      p.next = 1;
      extend_pedestrian(p);
      pedestrians_.push_back(std::move(p));
    }
  }
}

void TrafficSim::plan_vehicle(VehicleAgent& v) {
  if (v.planned + 1 >= v.route.size()) {
    // Keep the intersection behind the last planned one for turn context.
    const std::size_t keep_from = v.planned - 1;
    v.route.erase(v.route.begin(), v.route.begin() + static_cast<std::ptrdiff_t>(keep_from));
    v.planned = 1;
    Rng rng(derive_seed(v.seed, v.routes_issued++));
    const auto more = sample_route(roads_, v.route.back(), config_.route_hops, rng, config_.weights,
                                   v.route[v.route.size() - 2]);
    v.route.insert(v.route.end(), more.begin() + 1, more.end());
  }
  for (; v.planned + 1 < v.route.size(); ++v.planned) {
    const Intersection& prev = map_.intersections[v.route[v.planned - 1]];
    const Intersection& in = map_.intersections[v.route[v.planned]];
    const Intersection& next = map_.intersections[v.route[v.planned + 1]];
    const Vec2 dir_in = unit(in.center - prev.center);
    const Vec2 dir_out = unit(next.center - in.center);
    const TurnClass turn = classify_turn(prev.center, in.center, next.center);

    DrivePoint stop;
    stop.p = in.center - dir_in * config_.stop_offset + right_of(dir_in) * config_.lane_offset;
    stop.dir = dir_in;
    stop.speed_limit = config_.cruise_speed;
    stop.stop_line = true;
    stop.gate = in.signalized ? static_cast<std::int32_t>(in.id) : -1;
    stop.approach = std::abs(dir_in.y) > std::abs(dir_in.x) ? Axis::NS : Axis::EW;
    v.points.push_back(stop);

    const double exit_limit = turn == TurnClass::straight ? config_.cruise_speed : config_.turn_speed;
    if (turn == TurnClass::reverse) {
      DrivePoint mid;
      mid.p = in.center + right_of(dir_in) * config_.lane_offset;
      mid.dir = dir_in;
      mid.speed_limit = config_.turn_speed;
      v.points.push_back(mid);
    }
    DrivePoint exit;
    exit.p = in.center + dir_out * config_.stop_offset + right_of(dir_out) * config_.lane_offset;
    exit.dir = dir_out;
    exit.speed_limit = exit_limit;
    v.points.push_back(exit);
  }
}

void TrafficSim::extend_pedestrian(PedestrianAgent& p) {
  if (p.next + 1 < p.route.size()) return;
  const std::size_t keep_from = p.next >= 1 ? p.next - 1 : 0;
  p.route.erase(p.route.begin(), p.route.begin() + static_cast<std::ptrdiff_t>(keep_from));
  p.next -= keep_from;
  Rng rng(derive_seed(p.seed, p.routes_issued++));
  std::optional<std::uint32_t> prev;
  if (p.route.size() >= 2) prev = p.route[p.route.size() - 2];
  const auto more = sample_route(sidewalks_, p.route.back(), config_.route_hops, rng, config_.weights, prev);
  p.route.insert(p.route.end(), more.begin() + 1, more.end());
}

const TrafficLight* TrafficSim::light_at(std::uint32_t intersection) const {
  return LightView{lights_, light_index_}.at(intersection);
}

GateVerdict TrafficSim::gate(std::uint32_t intersection, Axis axis) const {
  const TrafficLight* l = light_at(intersection);
  if (l == nullptr) return GateVerdict::proceed;
  return signal_gate(*l, axis, config_.proceed_threshold);
}

const std::vector<TrafficEvent>& TrafficSim::tick() {
  events_.clear();
  ++clock_.tick;
  for (TrafficLight& l : lights_) l = advance_traffic_light(l, config_.dt);
  const LightView view{lights_, light_index_};

  auto record = [&](const StepResult& r, AgentKind kind, std::uint32_t id) {
    if (r.entered) {
      ++stats_.crosswalk_entries;
      if (r.under_wait) ++stats_.entries_under_wait;
      events_.push_back({clock_.tick, TrafficEventKind::crosswalk_entry, kind, id, r.intersection});
    }
    if (r.began_wait) {
      ++stats_.gate_waits;
      events_.push_back({clock_.tick, TrafficEventKind::gate_wait, kind, id, r.intersection});
    }
  };

  for (VehicleAgent& v : vehicles_) {
    const StepResult r = vehicle_control_step(v, config_, view);
    record(r, AgentKind::vehicle, v.id);
    if (r.route_done) {
      const std::uint32_t issued = v.routes_issued;
      plan_vehicle(v);
      if (v.routes_issued != issued) {
        ++stats_.routes_completed;
        events_.push_back({clock_.tick, TrafficEventKind::route_complete, AgentKind::vehicle, v.id, -1});
      }
    }
  }
  for (PedestrianAgent& p : pedestrians_) {
    const StepResult r = pedestrian_step(p, config_, sidewalks_, view);
    record(r, AgentKind::pedestrian, p.id);
    if (r.route_done) {
      const std::uint32_t issued = p.routes_issued;
      extend_pedestrian(p);
      if (p.routes_issued != issued) {
        ++stats_.routes_completed;
        events_.push_back({clock_.tick, TrafficEventKind::route_complete, AgentKind::pedestrian, p.id, -1});
      }
    }
  }
  return events_;
}

std::uint64_t TrafficSim::state_hash() const {
  std::uint64_t h = fnv1a(&clock_.tick, sizeof clock_.tick);
  auto mix = [&](double x) {
    const auto bits = std::bit_cast<std::uint64_t>(x);
    h = fnv1a(&bits, sizeof bits, h);
  };
  for (const TrafficLight& l : lights_) {
    mix(l.remaining);
    mix(l.green_axis == Axis::NS ? 0.0 : 1.0);
  }
  for (const VehicleAgent& v : vehicles_) {
    mix(v.pose.position.x);
    mix(v.pose.position.y);
    mix(v.pose.heading);
    mix(v.speed);
  }
  for (const PedestrianAgent& p : pedestrians_) {
    mix(p.pose.position.x);
    mix(p.pose.position.y);
    mix(p.pose.heading);
  }
  return h;
}

void TrafficSim::dump(std::ostream& out) const {
  char buf[256];
  for (const VehicleAgent& v : vehicles_) {
    std::snprintf(buf, sizeof buf,
                  "{\"tick\":%llu,\"id\":%u,\"kind\":\"vehicle\",\"x\":%.17g,\"y\":%.17g,\"heading\":%.17g,\"speed\":%.17g}\n",
                  static_cast<unsigned long long>(clock_.tick), v.id, v.pose.position.x, v.pose.position.y,
                  v.pose.heading, v.speed);
    out << buf;
  }
  for (const PedestrianAgent& p : pedestrians_) {
    std::snprintf(buf, sizeof buf,
                  "{\"tick\":%llu,\"id\":%u,\"kind\":\"pedestrian\",\"x\":%.17g,\"y\":%.17g,\"heading\":%.17g,\"speed\":%.17g}\n",
                  static_cast<unsigned long long>(clock_.tick), p.id, p.pose.position.x, p.pose.position.y,
                  p.pose.heading, p.holding ? 0.0 : p.walk_speed);
    out << buf;
  }
}

}  // namespace citysim
