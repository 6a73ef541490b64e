#include "citysim/oracle.hpp"

#include <cmath>
#include <limits>
#include <queue>

#include "citysim/error.hpp"

namespace citysim {

bool step_gated(const World& world, Vec2 from, Vec2 to) {
  const CityMap& map = world.map();
  const Aabb swept = Aabb::from_corners(from, to);
  for (const Intersection& in : map.intersections) {
    if (!in.signalized) continue;
    for (int a = 0; a < 4; ++a) {
      const Cardinal arm = static_cast<Cardinal>(a);
      if (!in.has_arm(arm)) continue;
      const Aabb band = map.crosswalk_band(in, arm);
      if (!swept.intersects(band) || band.contains(from)) continue;
      const Axis crossing = axis_of(arm) == Axis::NS ? Axis::EW : Axis::NS;
      const TrafficLight* light = world.traffic().light_at(in.id);
      if (light != nullptr &&
          signal_gate(*light, crossing, world.traffic().config().proceed_threshold) == GateVerdict::wait) {
        return true;
      }
    }
  }
  return false;
}

namespace {

// Whether a straight move over `duration` seconds would pass within a margin
// of a vehicle or pedestrian extrapolated at its current velocity.
bool step_conflicts(const World& world, Vec2 from, Vec2 to, double duration) {
  const TrafficSim& t = world.traffic();
  const double r = world.config().robot_radius + 0.3;
  auto conflicts = [&](Vec2 q, Vec2 v, double radius) {
    if (distance(q, from) > distance(from, to) + length(v) * duration + r + radius) return false;
    for (int k = 0; k <= 20; ++k) {
      const double f = k / 20.0;
      const Vec2 p = from + (to - from) * f;
      if (distance(p, q + v * (f * duration)) < r + radius) return true;
    }
    return false;
  };
  for (const VehicleAgent& v : t.vehicles()) {
    if (conflicts(v.pose.position, heading_vector(v.pose.heading) * v.speed, t.config().vehicle_radius)) return true;
  }
  for (const PedestrianAgent& q : t.pedestrians()) {
    const Vec2 vel = q.holding ? Vec2{} : heading_vector(q.pose.heading) * q.walk_speed;
    if (conflicts(q.pose.position, vel, t.config().pedestrian_radius)) return true;
  }
  return false;
}

}  // namespace

RobotAction turn_toward(double heading, double target) {
  const double d = heading_difference(heading, target);
  return RobotAction::of(d < 0.0 ? ActionKind::turn_left : ActionKind::turn_right);
}

void Walker::set_targets(std::vector<Vec2> targets) {
  targets_.assign(targets.begin(), targets.end());
  detour_.clear();
}

namespace {

bool within(Vec2 a, Vec2 b, double half) { return std::abs(a.x - b.x) <= half && std::abs(a.y - b.y) <= half; }

Cardinal dominant(Vec2 d) {
  if (std::abs(d.x) >= std::abs(d.y)) return d.x > 0 ? Cardinal::E : Cardinal::W;
  return d.y > 0 ? Cardinal::N : Cardinal::S;
}

}  // namespace

std::optional<RobotAction> Walker::next(const World& world, std::uint32_t agent, std::optional<double> final_heading) {
  const Pose pose = world.robot(agent).pose;
  const double step = world.config().step_length;
  const double half = step / 2;
  while (!detour_.empty() && within(detour_.front(), pose.position, half)) detour_.pop_front();
  while (!targets_.empty() && within(targets_.front(), pose.position, half)) targets_.pop_front();
  if (!detour_.empty()) {
    return move(world, pose, cardinal_heading(dominant(detour_.front() - pose.position)), true);
  }
  if (targets_.empty()) {
    if (final_heading && std::abs(heading_difference(pose.heading, *final_heading)) > 1e-9) {
      return turn_toward(pose.heading, *final_heading);
    }
    return std::nullopt;
  }
  const double h = cardinal_heading(dominant(targets_.front() - pose.position));
  if (world.sweep(pose.position, h, step) + 1e-9 < step && plan_detour(world, pose.position)) {
    return next(world, agent, final_heading);
  }
  return move(world, pose, h, false);
}

RobotAction Walker::move(const World& world, const Pose& pose, double h, bool lateral) {
  const EnvConfig& c = world.config();
  const double turn = heading_difference(pose.heading, h);
  ActionKind kind = ActionKind::move_forward;
  if (std::abs(turn) > 1e-9) {
    if (!lateral) return turn_toward(pose.heading, h);
    kind = std::abs(turn) > 135.0 ? ActionKind::move_backward : turn > 0 ? ActionKind::move_right : ActionKind::move_left;
  }
  const Vec2 to = pose.position + heading_vector(h) * c.step_length;
  if (step_gated(world, pose.position, to)) return RobotAction::of(ActionKind::stay);
  if (yielded_ < kMaxYield && step_conflicts(world, pose.position, to, c.translate_duration)) {
    ++yielded_;
    return RobotAction::of(ActionKind::stay);
  }
  yielded_ = 0;
  return RobotAction::of(kind);
}

// Cheapest route on the step lattice around `p` (cells entered on the
// carriageway cost double) to either of the next two targets, or back onto
// the current lane at least three steps closer to the next target.
bool Walker::plan_detour(const World& world, Vec2 p) {
  constexpr int R = 8;
  constexpr int W = 2 * R + 1;
  const double step = world.config().step_length;
  const double half = step / 2;
  const Vec2 target = targets_.front();
  const double d0 = manhattan(p, target);
  const bool along_x = dominant(target - p) == Cardinal::E || dominant(target - p) == Cardinal::W;
  auto cell = [&](int i) { return p + Vec2{double(i % W - R), double(i / W - R)} * step; };

  std::vector<double> cost(W * W, std::numeric_limits<double>::infinity());
  std::vector<int> prev(W * W, -1);
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> open;
  const int start = R * W + R;
  cost[start] = 0.0;
  open.push({0.0, start});
  int goal = -1;
  std::size_t reached = 0;
  while (!open.empty()) {
    const auto [c, i] = open.top();
    open.pop();
    if (c > cost[i]) continue;
    const Vec2 q = cell(i);
    if (i != start) {
      const std::size_t limit = std::min<std::size_t>(2, targets_.size());
      std::size_t k = 0;
      while (k < limit && !within(q, targets_[k], half)) ++k;
      const bool lane = along_x ? std::abs(q.y - p.y) <= half : std::abs(q.x - p.x) <= half;
      if (k < limit || (lane && manhattan(q, target) <= d0 - 3 * step)) {
        goal = i;
        reached = k < limit ? k : 0;
        break;
      }
    }
    const int x = i % W, y = i / W;
    for (int dir = 0; dir < 4; ++dir) {
      const int nx = x + (dir == 1) - (dir == 3), ny = y + (dir == 0) - (dir == 2);
      if (nx < 0 || ny < 0 || nx >= W || ny >= W) continue;
      const int j = ny * W + nx;
      if (world.sweep(q, 90.0 * dir, step) + 1e-9 < step) continue;
      const double nc = c + (world.map().on_carriageway(cell(j)) ? 2.0 : 1.0);
      if (nc < cost[j]) {
        cost[j] = nc;
        prev[j] = i;
        open.push({nc, j});
      }
    }
  }
  if (goal < 0) return false;
  for (std::size_t k = 0; k < reached && k < targets_.size(); ++k) targets_.pop_front();
  detour_.clear();
  for (int i = goal; i != start; i = prev[i]) detour_.push_front(cell(i));
  return true;
}

MMNavOracle::MMNavOracle(const MMNavTask& task) {
  const auto& corners = task.corners;
  std::size_t cursor = 0;
  for (const Subtask& s : task.subtasks) {
    std::vector<Vec2> t;
    std::size_t j = cursor;
    while (j < corners.size() && !(corners[j] == s.goal.pose.position)) ++j;
    if (j == corners.size()) throw Error(ErrorCode::oracle_blocked, "subtask goal is not on the planned route");
    for (std::size_t k = cursor + 1; k <= j; ++k) t.push_back(corners[k]);
    cursor = j;
    targets_.push_back(std::move(t));
  }
}

RobotAction MMNavOracle::next(const Episode& ep) {
  const Subtask* s = ep.current();
  if (s == nullptr) return RobotAction::of(ActionKind::stay);
  if (loaded_ != ep.current_subtask()) {
    loaded_ = ep.current_subtask();
    walker_.set_targets(targets_[loaded_]);
  }
  if (auto a = walker_.next(ep.world(), 0, s->goal.pose.heading)) return *a;
  return RobotAction::of(ActionKind::evaluate);
}

MRSOracle::MRSOracle(const MRSTask& task, const World& world) {
  const WaypointGraph& g = world.sidewalks();
  const auto path = astar_path(g, task.node_main, task.node_follower);
  if (!path) throw Error(ErrorCode::oracle_blocked, "spawns are not connected");
  std::vector<Vec2> pts;
  for (std::uint32_t n : path->nodes) pts.push_back(g.node(n).position);
  // Meeting node: first node at or past half the route length.
  std::size_t mid = 0;
  double run = 0.0;
  while (mid + 1 < pts.size() && run < path->cost / 2) {
    run += distance(pts[mid], pts[mid + 1]);
    ++mid;
  }
  walkers_[0].set_targets({pts.begin() + 1, pts.begin() + static_cast<std::ptrdiff_t>(mid) + 1});
  std::vector<Vec2> back(pts.rbegin() + 1, pts.rend() - static_cast<std::ptrdiff_t>(mid));
  walkers_[1].set_targets(std::move(back));
}

std::optional<RobotAction> MRSOracle::next(const Episode& ep, std::uint32_t agent) {
  const World& w = ep.world();
  const std::uint32_t other = 1 - agent;
  if (w.visible(agent, other)) return RobotAction::of(ActionKind::check_task_complete);
  if (auto a = walkers_[agent].next(w, agent, std::nullopt)) return *a;
  // At the meeting node: face the other robot, then idle while it walks.
  const Pose self = w.robot(agent).pose;
  const double h = cardinal_heading(cardinal_of(bearing(self.position, w.robot(other).pose.position)));
  if (std::abs(heading_difference(self.heading, h)) > 1e-9) return turn_toward(self.heading, h);
  if (!walkers_[other].arrived()) return std::nullopt;
  return RobotAction::of(ActionKind::stay);
}

RobotAction RandomAgent::next() {
  const auto k = rng_.below(8);
  if (k < 7) return RobotAction::of(static_cast<ActionKind>(k));
  return RobotAction::of(kind_ == TaskKind::mmnav ? ActionKind::evaluate : ActionKind::check_task_complete);
}

EpisodeResult run_mmnav_oracle(Episode& ep) {
  MMNavOracle oracle(*ep.mmnav());
  return run_episode(ep, [&](const Episode& e, std::uint32_t) { return std::optional(oracle.next(e)); });
}

EpisodeResult run_mrs_oracle(Episode& ep) {
  MRSOracle oracle(*ep.mrs(), ep.world());
  return run_episode(ep, [&](const Episode& e, std::uint32_t a) { return oracle.next(e, a); });
}

EpisodeResult run_random(Episode& ep, std::uint64_t seed) {
  RandomAgent agent(seed, ep.kind());
  return run_episode(ep, [&](const Episode&, std::uint32_t) { return std::optional(agent.next()); });
}

}  // namespace citysim
