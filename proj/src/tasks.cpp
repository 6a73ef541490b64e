#include "citysim/tasks.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <queue>

#include "citysim/error.hpp"

namespace citysim {

namespace {

constexpr std::array<std::string_view, 2> kDifficultyNames = {"easy", "hard"};
constexpr std::array<std::string_view, 4> kSubtaskNames = {"orientation_alignment", "move_along_road",
                                                           "turn_at_intersection", "reach_destination"};
constexpr std::array<std::string_view, 3> kSideNames = {"left", "right", "opposite"};

template <std::size_t N>
std::size_t lookup(const std::array<std::string_view, N>& names, std::string_view s, std::string_view what) {
  for (std::size_t i = 0; i < N; ++i) {
    if (names[i] == s) return i;
  }
  throw Error(ErrorCode::schema_error, "unknown " + std::string(what) + ": " + std::string(s));
}

std::string side_phrase(RelativeSide s) {
  return s == RelativeSide::opposite ? "on the opposite side" : "on your " + std::string(side_name(s));
}

double along(const RoadSegment& r, Vec2 p) { return dot(p - r.a, r.tangent()); }

// Chain index k with the door between chain[k] and chain[k + 1].
std::size_t bracket(const CityMap& map, const WaypointGraph& g, const Building& b) {
  const auto chain = g.chain(b.road, b.side);
  const RoadSegment& r = map.roads[b.road];
  const double s = along(r, b.door);
  for (std::size_t k = 0; k + 1 < chain.size(); ++k) {
    if (along(r, g.node(chain[k + 1]).position) >= s) return k;
  }
  return chain.size() >= 2 ? chain.size() - 2 : 0;
}

std::vector<Vec2> drop_collinear(const std::vector<Vec2>& pts) {
  std::vector<Vec2> dedup;
  for (Vec2 p : pts) {
    if (dedup.empty() || !(dedup.back() == p)) dedup.push_back(p);
  }
  if (dedup.size() <= 2) return dedup;
  std::vector<Vec2> out{dedup.front()};
  for (std::size_t i = 1; i + 1 < dedup.size(); ++i) {
    const double h0 = bearing(dedup[i - 1], dedup[i]);
    const double h1 = bearing(dedup[i], dedup[i + 1]);
    if (std::abs(heading_difference(h0, h1)) > 1e-6) out.push_back(dedup[i]);
  }
  out.push_back(dedup.back());
  return out;
}

const Building& nearest_building(const CityMap& map, Vec2 p) {
  const Building* best = &map.buildings.front();
  double best_d = std::numeric_limits<double>::infinity();
  for (const Building& b : map.buildings) {
    const double d = distance(b.door, p);
    if (d < best_d) {
      best_d = d;
      best = &b;
    }
  }
  return *best;
}

Vec2 sample_point(const Aabb& bounds, Rng& rng) {
  const double x = rng.uniform(bounds.min.x, bounds.max.x);
  const double y = rng.uniform(bounds.min.y, bounds.max.y);
  return {x, y};
}

std::vector<double> graph_distances(const WaypointGraph& g, std::uint32_t s) {
  std::vector<double> d(g.size(), std::numeric_limits<double>::infinity());
  using Item = std::pair<double, std::uint32_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> q;
  d[s] = 0.0;
  q.push({0.0, s});
  while (!q.empty()) {
    const auto [du, u] = q.top();
    q.pop();
    if (du > d[u]) continue;
    for (const auto& [v, e] : g.neighbors(u)) {
      const double nd = du + g.edges()[e].length;
      if (nd < d[v]) {
        d[v] = nd;
        q.push({nd, v});
      }
    }
  }
  return d;
}

Subtask make_subtask(const World& world, SubtaskKind kind, Pose pose, const MMNavConfig& c) {
  Subtask s;
  s.kind = kind;
  s.goal = {pose, c.position_tolerance, c.heading_tolerance};
  s.hint = world.scan_static(pose);
  return s;
}

void attach_landmark(Subtask& s, const CityMap& map, const Building& b) {
  s.landmark = b.id;
  s.landmark_description = b.description();
  s.side = relative_side(map, s.goal.pose, b);
}

}  // namespace

std::string_view difficulty_name(Difficulty d) { return kDifficultyNames[static_cast<std::size_t>(d)]; }
Difficulty difficulty_from_name(std::string_view s) {
  return static_cast<Difficulty>(lookup(kDifficultyNames, s, "difficulty"));
}

CitySpec variant_for(const CitySpec& base, Difficulty d) {
  return d == Difficulty::hard ? hard_variant(base) : easy_variant(base);
}

std::string_view subtask_name(SubtaskKind k) { return kSubtaskNames[static_cast<std::size_t>(k)]; }
SubtaskKind subtask_from_name(std::string_view s) {
  return static_cast<SubtaskKind>(lookup(kSubtaskNames, s, "subtask kind"));
}

std::string_view side_name(RelativeSide s) { return kSideNames[static_cast<std::size_t>(s)]; }
RelativeSide side_from_name(std::string_view s) { return static_cast<RelativeSide>(lookup(kSideNames, s, "side")); }

std::string render_instruction(const Subtask& s) {
  const std::string cue = s.landmark_description + " " + side_phrase(s.side);
  switch (s.kind) {
    case SubtaskKind::orientation_alignment:
      return "Face " + std::string(cardinal_name(cardinal_of(s.goal.pose.heading))) + ". You will see " + cue + ".";
    case SubtaskKind::move_along_road:
      if (s.at_intersection) return "Move along the road and stop at the intersection when you see " + cue + ".";
      return "Move along the road and stop when you see " + cue + ".";
    case SubtaskKind::turn_at_intersection:
      return "Turn " + std::string(s.turn == Turn::left ? "left" : "right") +
             " at the intersection and you should see this view.";
    case SubtaskKind::reach_destination:
      return "Reach the destination, " + s.landmark_description + ". Stop at its front door facing it.";
  }
  return {};
}

RelativeSide relative_side(const CityMap& map, Pose pose, const Building& b) {
  const Vec2 mid = pose.position + (b.door - pose.position) * 0.5;
  if (map.on_carriageway(mid)) return RelativeSide::opposite;
  const Vec2 d = heading_vector(pose.heading);
  const Vec2 v = b.footprint.center() - pose.position;
  return v.x * d.y - v.y * d.x > 0.0 ? RelativeSide::right : RelativeSide::left;
}

DoorRoute plan_door_route(const CityMap& map, const WaypointGraph& g, const Building& from, const Building& to) {
  const auto ca = g.chain(from.road, from.side);
  const auto cb = g.chain(to.road, to.side);
  const std::size_t ka = bracket(map, g, from);
  const std::size_t kb = bracket(map, g, to);

  DoorRoute best;
  best.length = std::numeric_limits<double>::infinity();
  if (from.road == to.road && from.side == to.side) {
    // Straight along one chain.
    const RoadSegment& r = map.roads[from.road];
    const double s0 = along(r, from.door);
    const double s1 = along(r, to.door);
    best.points.push_back(from.door);
    std::vector<std::uint32_t> between;
    for (std::uint32_t n : ca) {
      const double s = along(r, g.node(n).position);
      if ((s > s0 && s < s1) || (s < s0 && s > s1)) between.push_back(n);
    }
    if (s1 < s0) std::reverse(between.begin(), between.end());
    for (std::uint32_t n : between) best.points.push_back(g.node(n).position);
    best.points.push_back(to.door);
    best.nodes = between;
    best.length = std::abs(s1 - s0);
  } else {
    for (std::size_t i : {ka, ka + 1}) {
      for (std::size_t j : {kb, kb + 1}) {
        const auto p = astar_path(g, ca[i], cb[j]);
        if (!p) continue;
        const double total = distance(from.door, g.node(ca[i]).position) + p->cost +
                             distance(g.node(cb[j]).position, to.door);
        if (total < best.length) {
          best.length = total;
          best.nodes = p->nodes;
        }
      }
    }
    if (!std::isfinite(best.length)) throw Error(ErrorCode::no_valid_pair, "doors are not connected");
    best.points.push_back(from.door);
    for (std::uint32_t n : best.nodes) best.points.push_back(g.node(n).position);
    best.points.push_back(to.door);
  }
  best.corners = drop_collinear(best.points);
  return best;
}

MMNavTask generate_mmnav_task(const World& world, Rng& rng, Difficulty difficulty, const MMNavConfig& c) {
  const CityMap& map = world.map();
  const WaypointGraph& g = world.sidewalks();
  bool distinct_roads = false;
  for (const Building& b : map.buildings) distinct_roads |= b.road != map.buildings.front().road;
  if (!distinct_roads) throw Error(ErrorCode::no_valid_pair, "need buildings on two distinct road segments");

  for (int attempt = 0; attempt < c.max_attempts; ++attempt) {
    const Building& bs = nearest_building(map, sample_point(map.bounds, rng));
    const Building& bg = nearest_building(map, sample_point(map.bounds, rng));
    if (bs.road == bg.road) continue;
    const DoorRoute route = plan_door_route(map, g, bs, bg);
    if (route.length < c.min_path || route.length > c.max_path) continue;
    const auto& k = route.corners;
    std::vector<double> heads;
    for (std::size_t i = 0; i + 1 < k.size(); ++i) heads.push_back(cardinal_heading(cardinal_of(bearing(k[i], k[i + 1]))));
    bool reverse = false;
    for (std::size_t i = 1; i < heads.size(); ++i) reverse |= std::abs(heading_difference(heads[i - 1], heads[i])) > 135.0;
    if (reverse) continue;
    const int turns = static_cast<int>(heads.size()) - 1;
    const int instructions = turns == 0 ? 3 : 2 + 2 * turns;
    if (instructions < c.min_instructions || instructions > c.max_instructions) continue;

    MMNavTask t;
    t.id = "mmnav-" + std::to_string(map.spec.seed) + "-" + std::to_string(bs.id) + "-" + std::to_string(bg.id);
    t.spec = map.spec;
    t.difficulty = difficulty;
    t.start = {bs.door, cardinal_heading(bs.facing)};
    t.start_building = bs.id;
    t.goal_building = bg.id;
    t.path_nodes = route.nodes;
    t.path = route.points;
    t.corners = route.corners;
    t.path_length = route.length;
    t.step_budget = c.step_budget;

    Subtask align = make_subtask(world, SubtaskKind::orientation_alignment, {k.front(), heads.front()}, c);
    const Building* cue = &bs;
    if (!align.hint.has_landmark(bs.id) && !align.hint.landmarks.empty()) {
      cue = &map.buildings[align.hint.landmarks.front().building];
    }
    attach_landmark(align, map, *cue);
    t.subtasks.push_back(std::move(align));

    for (std::size_t i = 1; i + 1 < k.size(); ++i) {
      const Vec2 corner = k[i];
      const Vec2 in = heading_vector(heads[i - 1]);
      Subtask move = make_subtask(world, SubtaskKind::move_along_road, {corner, heads[i - 1]}, c);
      // Landmark: front door closest to the turn corner on the approach side.
      const Building* near = nullptr;
      double near_d = std::numeric_limits<double>::infinity();
      for (const Building& b : map.buildings) {
        if (dot(b.door - corner, in) > 0.0) continue;
        const double d = distance(b.door, corner);
        if (d < near_d) {
          near_d = d;
          near = &b;
        }
      }
      attach_landmark(move, map, near != nullptr ? *near : nearest_building(map, corner));
      t.subtasks.push_back(std::move(move));

      Subtask turn = make_subtask(world, SubtaskKind::turn_at_intersection, {corner, heads[i]}, c);
      turn.turn = heading_difference(heads[i - 1], heads[i]) < 0.0 ? Turn::left : Turn::right;
      t.subtasks.push_back(std::move(turn));
    }
    if (turns == 0) {
      Subtask move = make_subtask(world, SubtaskKind::move_along_road, {k.back(), heads.back()}, c);
      move.at_intersection = false;
      attach_landmark(move, map, bg);
      t.subtasks.push_back(std::move(move));
    }
    Subtask reach = make_subtask(world, SubtaskKind::reach_destination, {bg.door, cardinal_heading(bg.facing)}, c);
    attach_landmark(reach, map, bg);
    t.subtasks.push_back(std::move(reach));

    for (Subtask& s : t.subtasks) s.instruction = render_instruction(s);
    return t;
  }
  throw Error(ErrorCode::no_valid_pair, "no endpoint pair within " + std::to_string(c.max_attempts) + " attempts");
}

bool check_subtask_success(const World& world, std::uint32_t agent, const Subtask& s) {
  const Pose p = world.robot(agent).pose;
  if (manhattan(p.position, s.goal.pose.position) > s.goal.position_tolerance) return false;
  if (std::abs(heading_difference(p.heading, s.goal.pose.heading)) > s.goal.heading_tolerance) return false;
  if (s.kind == SubtaskKind::reach_destination && s.landmark) return world.observe(agent).has_landmark(*s.landmark);
  return true;
}

LandmarkMemory build_landmark_memory(const World& world, int streets, int per_street, Rng& rng) {
  if (streets <= 0 || per_street <= 0) throw Error(ErrorCode::domain_error, "memory needs positive street and landmark counts");
  const CityMap& map = world.map();
  std::vector<std::vector<std::uint32_t>> by_road(map.roads.size());
  for (const Building& b : map.buildings) by_road[b.road].push_back(b.id);
  std::vector<std::uint32_t> eligible;
  for (std::uint32_t r = 0; r < by_road.size(); ++r) {
    if (static_cast<int>(by_road[r].size()) >= per_street) eligible.push_back(r);
  }
  if (static_cast<int>(eligible.size()) < streets) {
    throw Error(ErrorCode::insufficient_landmarks, "only " + std::to_string(eligible.size()) + " streets carry " +
                                                       std::to_string(per_street) + " buildings");
  }
  rng.shuffle(eligible);
  LandmarkMemory m;
  for (int s = 0; s < streets; ++s) {
    const std::uint32_t road = eligible[static_cast<std::size_t>(s)];
    std::vector<std::uint32_t> ids = by_road[road];
    rng.shuffle(ids);
    for (int k = 0; k < per_street; ++k) {
      const Building& b = map.buildings[ids[static_cast<std::size_t>(k)]];
      MemoryEntry e;
      e.landmark = b.id;
      e.street = road;
      e.pose = {b.door, cardinal_heading(b.facing)};
      e.description = b.description();
      e.hint = world.scan_static(e.pose);
      m.entries.push_back(std::move(e));
    }
  }
  return m;
}

MRSTask generate_mrs_task(const World& world, Rng& rng, Difficulty difficulty, const MRSConfig& c) {
  const WaypointGraph& g = world.sidewalks();
  if (g.size() < 2) throw Error(ErrorCode::no_valid_pair, "fewer than two spawn points");
  MRSTask t;
  t.spec = world.map().spec;
  t.difficulty = difficulty;
  t.step_budget = c.step_budget;
  t.memory = build_landmark_memory(world, c.streets, c.per_street, rng);
  for (int attempt = 0; attempt < c.max_attempts; ++attempt) {
    const auto a = static_cast<std::uint32_t>(rng.below(g.size()));
    const std::vector<double> d = graph_distances(g, a);
    std::vector<std::uint32_t> ok;
    for (std::uint32_t b = 0; b < g.size(); ++b) {
      if (b != a && d[b] >= c.min_spawn_distance && d[b] <= c.max_spawn_distance) ok.push_back(b);
    }
    if (ok.empty()) continue;
    const std::uint32_t b = ok[rng.below(ok.size())];
    t.id = "mrs-" + std::to_string(world.map().spec.seed) + "-" + std::to_string(a) + "-" + std::to_string(b);
    t.node_main = a;
    t.node_follower = b;
    t.spawn_main = {g.node(a).position, 90.0 * static_cast<double>(rng.below(4))};
    t.spawn_follower = {g.node(b).position, 90.0 * static_cast<double>(rng.below(4))};
    t.oracle_distance = astar_path(g, a, b)->cost;
    return t;
  }
  throw Error(ErrorCode::no_valid_pair, "no spawn pair within the distance band");
}

bool check_meetup(const World& world, std::uint32_t issuer, std::uint32_t other) { return world.visible(issuer, other); }

}  // namespace citysim
