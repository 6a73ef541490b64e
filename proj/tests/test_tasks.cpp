#include <doctest.h>

#include <cmath>
#include <set>

#include "citysim/error.hpp"
#include "citysim/tasks.hpp"
#include "fixtures.hpp"

using namespace citysim;
using namespace citysim::test;

namespace {

struct Generated {
  CityMap map;
  std::vector<MMNavTask> tasks;
};

Generated mmnav_on(std::uint64_t seed, int count, Difficulty d = Difficulty::easy) {
  Generated g{generate_city(variant_for(seeded(seed), d)), {}};
  World w(g.map);
  Rng rng(derive_seed(seed, Stream::tasks));
  for (int i = 0; i < count; ++i) g.tasks.push_back(generate_mmnav_task(w, rng, d));
  return g;
}

bool grammar_ok(const std::vector<Subtask>& s) {
  // align (move turn)* move? reach, with the trailing move only on straight routes.
  if (s.size() < 3 || s.front().kind != SubtaskKind::orientation_alignment) return false;
  if (s.back().kind != SubtaskKind::reach_destination) return false;
  std::size_t i = 1;
  int turns = 0;
  while (i + 1 < s.size() && s[i].kind == SubtaskKind::move_along_road &&
         s[i + 1].kind == SubtaskKind::turn_at_intersection) {
    i += 2;
    ++turns;
  }
  if (turns == 0) return s.size() == 3 && s[1].kind == SubtaskKind::move_along_road && !s[1].at_intersection;
  return i == s.size() - 1;
}

}  // namespace

TEST_CASE("names round trip") {
  for (Difficulty d : {Difficulty::easy, Difficulty::hard}) CHECK(difficulty_from_name(difficulty_name(d)) == d);
  for (int k = 0; k < 4; ++k) {
    const auto s = static_cast<SubtaskKind>(k);
    CHECK(subtask_from_name(subtask_name(s)) == s);
  }
  for (RelativeSide r : {RelativeSide::left, RelativeSide::right, RelativeSide::opposite}) {
    CHECK(side_from_name(side_name(r)) == r);
  }
  CHECK_THROWS_AS(subtask_from_name("jump"), Error);
}

TEST_CASE("instruction templates") {
  Subtask s;
  s.kind = SubtaskKind::orientation_alignment;
  s.goal.pose = {{0, 0}, 0.0};
  s.landmark_description = "a red brick building";
  s.side = RelativeSide::left;
  const std::string text = render_instruction(s);
  CHECK(text.rfind("Face north.", 0) == 0);
  CHECK(text.find("on your left") != std::string::npos);
  CHECK(render_instruction(s) == text);

  s.kind = SubtaskKind::turn_at_intersection;
  s.turn = Turn::left;
  CHECK(render_instruction(s).find("Turn left at the intersection") != std::string::npos);
  s.turn = Turn::right;
  CHECK(render_instruction(s).find("Turn right at the intersection") != std::string::npos);

  s.kind = SubtaskKind::move_along_road;
  s.side = RelativeSide::opposite;
  CHECK(render_instruction(s).find("stop at the intersection when you see a red brick building") != std::string::npos);
  CHECK(render_instruction(s).find("opposite") != std::string::npos);
}

TEST_CASE("generated tasks follow the category grammar") {
  int straight = 0, turning = 0;
  for (std::uint64_t seed = 1; seed <= 15; ++seed) {
    const Generated g = mmnav_on(seed, 4);
    for (const MMNavTask& t : g.tasks) {
      CAPTURE(t.id);
      CHECK(grammar_ok(t.subtasks));
      const auto n = t.subtasks.size();
      CHECK(n >= 3);
      CHECK(n <= 4);
      const int turns = static_cast<int>(t.corners.size()) - 2;
      CHECK(static_cast<int>(n) == (turns == 0 ? 3 : 2 + 2 * turns));
      (turns == 0 ? straight : turning)++;
      // The route connects the start door to the final goal.
      CHECK(t.path.front() == t.start.position);
      CHECK(t.path.back() == t.final_goal().pose.position);
      CHECK(t.path_length >= 100.0);
      CHECK(t.path_length <= 1200.0);
      CHECK(g.map.buildings[t.start_building].road != g.map.buildings[t.goal_building].road);
      for (const Subtask& s : t.subtasks) {
        CHECK(s.instruction == render_instruction(s));
        CHECK(s.goal.position_tolerance == 10.0);
        CHECK(s.goal.heading_tolerance == 45.0);
      }
    }
  }
  CHECK(straight > 0);
  CHECK(turning > 0);
}

TEST_CASE("turn subtasks carry the post-turn pose") {
  int checked = 0;
  for (std::uint64_t seed = 1; seed <= 15; ++seed) {
    for (const MMNavTask& t : mmnav_on(seed, 4).tasks) {
      for (std::size_t i = 1; i + 1 < t.subtasks.size(); ++i) {
        const Subtask& s = t.subtasks[i];
        if (s.kind != SubtaskKind::turn_at_intersection) continue;
        const Subtask& move = t.subtasks[i - 1];
        CHECK(move.kind == SubtaskKind::move_along_road);
        CHECK(move.goal.pose.position == s.goal.pose.position);
        CHECK(s.goal.pose.heading == turn_heading(move.goal.pose.heading, s.turn));
        CHECK(s.hint.pose == s.goal.pose);
        const std::string word = s.turn == Turn::left ? "Turn left" : "Turn right";
        CHECK(s.instruction.find(word) != std::string::npos);
        ++checked;
      }
    }
  }
  CHECK(checked > 5);
}

TEST_CASE("start pose and alignment") {
  for (const MMNavTask& t : mmnav_on(7, 6).tasks) {
    const Subtask& a = t.subtasks.front();
    CHECK(a.goal.pose.position == t.start.position);
    // Alignment heading is the first leg of the route.
    CHECK(a.goal.pose.heading == cardinal_heading(cardinal_of(bearing(t.corners[0], t.corners[1]))));
    CHECK(a.instruction.rfind("Face " + std::string(cardinal_name(cardinal_of(a.goal.pose.heading))) + ".", 0) == 0);
    const Subtask& r = t.subtasks.back();
    REQUIRE(r.landmark.has_value());
    CHECK(*r.landmark == t.goal_building);
  }
}

TEST_CASE("hints equal live observation at the goal pose on easy maps") {
  for (std::uint64_t seed : {3u, 11u}) {
    const Generated g = mmnav_on(seed, 3);
    World w(g.map);
    const auto robot = w.add_robot({{0, 0}, 0});
    for (const MMNavTask& t : g.tasks) {
      for (const Subtask& s : t.subtasks) {
        w.set_pose(robot, s.goal.pose);
        CHECK(w.observe(robot) == s.hint);
        CHECK(check_subtask_success(w, robot, s));
      }
    }
  }
}

TEST_CASE("subtask checker tolerances") {
  const Generated g = mmnav_on(5, 1);
  World w(g.map);
  const auto robot = w.add_robot({{0, 0}, 0});
  const MMNavTask& t = g.tasks.front();
  const Subtask& move = t.subtasks[1];
  const Pose goal = move.goal.pose;
  w.set_pose(robot, goal);
  CHECK(check_subtask_success(w, robot, move));
  w.set_pose(robot, {goal.position, normalize_heading(goal.heading + 180.0)});
  CHECK_FALSE(check_subtask_success(w, robot, move));
  w.set_pose(robot, {goal.position, normalize_heading(goal.heading + 44.0)});
  CHECK(check_subtask_success(w, robot, move));
  w.set_pose(robot, {goal.position, normalize_heading(goal.heading - 46.0)});
  CHECK_FALSE(check_subtask_success(w, robot, move));
  w.set_pose(robot, {goal.position + Vec2{6, 4}, goal.heading});
  CHECK(check_subtask_success(w, robot, move));
  w.set_pose(robot, {goal.position + Vec2{6, 4.5}, goal.heading});
  CHECK_FALSE(check_subtask_success(w, robot, move));

  // Reach also needs the goal building in view.
  const Subtask& reach = t.subtasks.back();
  w.set_pose(robot, reach.goal.pose);
  CHECK(check_subtask_success(w, robot, reach));
  Subtask other = reach;
  other.landmark = t.start_building;
  CHECK_FALSE(check_subtask_success(w, robot, other));
}

TEST_CASE("generation is deterministic") {
  const Generated a = mmnav_on(21, 3);
  const Generated b = mmnav_on(21, 3);
  for (std::size_t i = 0; i < a.tasks.size(); ++i) {
    CHECK(a.tasks[i].id == b.tasks[i].id);
    CHECK(a.tasks[i].start == b.tasks[i].start);
    CHECK(a.tasks[i].path == b.tasks[i].path);
    REQUIRE(a.tasks[i].subtasks.size() == b.tasks[i].subtasks.size());
    for (std::size_t k = 0; k < a.tasks[i].subtasks.size(); ++k) {
      CHECK(a.tasks[i].subtasks[k].instruction == b.tasks[i].subtasks[k].instruction);
      CHECK(a.tasks[i].subtasks[k].hint == b.tasks[i].subtasks[k].hint);
    }
  }
}

TEST_CASE("no valid pair on a single-road map") {
  const CityMap m = test_map({{{180, 20}, {188, 40}}, {{180, 60}, {188, 80}}});
  World w(m);
  Rng rng(1);
  CHECK_THROWS_AS(generate_mmnav_task(w, rng, Difficulty::easy), Error);
  try {
    generate_mmnav_task(w, rng, Difficulty::easy);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::no_valid_pair);
  }
}

TEST_CASE("route length calibration") {
  double mm = 0.0, mrs = 0.0;
  int n = 0;
  for (std::uint64_t seed = 100; seed < 150; ++seed) {
    const CityMap m = generate_city(variant_for(seeded(seed), Difficulty::easy));
    World w(m);
    Rng rng(derive_seed(seed, Stream::tasks));
    for (int k = 0; k < 2; ++k) mm += generate_mmnav_task(w, rng, Difficulty::easy).path_length;
    mrs += generate_mrs_task(w, rng, Difficulty::easy).oracle_distance;
    mrs += generate_mrs_task(w, rng, Difficulty::easy).oracle_distance;
    n += 2;
  }
  CHECK(mm / n >= 250.0);
  CHECK(mm / n <= 750.0);
  CHECK(mrs / n >= 300.0);
  CHECK(mrs / n <= 900.0);
}

TEST_CASE("landmark memory") {
  const CityMap m = generate_city(variant_for(seeded(9), Difficulty::easy));
  World w(m);
  Rng rng(4);
  const LandmarkMemory one = build_landmark_memory(w, 1, 1, rng);
  CHECK(one.entries.size() == 1);

  const LandmarkMemory mem = build_landmark_memory(w, 10, 2, rng);
  CHECK(mem.entries.size() == 20);
  std::set<std::uint32_t> streets, landmarks;
  const auto robot = w.add_robot({{0, 0}, 0});
  for (const MemoryEntry& e : mem.entries) {
    streets.insert(e.street);
    landmarks.insert(e.landmark);
    const Building& b = m.buildings[e.landmark];
    CHECK(e.street == b.road);
    CHECK(e.pose.position == b.door);
    CHECK(e.pose.heading == cardinal_heading(b.facing));
    CHECK(e.description == b.description());
    w.set_pose(robot, e.pose);
    CHECK(w.observe(robot) == e.hint);
  }
  CHECK(streets.size() >= 10);
  CHECK(landmarks.size() == 20);

  CHECK_THROWS_AS(build_landmark_memory(w, 100000, 1, rng), Error);
  CHECK_THROWS_AS(build_landmark_memory(w, 0, 1, rng), Error);
}

TEST_CASE("mrs tasks") {
  const CityMap m = generate_city(variant_for(seeded(12), Difficulty::easy));
  World w(m);
  Rng a(derive_seed(12, Stream::tasks)), b(derive_seed(12, Stream::tasks));
  for (int i = 0; i < 10; ++i) {
    const MRSTask t = generate_mrs_task(w, a, Difficulty::easy);
    const MRSTask u = generate_mrs_task(w, b, Difficulty::easy);
    CHECK(t.id == u.id);
    CHECK(t.spawn_main == u.spawn_main);
    CHECK(t.spawn_follower == u.spawn_follower);
    CHECK(t.node_main != t.node_follower);
    CHECK(t.spawn_main.position == w.sidewalks().node(t.node_main).position);
    CHECK(t.spawn_follower.position == w.sidewalks().node(t.node_follower).position);
    CHECK(t.oracle_distance >= 100.0);
    CHECK(t.oracle_distance <= 1000.0);
    CHECK(t.oracle_distance == doctest::Approx(astar_path(w.sidewalks(), t.node_main, t.node_follower)->cost));
    CHECK(std::fmod(t.spawn_main.heading, 90.0) == 0.0);
    CHECK(t.memory.entries.size() == 20);
    CHECK(t.step_budget == 600);
  }
}

TEST_CASE("meetup needs the other robot in view") {
  SUBCASE("facing each other") {
    const CityMap m = test_map({});
    World w(m);
    const auto a = w.add_robot({{100, 50}, 90});
    const auto b = w.add_robot({{110, 50}, 270});
    CHECK(check_meetup(w, a, b));
    CHECK(check_meetup(w, b, a));
  }
  SUBCASE("issuer facing away") {
    const CityMap m = test_map({});
    World w(m);
    const auto a = w.add_robot({{100, 50}, 270});
    const auto b = w.add_robot({{101, 50}, 270});
    CHECK_FALSE(check_meetup(w, a, b));
    // The other robot faces the issuer, so the check is one-sided.
    CHECK(check_meetup(w, b, a));
  }
  SUBCASE("building between") {
    const CityMap m = test_map({{{104, 40}, {106, 60}}});
    World w(m);
    const auto a = w.add_robot({{100, 50}, 90});
    const auto b = w.add_robot({{110, 50}, 270});
    CHECK_FALSE(check_meetup(w, a, b));
    CHECK_FALSE(check_meetup(w, b, a));
  }
}
