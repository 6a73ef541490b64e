#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "citysim/city.hpp"
#include "citysim/env.hpp"
#include "citysim/rng.hpp"
#include "citysim/waypoints.hpp"

namespace citysim {

enum class Difficulty : std::uint8_t { easy, hard };
std::string_view difficulty_name(Difficulty d);
Difficulty difficulty_from_name(std::string_view s);

/// The map variant for a difficulty: hard adds elements and traffic.
CitySpec variant_for(const CitySpec& base, Difficulty d);

enum class SubtaskKind : std::uint8_t { orientation_alignment, move_along_road, turn_at_intersection, reach_destination };
std::string_view subtask_name(SubtaskKind k);
SubtaskKind subtask_from_name(std::string_view s);

enum class RelativeSide : std::uint8_t { left, right, opposite };
std::string_view side_name(RelativeSide s);
RelativeSide side_from_name(std::string_view s);

struct Goal {
  Pose pose;
  double position_tolerance = 10.0;  // Manhattan meters
  double heading_tolerance = 45.0;   // degrees
};

struct Subtask {
  SubtaskKind kind = SubtaskKind::orientation_alignment;
  Goal goal;
  Scan hint;  // static-map observation at the goal pose
  std::optional<std::uint32_t> landmark;
  std::string landmark_description;
  RelativeSide side = RelativeSide::left;
  Turn turn = Turn::left;      // turn subtasks
  bool at_intersection = true;  // move subtasks: stop at a turn rather than at the destination
  std::string instruction;
};

/// Template text for a subtask; depends only on the subtask's fields.
std::string render_instruction(const Subtask& s);

/// Side of a building as seen from a pose: across a carriageway is
/// "opposite", otherwise left or right of the heading.
RelativeSide relative_side(const CityMap& map, Pose pose, const Building& b);

/// Sidewalk route between two front doors: door, waypoints, door.
struct DoorRoute {
  std::vector<std::uint32_t> nodes;
  std::vector<Vec2> points;   // door, node positions, door
  std::vector<Vec2> corners;  // points with collinear interior points dropped
  double length = 0.0;
};
DoorRoute plan_door_route(const CityMap& map, const WaypointGraph& g, const Building& from, const Building& to);

struct MMNavConfig {
  double position_tolerance = 10.0;
  double heading_tolerance = 45.0;
  int min_instructions = 2;
  int max_instructions = 4;
  double min_path = 100.0;
  double max_path = 1200.0;
  int max_attempts = 2000;
  int step_budget = 1000;
};

struct MMNavTask {
  std::string id;
  CitySpec spec;  // map variant the task was generated on
  Difficulty difficulty = Difficulty::easy;
  Pose start;
  std::uint32_t start_building = 0;
  std::uint32_t goal_building = 0;
  std::vector<Subtask> subtasks;
  std::vector<std::uint32_t> path_nodes;
  std::vector<Vec2> path;     // door, waypoints, door
  std::vector<Vec2> corners;  // path with collinear points dropped
  double path_length = 0.0;
  int step_budget = 1000;

  const Goal& final_goal() const { return subtasks.back().goal; }
};

/// Samples endpoint pairs until the door-to-door route yields an allowed
/// instruction count; throws NoValidPair after max_attempts.
MMNavTask generate_mmnav_task(const World& world, Rng& rng, Difficulty difficulty, const MMNavConfig& config = {});

bool check_subtask_success(const World& world, std::uint32_t agent, const Subtask& subtask);

struct MemoryEntry {
  std::uint32_t landmark = 0;
  std::uint32_t street = 0;
  Pose pose;  // front door, facing the building
  std::string description;
  Scan hint;
};

struct LandmarkMemory {
  std::vector<MemoryEntry> entries;
};

/// `streets` roads with at least `per_street` buildings, `per_street`
/// buildings each, all without replacement. Throws InsufficientLandmarks.
LandmarkMemory build_landmark_memory(const World& world, int streets, int per_street, Rng& rng);

struct MRSConfig {
  int streets = 10;
  int per_street = 2;
  double min_spawn_distance = 100.0;
  double max_spawn_distance = 1000.0;
  int step_budget = 600;
  int max_attempts = 2000;
};

struct MRSTask {
  std::string id;
  CitySpec spec;
  Difficulty difficulty = Difficulty::easy;
  LandmarkMemory memory;  // main robot only
  Pose spawn_main;
  Pose spawn_follower;
  std::uint32_t node_main = 0;
  std::uint32_t node_follower = 0;
  double oracle_distance = 0.0;  // sidewalk graph distance between spawns
  int step_budget = 600;
};

MRSTask generate_mrs_task(const World& world, Rng& rng, Difficulty difficulty, const MRSConfig& config = {});

/// Rendezvous verdict for a check issued by `issuer`.
bool check_meetup(const World& world, std::uint32_t issuer, std::uint32_t other);

}  // namespace citysim
