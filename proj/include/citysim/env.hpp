#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "citysim/city.hpp"
#include "citysim/raycast.hpp"
#include "citysim/traffic.hpp"
#include "citysim/waypoints.hpp"

namespace citysim {

// Simulation time is counted in integer units of 1/600 s so that both the
// 0.01 s buffer poll and the 1/60 s world tick land on exact values.
inline constexpr std::int64_t kTimeUnitsPerSecond = 600;
inline constexpr std::int64_t kUnitsPerTick = 10;

/// Seconds to time units; throws ConfigError unless the value is a
/// non-negative whole number of units.
std::int64_t to_time_units(double seconds);
inline double to_seconds(std::int64_t units) { return static_cast<double>(units) / kTimeUnitsPerSecond; }

enum class ActionKind : std::uint8_t {
  move_forward,
  move_backward,
  move_left,
  move_right,
  turn_left,
  turn_right,
  stay,
  evaluate,
  look,
  send_message,
  check_task_complete,
};
std::string_view action_name(ActionKind a);
ActionKind action_from_name(std::string_view s);
bool is_translation(ActionKind a);
bool is_rotation(ActionKind a);

enum class LookView : std::uint8_t { level, up, down };
std::string_view look_name(LookView v);
LookView look_from_name(std::string_view s);

struct RobotAction {
  ActionKind kind = ActionKind::stay;
  LookView view = LookView::level;  // look
  std::string text;                 // send_message

  static RobotAction of(ActionKind k) { return {k, LookView::level, {}}; }
  bool operator==(const RobotAction&) const = default;
};

struct EnvConfig {
  double robot_radius = 0.4;
  double step_length = 5.0;
  double translate_duration = 2.0;
  double rotate_duration = 1.0;
  double stay_duration = 0.5;
  double poll_interval = 0.01;
  int ray_count = 64;
  double fov = 90.0;
  double ray_range = 120.0;
  double ground_range = 3.0;  // look-down rays meet the ground at this distance
  std::size_t max_message = 128;
  TrafficConfig traffic;
};

struct VisibleLandmark {
  std::uint32_t building = 0;
  double bearing = 0.0;  // compass bearing of the nearest ray hitting it
  double range = 0.0;

  bool operator==(const VisibleLandmark&) const = default;
};

/// One ray fan: ray k points at heading - fov/2 + k * fov/ray_count, so ray
/// ray_count/2 is the center ray.
struct Scan {
  Pose pose;
  LookView view = LookView::level;
  std::vector<double> depth;
  std::vector<EntityClass> cls;
  std::vector<std::int64_t> ids;  // -1 for sky and ground
  std::vector<VisibleLandmark> landmarks;

  bool has_landmark(std::uint32_t building) const;
  bool operator==(const Scan&) const = default;
};

double ray_heading(const EnvConfig& c, double heading, int k);

enum class SafetyKind : std::uint8_t { static_collision, dynamic_collision, red_light_violation };
std::string_view safety_name(SafetyKind k);
SafetyKind safety_from_name(std::string_view s);

struct SafetyEvent {
  SafetyKind kind = SafetyKind::static_collision;
  std::uint64_t tick = 0;
  std::uint32_t agent = 0;
  EntityClass other = EntityClass::building;
  std::int64_t other_id = -1;  // for red lights: intersection id

  bool operator==(const SafetyEvent&) const = default;
};

struct SafetyCounts {
  int static_collisions = 0;
  int dynamic_collisions = 0;
  int red_light_violations = 0;

  void add(const SafetyEvent& e);
  bool operator==(const SafetyCounts&) const = default;
};

struct Robot {
  std::uint32_t id = 0;
  Pose pose;
  LookView view = LookView::level;
  // Translation in progress: linear from `from` to `to` over [start, end].
  bool moving = false;
  Vec2 from;
  Vec2 to;
  std::int64_t start = 0;
  std::int64_t end = 0;
  // Contact state for episode de-duplication, sorted.
  std::vector<std::pair<EntityClass, std::int64_t>> contacts;
  std::vector<std::int64_t> bands;  // crosswalk bands (4*intersection + arm) containing the center
  std::vector<SafetyEvent> pending;  // events not yet handed out
};

/// Robots plus the background world. Robots are kinematic discs; only static
/// obstacles stop them, moving agents only raise collision events.
class World {
 public:
  World(const CityMap& map, EnvConfig config = {});

  std::uint32_t add_robot(Pose pose);
  const Robot& robot(std::uint32_t id) const;
  std::size_t robot_count() const { return robots_.size(); }
  void set_pose(std::uint32_t id, Pose pose);

  const CityMap& map() const { return map_; }
  const EnvConfig& config() const { return config_; }
  const WaypointGraph& sidewalks() const { return sidewalks_; }
  const TrafficSim& traffic() const { return *traffic_; }

  std::int64_t now() const { return now_; }
  std::uint64_t tick() const { return traffic_->clock().tick; }

  /// Runs every world tick whose time is <= t, then sets the clock to t.
  void advance_to(std::int64_t t);

  /// Starts an action at the current time and returns its duration in time
  /// units. Translations are swept against static obstacles up front.
  std::int64_t begin(std::uint32_t id, const RobotAction& a);
  /// Completes the action in progress: final pose, event detection.
  void finish(std::uint32_t id, const RobotAction& a);
  std::vector<SafetyEvent> take_events(std::uint32_t id);

  /// Observation of a robot in its current view, including moving agents.
  Scan observe(std::uint32_t id) const;
  Scan observe(std::uint32_t id, LookView view) const;
  /// Observation from a pose on the static base map (hints, memory).
  Scan scan_static(Pose pose, LookView view = LookView::level) const;

  /// True iff some level-view ray of the observer hits the target's disc.
  bool visible(std::uint32_t observer, std::uint32_t target) const;

  /// Free distance for a disc moving from `p` along `heading`, up to `limit`.
  double sweep(Vec2 p, double heading, double limit) const;

  /// State hash over robots and traffic.
  std::uint64_t state_hash() const;

 private:
  Scan scan(Pose pose, LookView view, bool dynamic, std::int64_t exclude_robot) const;
  void detect(Robot& r);
  Vec2 position_at(const Robot& r, std::int64_t t) const;

  const CityMap& map_;
  EnvConfig config_;
  WaypointGraph sidewalks_;
  std::unique_ptr<TrafficSim> traffic_;
  RayScene inflated_;  // static footprints grown by the robot radius
  std::vector<Robot> robots_;
  std::int64_t now_ = 0;
};

struct Completion {
  std::uint32_t agent = 0;
  RobotAction action;
  std::int64_t start = 0;
  std::int64_t end = 0;
  std::uint64_t tick = 0;  // world tick at completion
  Pose before;
  Pose after;
  std::vector<SafetyEvent> events;
};

/// Polls at a fixed interval: advances the world to the poll time, completes
/// actions whose duration has elapsed, then starts pending actions of
/// available agents. All actions started in one poll run concurrently.
class ControlBuffer {
 public:
  explicit ControlBuffer(World& world);

  /// Queues an action for the next poll. Throws AgentBusy if the agent is
  /// executing or already has a pending action, UnknownAgent for bad ids.
  void submit(std::uint32_t agent, RobotAction action);
  bool available(std::uint32_t agent) const;
  bool idle() const;

  std::vector<Completion> poll();

  std::int64_t polls() const { return polls_; }
  std::int64_t interval() const { return interval_; }
  World& world() { return world_; }
  const World& world() const { return world_; }

 private:
  struct Slot {
    std::optional<RobotAction> pending;
    std::optional<RobotAction> running;
    std::int64_t start = 0;
    std::int64_t end = 0;
    Pose before;
  };
  Slot& slot(std::uint32_t agent);

  World& world_;
  std::int64_t interval_;
  std::int64_t polls_ = 0;
  std::vector<Slot> slots_;
};

}  // namespace citysim
