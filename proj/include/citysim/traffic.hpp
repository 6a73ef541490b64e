#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <ostream>
#include <vector>

#include "citysim/city.hpp"
#include "citysim/waypoints.hpp"

namespace citysim {

struct SimClock {
  std::uint64_t tick = 0;
  double dt = 1.0 / 60.0;

  double time() const { return static_cast<double>(tick) * dt; }
};

struct TrafficLight {
  std::uint32_t intersection = 0;
  Axis green_axis = Axis::NS;
  double remaining = 30.0;
  double green = 30.0;

  bool operator==(const TrafficLight&) const = default;
};

/// Counts down; on reaching zero the phase flips and the countdown restarts
/// at the full green duration.
TrafficLight advance_traffic_light(TrafficLight light, double dt);

enum class GateVerdict : std::uint8_t { proceed, wait };

/// Proceed only on green for the approach axis with more than `threshold`
/// seconds of green left.
GateVerdict signal_gate(const TrafficLight& light, Axis approach, double threshold = 15.0);

struct PidGains {
  double kp = 0.0;
  double ki = 0.0;
  double kd = 0.0;
};

struct TrafficConfig {
  double dt = 1.0 / 60.0;
  double green = 30.0;
  double proceed_threshold = 15.0;

  double cruise_speed = 10.0;
  double max_speed = 15.0;
  double turn_speed = 4.0;
  double max_accel = 3.0;
  double max_decel = 6.0;
  double brake_decel = 3.0;  // planned deceleration toward stop lines
  PidGains speed_pid{0.8, 0.1, 0.05};
  PidGains heading_pid{2.0, 0.0, 0.2};
  double max_turn_rate = 90.0;  // deg/s, vehicles
  double arrival_radius = 1.0;
  double lane_offset = 3.0;
  double stop_offset = 10.0;    // stop line distance from the intersection center
  double commit_margin = 1.0;   // seconds of slack demanded before committing to a green

  double walk_speed = 1.4;
  double pedestrian_turn_rate = 360.0;
  double pedestrian_arrival = 0.5;

  int route_hops = 40;
  RouteWeights weights;

  double vehicle_radius = 1.0;
  double pedestrian_radius = 0.3;
};

struct PidState {
  double integral = 0.0;
  double prev_measurement = 0.0;
  bool primed = false;
};

struct DrivePoint {
  Vec2 p;
  Vec2 dir;                 // travel direction at the point
  double speed_limit = 10.0;
  std::int32_t gate = -1;   // intersection id when this is a signalized stop line
  Axis approach = Axis::NS;
  bool stop_line = false;
};

struct VehicleAgent {
  std::uint32_t id = 0;
  Pose pose;
  double speed = 0.0;
  double turn_rate = 0.0;  // deg/s applied last tick
  std::vector<std::uint32_t> route;  // intersections, first entry is behind the vehicle
  std::size_t planned = 1;           // route[planned] is the next intersection without points
  std::deque<DrivePoint> points;
  PidState speed_state;
  PidState heading_state;
  double target_speed = 10.0;
  bool committed = false;
  bool waiting = false;
  std::uint64_t seed = 0;  // route stream: each re-issue draws from derive_seed(seed, routes_issued)
  std::uint32_t routes_issued = 0;
};

struct PedestrianAgent {
  std::uint32_t id = 0;
  Pose pose;
  double walk_speed = 1.4;
  double max_turn_rate = 360.0;
  std::vector<std::uint32_t> route;  // sidewalk waypoints
  std::size_t next = 0;              // index of the waypoint being walked to
  bool holding = false;              // at a corner, waiting for a gated crosswalk
  std::uint64_t seed = 0;
  std::uint32_t routes_issued = 0;
};

/// Read-only view of the light table, indexed by intersection id.
struct LightView {
  std::span<const TrafficLight> lights;
  std::span<const std::int32_t> index;  // intersection id -> light, -1 if unsignalized

  const TrafficLight* at(std::uint32_t intersection) const {
    if (intersection >= index.size() || index[intersection] < 0) return nullptr;
    return &lights[static_cast<std::size_t>(index[intersection])];
  }
};

struct StepResult {
  bool entered = false;      // started a signal-gated crossing this tick
  bool under_wait = false;   // ... while the gate, re-evaluated, said wait
  bool began_wait = false;   // started holding at a gate this tick
  bool route_done = false;   // needs more route
  std::int32_t intersection = -1;
};

/// One control step of a vehicle. Speed: PID on (target - speed), acceleration
/// clamped to [-max_decel, max_accel]. Heading: PID on the bearing error to
/// the next drive point, turn rate clamped. Signalized stop lines are crossed
/// only on a proceed verdict (or a commitment made with enough green left).
StepResult vehicle_control_step(VehicleAgent& v, const TrafficConfig& c, const LightView& lights);

/// One step of a pedestrian: turn toward the next waypoint by at most
/// max_turn_rate * dt, then walk. Gated crosswalk edges start only on proceed.
StepResult pedestrian_step(PedestrianAgent& p, const TrafficConfig& c, const WaypointGraph& g, const LightView& lights);

enum class TrafficEventKind : std::uint8_t { route_complete, gate_wait, crosswalk_entry };

struct TrafficEvent {
  std::uint64_t tick = 0;
  TrafficEventKind kind = TrafficEventKind::route_complete;
  AgentKind agent_kind = AgentKind::vehicle;
  std::uint32_t agent = 0;
  std::int32_t intersection = -1;
};

struct TrafficStats {
  std::uint64_t crosswalk_entries = 0;
  std::uint64_t entries_under_wait = 0;  // must stay zero
  std::uint64_t gate_waits = 0;
  std::uint64_t routes_completed = 0;
};

/// Background world: lights, vehicles, pedestrians on a fixed timestep.
class TrafficSim {
 public:
  TrafficSim(const CityMap& map, const WaypointGraph& sidewalks, TrafficConfig config = {});

  /// Advances lights, then vehicles, then pedestrians, each in ascending id.
  const std::vector<TrafficEvent>& tick();

  const SimClock& clock() const { return clock_; }
  const TrafficConfig& config() const { return config_; }
  const std::vector<TrafficLight>& lights() const { return lights_; }
  const std::vector<VehicleAgent>& vehicles() const { return vehicles_; }
  const std::vector<PedestrianAgent>& pedestrians() const { return pedestrians_; }
  const TrafficStats& stats() const { return stats_; }

  /// Light of a signalized intersection, nullptr otherwise.
  const TrafficLight* light_at(std::uint32_t intersection) const;
  GateVerdict gate(std::uint32_t intersection, Axis axis) const;

  std::uint64_t state_hash() const;

  /// One JSON line per agent: tick, id, kind, x, y, heading, speed.
  void dump(std::ostream& out) const;

 private:
  void plan_vehicle(VehicleAgent& v);
  void extend_pedestrian(PedestrianAgent& p);

  const CityMap& map_;
  const WaypointGraph& sidewalks_;
  WaypointGraph roads_;
  TrafficConfig config_;
  SimClock clock_;
  std::vector<TrafficLight> lights_;
  std::vector<std::int32_t> light_index_;  // by intersection id
  std::vector<VehicleAgent> vehicles_;
  std::vector<PedestrianAgent> pedestrians_;
  std::vector<TrafficEvent> events_;
  TrafficStats stats_;
};

/// Speed-channel PID with derivative on measurement and conditional
/// integration (the integrator freezes while the output saturates).
double pid_step(const PidGains& g, PidState& s, double error, double measurement, double dt, double lo, double hi);

}  // namespace citysim
