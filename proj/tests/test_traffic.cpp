#include <doctest.h>

#include <cmath>
#include <sstream>

#include <json.hpp>

#include "citysim/city.hpp"
#include "citysim/traffic.hpp"
#include "citysim/waypoints.hpp"

using namespace citysim;

namespace {

struct Lights {
  std::vector<TrafficLight> lights;
  std::vector<std::int32_t> index;

  LightView view() const { return {lights, index}; }
};

// Intersection 0 signalized with the given phase.
Lights one_light(Axis green, double remaining) {
  Lights l;
  l.lights.push_back({0, green, remaining, 30.0});
  l.index = {0};
  return l;
}

DrivePoint point(Vec2 p, Vec2 dir, double limit = 10.0) {
  DrivePoint d;
  d.p = p;
  d.dir = dir;
  d.speed_limit = limit;
  return d;
}

VehicleAgent northbound(double speed) {
  VehicleAgent v;
  v.speed = speed;
  v.points.push_back(point({0, 10000}, {0, 1}));
  v.points.push_back(point({0, 20000}, {0, 1}));
  v.points.push_back(point({0, 30000}, {0, 1}));
  return v;
}

}  // namespace

TEST_CASE("traffic light countdown and flip") {
  const TrafficLight a = advance_traffic_light({0, Axis::NS, 5, 30}, 1);
  CHECK(a.green_axis == Axis::NS);
  CHECK(a.remaining == 4);
  const TrafficLight b = advance_traffic_light({0, Axis::NS, 1, 30}, 1);
  CHECK(b.green_axis == Axis::EW);
  CHECK(b.remaining == 30);
}

TEST_CASE("phase durations are exactly the configured green over 10000 ticks") {
  const double dt = 1.0 / 60.0;
  TrafficLight l{0, Axis::NS, 30.0, 30.0};
  std::vector<int> lengths;
  int run = 0;
  for (int t = 0; t < 10000; ++t) {
    const TrafficLight next = advance_traffic_light(l, dt);
    ++run;
    if (next.green_axis != l.green_axis) {
      lengths.push_back(run);
      run = 0;
    }
    CHECK(next.remaining > 0);
    CHECK(next.remaining <= 30.0);
    l = next;
  }
  REQUIRE(lengths.size() == 5);
  for (int n : lengths) CHECK(n == 1800);
}

TEST_CASE("signal gate threshold rule") {
  CHECK(signal_gate({0, Axis::NS, 20, 30}, Axis::NS) == GateVerdict::proceed);
  CHECK(signal_gate({0, Axis::NS, 10, 30}, Axis::NS) == GateVerdict::wait);
  CHECK(signal_gate({0, Axis::NS, 15, 30}, Axis::NS) == GateVerdict::wait);
  CHECK(signal_gate({0, Axis::EW, 29, 30}, Axis::NS) == GateVerdict::wait);
}

TEST_CASE("vehicle steady state has zero acceleration and zero turn") {
  TrafficConfig c;
  VehicleAgent v = northbound(10.0);
  v.speed_state.primed = true;
  v.speed_state.prev_measurement = 10.0;
  const Lights none;
  vehicle_control_step(v, c, none.view());
  CHECK(v.speed == 10.0);
  CHECK(v.turn_rate == 0.0);
  CHECK(v.pose.heading == 0.0);
  CHECK(v.pose.position.y == doctest::Approx(10.0 * c.dt));
}

TEST_CASE("speed PID response from rest stays inside the envelope") {
  TrafficConfig c;
  VehicleAgent v = northbound(0.0);
  const Lights none;
  double prev = 0.0;
  double peak = 0.0;
  double settle = -1.0;
  const int ticks = static_cast<int>(std::round(20.0 / c.dt));
  for (int t = 1; t <= ticks; ++t) {
    vehicle_control_step(v, c, none.view());
    if (settle < 0) CHECK(v.speed >= prev);  // nondecreasing during the rise
    CHECK((v.speed - prev) / c.dt <= c.max_accel + 1e-9);
    prev = v.speed;
    peak = std::max(peak, v.speed);
    if (settle < 0 && std::abs(v.speed - 10.0) <= 0.5) settle = t * c.dt;
  }
  CHECK(settle > 0);
  CHECK(settle <= 10.0);
  CHECK(peak <= 11.0);
  MESSAGE("settled within 5% at " << settle << " s, peak " << peak);
}

TEST_CASE("pid_step conditional integration freezes while saturated") {
  PidState s;
  const PidGains g{1.0, 1.0, 0.0};
  pid_step(g, s, 100.0, 0.0, 0.1, -1.0, 1.0);
  CHECK(s.integral == 0.0);
  pid_step(g, s, 0.5, 0.0, 0.1, -1.0, 1.0);
  CHECK(s.integral == doctest::Approx(0.05));
}

TEST_CASE("vehicle waiting at a red stop line does not move") {
  TrafficConfig c;
  VehicleAgent v;
  DrivePoint stop = point({0, 0}, {0, 1});
  stop.stop_line = true;
  stop.gate = 0;
  stop.approach = Axis::NS;
  v.points = {stop, point({10, 10}, {1, 0}, 4.0), point({100, 10}, {1, 0})};
  const Lights red = one_light(Axis::EW, 20);
  for (int t = 0; t < 600; ++t) {
    const StepResult r = vehicle_control_step(v, c, red.view());
    CHECK(v.pose.position == Vec2{0, 0});
    CHECK_FALSE(r.entered);
  }
  CHECK(v.waiting);
}

TEST_CASE("vehicle approaching a red light stops before the line, then goes on green") {
  TrafficConfig c;
  VehicleAgent v = northbound(10.0);
  v.pose.position = {0, -60};
  DrivePoint stop = point({0, 0}, {0, 1});
  stop.stop_line = true;
  stop.gate = 0;
  v.points = {stop, point({0, 20}, {0, 1}), point({0, 200}, {0, 1})};
  Lights l = one_light(Axis::EW, 30);
  int entered = 0;
  for (int t = 0; t < 60 * 60; ++t) {
    l.lights[0] = advance_traffic_light(l.lights[0], c.dt);
    const StepResult r = vehicle_control_step(v, c, l.view());
    if (entered == 0 && l.lights[0].green_axis == Axis::EW) CHECK(v.pose.position.y <= 0.0);
    if (r.entered) {
      ++entered;
      CHECK_FALSE(r.under_wait);
      CHECK(signal_gate(l.lights[0], Axis::NS) == GateVerdict::proceed);
    }
  }
  CHECK(entered == 1);
  CHECK(v.pose.position.y > 20.0);
}

TEST_CASE("pedestrian heading clamp and straight walk") {
  TrafficConfig c;
  c.dt = 1.0;
  std::vector<Waypoint> nodes(2);
  nodes[0].position = {0, 0};
  nodes[1].id = 1;
  nodes[1].position = {0, 100};
  Edge e;
  e.a = 0;
  e.b = 1;
  e.length = 100;
  const WaypointGraph g(nodes, {e});
  const Lights none;

  PedestrianAgent p;
  p.route = {0, 1};
  p.next = 1;
  p.pose = {{0, 0}, 0.0};
  pedestrian_step(p, c, g, none.view());
  CHECK(p.pose.heading == 0.0);
  CHECK(p.pose.position == Vec2{0, 1.4});

  PedestrianAgent q;
  q.route = {0, 1};
  q.next = 1;
  q.max_turn_rate = 90.0;
  q.pose = {{0, 50}, 180.0};  // facing south, target north: error 180
  const double before = q.pose.heading;
  pedestrian_step(q, c, g, none.view());
  CHECK(std::abs(heading_difference(before, q.pose.heading)) == doctest::Approx(90.0));
}

TEST_CASE("pedestrian holds at a gated crosswalk until proceed") {
  CitySpec spec = hard_variant(CitySpec{});
  const CityMap m = generate_city(spec);
  const WaypointGraph g = build_waypoint_graph(m);
  const Edge* gated = nullptr;
  for (const Edge& e : g.edges()) {
    if (e.gated) {
      gated = &e;
      break;
    }
  }
  REQUIRE(gated);
  TrafficConfig c;
  Lights l;
  l.index.assign(m.intersections.size(), -1);
  l.index[gated->intersection] = 0;
  const Axis other = gated->crossing == Axis::NS ? Axis::EW : Axis::NS;
  l.lights.push_back({gated->intersection, other, 30, 30});

  PedestrianAgent p;
  p.route = {gated->a, gated->b, gated->a};
  p.next = 1;
  p.holding = true;
  p.pose = {g.node(gated->a).position, 0};
  for (int t = 0; t < 100; ++t) {
    pedestrian_step(p, c, g, l.view());
    CHECK(p.pose.position == g.node(gated->a).position);
  }
  l.lights[0] = {gated->intersection, gated->crossing, 29, 30};
  const StepResult r = pedestrian_step(p, c, g, l.view());
  CHECK(r.entered);
  CHECK_FALSE(r.under_wait);
  CHECK_FALSE(p.holding);
  CHECK(p.pose.position != g.node(gated->a).position);
}

TEST_CASE("pedestrians reach waypoints in route order") {
  CitySpec spec = hard_variant(CitySpec{});
  spec.seed = 3;
  const CityMap m = generate_city(spec);
  const WaypointGraph g = build_waypoint_graph(m);
  TrafficSim sim(m, g);
  std::vector<std::size_t> prev_next;
  std::vector<std::uint32_t> prev_target;
  for (const auto& p : sim.pedestrians()) prev_target.push_back(p.route[p.next]);
  for (int t = 0; t < 20000; ++t) {
    sim.tick();
    for (std::size_t i = 0; i < sim.pedestrians().size(); ++i) {
      const PedestrianAgent& p = sim.pedestrians()[i];
      const std::uint32_t target = p.route[p.next];
      if (target != prev_target[i]) {
        // The waypoint just left behind was reached, not skipped.
        CHECK(distance(p.pose.position, g.node(prev_target[i]).position) <= sim.config().pedestrian_arrival + p.walk_speed * sim.config().dt);
        CHECK(g.edge_between(prev_target[i], target) != nullptr);
        prev_target[i] = target;
      }
    }
  }
}

TEST_CASE("empty world only advances the clock") {
  CitySpec spec;
  const CityMap m = generate_city(spec);
  const WaypointGraph g = build_waypoint_graph(m);
  TrafficSim sim(m, g);
  CHECK(sim.vehicles().empty());
  const auto lights = sim.lights();
  const auto& events = sim.tick();
  CHECK(events.empty());
  CHECK(sim.clock().tick == 1);
  REQUIRE(sim.lights().size() == lights.size());
  for (std::size_t i = 0; i < lights.size(); ++i) {
    CHECK(sim.lights()[i] == advance_traffic_light(lights[i], sim.config().dt));
  }
}

TEST_CASE("traffic replay is deterministic") {
  CitySpec spec = hard_variant(CitySpec{});
  spec.seed = 11;
  const CityMap m = generate_city(spec);
  const WaypointGraph g = build_waypoint_graph(m);
  auto run = [&] {
    TrafficSim sim(m, g);
    for (int t = 0; t < 1000; ++t) sim.tick();
    return sim.state_hash();
  };
  const std::uint64_t a = run();
  CHECK(a == run());
  TrafficSim other(m, g);
  other.tick();
  CHECK(other.state_hash() != a);
}

TEST_CASE("10000 ticks with 50 vehicles: no gated entry under a wait verdict, kinematic bounds hold") {
  CitySpec spec = hard_variant(CitySpec{});
  spec.seed = 2;
  const CityMap m = generate_city(spec);
  const WaypointGraph g = build_waypoint_graph(m);
  TrafficSim sim(m, g);
  REQUIRE(sim.vehicles().size() == 50);
  const double dt = sim.config().dt;
  std::vector<double> speed;
  std::vector<double> heading;
  for (int t = 0; t < 10000; ++t) {
    speed.clear();
    heading.clear();
    for (const auto& v : sim.vehicles()) speed.push_back(v.speed);
    for (const auto& p : sim.pedestrians()) heading.push_back(p.pose.heading);
    sim.tick();
    bool ok = true;
    for (std::size_t i = 0; i < speed.size(); ++i) {
      const double dv = sim.vehicles()[i].speed - speed[i];
      ok = ok && dv / dt <= sim.config().max_accel + 1e-6 && -dv / dt <= sim.config().max_decel + 1e-6;
      ok = ok && sim.vehicles()[i].speed >= 0 && sim.vehicles()[i].speed <= sim.config().max_speed;
    }
    for (std::size_t i = 0; i < heading.size(); ++i) {
      const auto& p = sim.pedestrians()[i];
      ok = ok && std::abs(heading_difference(heading[i], p.pose.heading)) <= p.max_turn_rate * dt + 1e-9;
    }
    if (!ok) {
      FAIL("kinematic bound violated at tick " << t);
      break;
    }
  }
  CHECK(sim.stats().crosswalk_entries > 0);
  CHECK(sim.stats().entries_under_wait == 0);
  for (const auto& v : sim.vehicles()) CHECK(m.on_carriageway(v.pose.position));
}

TEST_CASE("trajectory dump is one record per agent") {
  CitySpec spec = hard_variant(CitySpec{}, 0.0, 3, 4);
  const CityMap m = generate_city(spec);
  const WaypointGraph g = build_waypoint_graph(m);
  TrafficSim sim(m, g);
  sim.tick();
  std::ostringstream out;
  sim.dump(out);
  std::istringstream in(out.str());
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j["tick"] == 1);
    for (const char* k : {"id", "kind", "x", "y", "heading", "speed"}) CHECK(j.contains(k));
    ++n;
  }
  CHECK(n == 7);
}
