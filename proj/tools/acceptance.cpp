// Acceptance suite: one PASS/FAIL line per criterion. Every check uses an
// oracle that does not share code with the part under test where possible.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <queue>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "audit.hpp"
#include "citysim/city_io.hpp"
#include "citysim/dataset.hpp"
#include "citysim/episode.hpp"
#include "citysim/error.hpp"
#include "citysim/oracle.hpp"
#include "citysim/traffic.hpp"
#include "citysim/waypoints.hpp"

using namespace citysim;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

CitySpec default_spec(std::uint64_t seed) {
  CitySpec s;
  s.seed = seed;
  return s;
}

CitySpec random_spec(Rng& rng, std::uint64_t seed) {
  CitySpec spec;
  spec.seed = seed;
  spec.target_area_km2 = rng.uniform(0.5, 3.0);
  spec.roads.initial_roads = static_cast<int>(rng.range(1, 4));
  spec.roads.max_depth = static_cast<int>(rng.range(0, 20));
  spec.roads.branch_probability = rng.uniform();
  spec.roads.segment_length = rng.uniform(120, 480);
  return rng.bernoulli(0.5) ? hard_variant(spec) : spec;
}

// 1. Same spec, same bytes; same traffic start, same state after 1000 ticks.
Verdict determinism() {
  const auto t0 = Clock::now();
  Rng rng(2024);
  int byte_equal = 0, hash_equal = 0;
  for (std::uint64_t i = 0; i < 20; ++i) {
    const CitySpec spec = random_spec(rng, 1000 + i);
    byte_equal += serialize_map(generate_city(spec)) == serialize_map(generate_city(spec)) ? 1 : 0;

    const CityMap m = generate_city(hard_variant(spec));
    const WaypointGraph g = build_waypoint_graph(m);
    auto run = [&] {
      TrafficSim sim(m, g);
      for (int t = 0; t < 1000; ++t) sim.tick();
      return sim.state_hash();
    };
    hash_equal += run() == run() ? 1 : 0;
  }
  const double secs = seconds_since(t0);
  return {byte_equal == 20 && hash_equal == 20 && secs < 120.0,
          "byte-identical " + std::to_string(byte_equal) + "/20, replay hash " + std::to_string(hash_equal) +
              "/20, " + fmt("%.1f s (limit 120)", secs)};
}

// 2. Chain spacing and corner waypoints, read straight off the graph.
Verdict waypoint_geometry() {
  std::size_t chains = 0, bad_edges = 0, bad_chains = 0, four_way = 0, bad_corners = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const CityMap m = generate_city(default_spec(seed));
    const WaypointGraph g = build_waypoint_graph(m);
    for (const RoadSegment& r : m.roads) {
      for (int side : {-1, 1}) {
        const auto chain = g.chain(r.id, side);
        ++chains;
        int short_edges = 0;
        for (std::size_t k = 0; k + 1 < chain.size(); ++k) {
          const double len = distance(g.node(chain[k]).position, g.node(chain[k + 1]).position);
          if (!(len > 0.0 && len <= kWaypointSpacing + 1e-9)) ++bad_edges;
          if (std::abs(len - kWaypointSpacing) > 1e-9) ++short_edges;
        }
        if (short_edges > 1) ++bad_chains;
      }
    }
    std::map<std::uint32_t, int> corners;
    for (const Waypoint& w : g.nodes()) {
      if (w.kind == WaypointKind::intersection) ++corners[w.parent];
    }
    for (const Intersection& in : m.intersections) {
      if (in.arm_count() != 4) continue;
      ++four_way;
      if (corners[in.id] != 4) ++bad_corners;
    }
  }
  return {bad_edges == 0 && bad_chains == 0 && bad_corners == 0 && four_way > 0,
          std::to_string(chains) + " chains: " + std::to_string(bad_edges) + " edges outside (0, 17], " +
              std::to_string(bad_chains) + " chains with >1 short edge; " + std::to_string(four_way) +
              " 4-way intersections, " + std::to_string(bad_corners) + " without 4 corners"};
}

std::vector<double> dijkstra(const WaypointGraph& g, std::uint32_t s) {
  std::vector<double> d(g.size(), std::numeric_limits<double>::infinity());
  using Item = std::pair<double, std::uint32_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> q;
  d[s] = 0;
  q.push({0, s});
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

// Lattice nodes with integer edge lengths; stretch below 1 makes some edges
// shorter than the Manhattan distance between their ends.
WaypointGraph random_graph(Rng& rng, std::uint32_t n, double stretch_lo) {
  std::vector<Waypoint> nodes;
  for (std::uint32_t i = 0; i < n; ++i) {
    Waypoint w;
    w.id = i;
    w.position = {static_cast<double>(rng.below(20)) * 10.0, static_cast<double>(rng.below(20)) * 10.0};
    nodes.push_back(w);
  }
  std::vector<Edge> edges;
  std::set<std::pair<std::uint32_t, std::uint32_t>> seen;
  for (std::uint32_t k = 0; k < 2 * n; ++k) {
    std::uint32_t a = static_cast<std::uint32_t>(rng.below(n));
    std::uint32_t b = static_cast<std::uint32_t>(rng.below(n));
    if (a == b) continue;
    if (a > b) std::swap(a, b);
    if (!seen.insert({a, b}).second) continue;
    Edge e;
    e.a = a;
    e.b = b;
    e.length = std::round(manhattan(nodes[a].position, nodes[b].position) * rng.uniform(stretch_lo, 2.0));
    edges.push_back(e);
  }
  return WaypointGraph(std::move(nodes), std::move(edges));
}

// 3. A* against Dijkstra, all targets from one source per graph.
Verdict astar_equivalence() {
  const auto t0 = Clock::now();
  Rng rng(303);
  std::size_t queries = 0, mismatches = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::uint32_t n = 2 + static_cast<std::uint32_t>(rng.below(199));
    const WaypointGraph g = random_graph(rng, n, trial % 2 == 0 ? 1.0 : 0.3);
    const std::uint32_t s = static_cast<std::uint32_t>(rng.below(n));
    const auto d = dijkstra(g, s);
    for (std::uint32_t t = 0; t < n; ++t) {
      ++queries;
      const auto p = astar_path(g, s, t);
      if (p.has_value() != std::isfinite(d[t]) || (p && p->cost != d[t])) ++mismatches;
    }
  }
  const double secs = seconds_since(t0);
  return {mismatches == 0 && secs < 10.0,
          std::to_string(queries) + " queries on 50 graphs, " + std::to_string(mismatches) + " cost mismatches, " +
              fmt("%.2f s (limit 10)", secs)};
}

// 4. No agent enters a crosswalk while its gate says wait.
Verdict signal_compliance() {
  std::uint64_t entries = 0, under_wait = 0;
  for (std::uint64_t seed : {1, 2, 3}) {
    const CityMap m = generate_city(hard_variant(default_spec(seed), 6.0, 50, 100));
    const WaypointGraph g = build_waypoint_graph(m);
    TrafficSim sim(m, g);
    for (int t = 0; t < 10000; ++t) sim.tick();
    entries += sim.stats().crosswalk_entries;
    under_wait += sim.stats().entries_under_wait;
  }
  return {under_wait == 0 && entries > 0, "3 maps x 10000 ticks, 50 vehicles + 100 pedestrians: " +
                                               std::to_string(entries) + " crosswalk entries, " +
                                               std::to_string(under_wait) + " under wait"};
}

// 5. Pairwise overlap and connectivity audit.
Verdict geometric_soundness() {
  Rng rng(505);
  std::size_t unsound = 0, building_overlaps = 0, road_overlaps = 0;
  for (std::uint64_t i = 0; i < 100; ++i) {
    const tools::MapAudit a = tools::audit_map(generate_city(random_spec(rng, 5000 + i)));
    building_overlaps += a.building_overlaps;
    road_overlaps += a.road_overlaps;
    if (!a.sound()) ++unsound;
  }
  return {unsound == 0, "100 maps: " + std::to_string(building_overlaps) + " building-building, " +
                            std::to_string(road_overlaps) + " building-road overlaps, " + std::to_string(unsound) +
                            " maps disconnected or overlapping"};
}

// Two-sided normal critical value by Newton's method on erfc.
double critical_z(double confidence) {
  const double target = 1.0 - confidence;
  double z = 2.0;
  for (int i = 0; i < 100; ++i) {
    const double f = std::erfc(z / std::sqrt(2.0)) - target;
    const double df = -std::sqrt(2.0 / M_PI) * std::exp(-z * z / 2.0);
    const double step = f / df;
    z -= step;
    if (std::abs(step) < 1e-15) break;
  }
  return z;
}

// Wilson bounds as the roots of (p_hat - p)^2 = z^2 p (1 - p) / n.
Interval wilson_roots(std::int64_t k, std::int64_t n, double confidence) {
  const double z = critical_z(confidence);
  const double ph = static_cast<double>(k) / static_cast<double>(n);
  const double c = z * z / static_cast<double>(n);
  const double A = 1.0 + c;
  const double B = -(2.0 * ph + c);
  const double disc = std::sqrt(B * B - 4.0 * A * ph * ph);
  return {std::max((-B - disc) / (2.0 * A), 0.0), std::min((-B + disc) / (2.0 * A), 1.0)};
}

// 6. Metric formulas on hand cases, Wilson against the root form.
Verdict metric_formulas() {
  int failed = 0;
  auto expect = [&](double got, double want) { failed += got == want ? 0 : 1; };
  expect(subtask_success_rate(3, 4), 0.75);
  expect(subtask_success_rate(0, 3), 0.0);
  expect(subtask_success_rate(2, 2), 1.0);
  expect(distance_progress(400, 100), 0.75);
  expect(distance_progress(400, 0), 1.0);
  expect(distance_progress(400, 400), 0.0);
  expect(distance_progress(400, 900), 0.0);  // ended farther away: clamped
  expect(task_progress(600, 150), 0.75);
  expect(task_progress(600, 601), 0.0);
  // Manhattan, not Euclidean: start 30 + 40 away, end 10 + 25 away.
  expect(distance_progress(manhattan({0, 0}, {30, 40}), manhattan({20, 15}, {30, 40})), 0.5);
  std::size_t domain_errors = 0;
  for (auto f : std::vector<std::function<void()>>{[] { subtask_success_rate(5, 4); },
                                                    [] { distance_progress(0, 1); },
                                                    [] { task_progress(10, -1); }}) {
    try {
      f();
    } catch (const Error&) {
      ++domain_errors;
    }
  }

  std::mt19937_64 gen(66);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const auto n = static_cast<std::int64_t>(1 + gen() % 1000);
    const auto k = static_cast<std::int64_t>(gen() % static_cast<std::uint64_t>(n + 1));
    const Interval a = wilson_interval(k, n);
    const Interval b = wilson_roots(k, n, 0.95);
    worst = std::max({worst, std::abs(a.lower - b.lower), std::abs(a.upper - b.upper)});
  }
  return {failed == 0 && domain_errors == 3 && worst <= 1e-9,
          std::to_string(10 - failed) + "/10 formula cases, " + std::to_string(domain_errors) +
              "/3 domain errors, Wilson max deviation " + fmt("%.2e", worst) + " on 100 pairs (limit 1e-9)"};
}

struct Bench {
  CityMap map;
  MMNavTask mmnav;
  MRSTask mrs;
};

Bench bench(std::uint64_t seed) {
  Bench b{generate_city(variant_for(default_spec(seed), Difficulty::easy)), {}, {}};
  const World w(b.map);
  Rng rng(derive_seed(seed, Stream::tasks));
  b.mmnav = generate_mmnav_task(w, rng, Difficulty::easy);
  b.mrs = generate_mrs_task(w, rng, Difficulty::easy);
  return b;
}

// 7. Oracle closes the loop; a random agent does not.
Verdict closed_loop() {
  std::vector<EpisodeResult> mm, rs, rand_mm, rand_rs;
  int beyond_tolerance = 0;
  for (std::uint64_t seed = 700; seed < 720; ++seed) {
    const Bench b = bench(seed);
    Episode a(b.map, b.mmnav);
    mm.push_back(run_mmnav_oracle(a));
    if (mm.back().dT > b.mmnav.final_goal().position_tolerance) ++beyond_tolerance;
    Episode c(b.map, b.mrs);
    rs.push_back(run_mrs_oracle(c));
    Episode d(b.map, b.mmnav);
    rand_mm.push_back(run_random(d, seed));
    Episode e(b.map, b.mrs);
    rand_rs.push_back(run_random(e, seed));
  }
  const MetricsReport o = aggregate_report(mm), om = aggregate_report(rs);
  const MetricsReport r = aggregate_report(rand_mm), rm = aggregate_report(rand_rs);
  const bool pass = *o.sr == 1.0 && *o.ssr == 1.0 && beyond_tolerance == 0 && *om.csr == 1.0 && *r.sr == 0.0 &&
                    *rm.csr <= 0.05;
  return {pass, "oracle SR " + fmt("%.1f%%", *o.sr * 100) + " SSR " + fmt("%.1f%%", *o.ssr * 100) + " DP " +
                    fmt("%.2f%%", *o.dp * 100) + " (" + std::to_string(beyond_tolerance) +
                    " ends beyond tolerance) CSR " + fmt("%.1f%%", *om.csr * 100) + "; random SR " +
                    fmt("%.1f%%", *r.sr * 100) + " CSR " + fmt("%.1f%%", *rm.csr * 100)};
}

// 8. Default-config batches against the calibration bands.
Verdict calibration() {
  std::map<std::size_t, int> counts;
  double mm = 0.0, mrs = 0.0, area_lo = 1e9, area_hi = 0.0;
  int n = 0;
  for (std::uint64_t seed = 800; seed < 850; ++seed) {
    const CityMap m = generate_city(variant_for(default_spec(seed), Difficulty::easy));
    area_lo = std::min(area_lo, m.area_km2());
    area_hi = std::max(area_hi, m.area_km2());
    const World w(m);
    Rng rng(derive_seed(seed, Stream::tasks));
    for (int k = 0; k < 2; ++k) {
      const MMNavTask t = generate_mmnav_task(w, rng, Difficulty::easy);
      ++counts[t.subtasks.size()];
      mm += t.path_length;
      mrs += generate_mrs_task(w, rng, Difficulty::easy).oracle_distance;
      ++n;
    }
  }
  mm /= n;
  mrs /= n;
  bool counts_ok = true;
  std::string hist;
  for (const auto& [k, v] : counts) {
    counts_ok = counts_ok && k >= 2 && k <= 4;
    hist += (hist.empty() ? "" : " ") + std::to_string(k) + ":" + std::to_string(v);
  }
  const bool pass = counts_ok && mm >= 250 && mm <= 750 && area_lo >= 1.6 && area_hi <= 2.4 && mrs >= 300 && mrs <= 900;
  return {pass, std::to_string(n) + " MMNav + " + std::to_string(n) + " MRS tasks: instructions {" + hist +
                    "}, mean path " + fmt("%.0f m [250, 750]", mm) + ", area " + fmt("%.2f", area_lo) + "-" +
                    fmt("%.2f km2 [1.6, 2.4]", area_hi) + ", mean MRS spawn distance " + fmt("%.0f m [300, 900]", mrs)};
}

// 9. Default export, full validation.
Verdict dataset_scale(const fs::path& scratch) {
  const auto t0 = Clock::now();
  const fs::path dir = scratch / "dataset";
  fs::remove_all(dir);
  const DatasetConfig config;
  const DatasetManifest m = export_dataset(config, dir);
  const DatasetReport r = validate_dataset(dir);
  const double secs = seconds_since(t0);
  fs::remove_all(dir);
  return {m.steps >= 20000 && r.records == m.steps && r.ok() && secs <= 1800.0,
          std::to_string(m.maps) + " maps x " + std::to_string(config.tasks_per_map) + " tasks: " +
              std::to_string(m.steps) + " records (min 20000), " + std::to_string(r.violations) + " violations, " +
              std::to_string(r.test_only_assets) + " test-only assets, " + fmt("%.0f s (limit 1800)", secs)};
}

// 10. World ticks per wall second with two robots acting through the buffer.
Verdict throughput() {
  const CityMap m = generate_city(hard_variant(default_spec(1), 6.0, 100, 200));
  World w(m);
  const std::uint32_t a = w.add_robot({w.sidewalks().node(0).position, 0.0});
  const std::uint32_t b = w.add_robot({w.sidewalks().node(w.sidewalks().size() / 2).position, 90.0});
  ControlBuffer buffer(w);
  const ActionKind moves[] = {ActionKind::move_forward, ActionKind::move_forward, ActionKind::turn_left,
                              ActionKind::move_forward, ActionKind::turn_right, ActionKind::stay};
  Rng rng(10);
  const std::uint64_t ticks = 7200;  // two simulated minutes
  const auto t0 = Clock::now();
  while (w.tick() < ticks) {
    for (std::uint32_t r : {a, b}) {
      if (buffer.available(r)) buffer.submit(r, RobotAction::of(moves[rng.below(6)]));
    }
    buffer.poll();
  }
  const double secs = seconds_since(t0);
  const double rate = static_cast<double>(w.tick()) / secs;
  return {rate >= 60.0, fmt("%.2f km2, ", m.area_km2()) + std::to_string(w.traffic().vehicles().size()) +
                            " vehicles + " + std::to_string(w.traffic().pedestrians().size()) +
                            " pedestrians + 2 robots: " + fmt("%.0f ticks/s (min 60)", rate)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance suite"};
  std::vector<int> only;
  std::string scratch = (fs::temp_directory_path() / "citysim-acceptance").string();
  app.add_option("criteria", only, "Run only these criteria (1-10)")->check(CLI::Range(1, 10));
  app.add_option("--scratch", scratch, "Directory for temporary output")->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"determinism", determinism},
      {"waypoint geometry", waypoint_geometry},
      {"a* equals dijkstra", astar_equivalence},
      {"signal compliance", signal_compliance},
      {"geometric soundness", geometric_soundness},
      {"metric formulas", metric_formulas},
      {"closed-loop benchmark", closed_loop},
      {"calibration", calibration},
      {"dataset scale", [&] { return dataset_scale(scratch); }},
      {"throughput", throughput},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    const auto t0 = Clock::now();
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    failures += v.pass ? 0 : 1;
    std::cout << (v.pass ? "PASS" : "FAIL") << "  " << id << ". " << criteria[i].first << ": " << v.detail
              << fmt("  [%.1f s]", seconds_since(t0)) << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
