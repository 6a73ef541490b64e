#include "audit.hpp"

#include <numeric>

#include "citysim/waypoints.hpp"

namespace citysim::tools {

namespace {

std::size_t components(std::size_t n, const std::vector<std::pair<std::uint32_t, std::uint32_t>>& edges) {
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  std::size_t count = n;
  for (auto [a, b] : edges) {
    const std::size_t ra = find(a), rb = find(b);
    if (ra != rb) {
      parent[ra] = rb;
      --count;
    }
  }
  return count;
}

}  // namespace

MapAudit audit_map(const CityMap& map) {
  MapAudit a;
  const double half = map.spec.corridor_half_width();
  for (std::size_t i = 0; i < map.buildings.size(); ++i) {
    const Aabb& f = map.buildings[i].footprint;
    for (std::size_t j = i + 1; j < map.buildings.size(); ++j) a.building_overlaps += f.overlaps(map.buildings[j].footprint);
    for (const RoadSegment& r : map.roads) a.road_overlaps += f.overlaps(road_corridor(r, half));
    for (const Intersection& in : map.intersections) a.road_overlaps += f.overlaps(Aabb::from_center(in.center, half, half));
  }
  const WaypointGraph g = build_waypoint_graph(map);
  std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
  for (const Edge& e : g.edges()) edges.emplace_back(e.a, e.b);
  a.sidewalk_components = components(g.size(), edges);
  edges.clear();
  for (const RoadSegment& r : map.roads) edges.emplace_back(r.from, r.to);
  a.road_components = components(map.intersections.size(), edges);
  return a;
}

}  // namespace citysim::tools
