#pragma once

#include <vector>

#include "citysim/city.hpp"

namespace citysim::test {

inline CitySpec seeded(std::uint64_t seed) {
  CitySpec s;
  s.seed = seed;
  return s;
}

// One north-south road with a signalized intersection 0 at (200, 0), plus
// free-standing building boxes.
inline CityMap test_map(const std::vector<Aabb>& boxes) {
  CityMap m;
  m.spec = easy_variant(CitySpec{});
  Intersection a;
  a.id = 0;
  a.center = {200, 0};
  a.arms[static_cast<int>(Cardinal::N)] = 0;
  a.signalized = true;
  Intersection b;
  b.id = 1;
  b.center = {200, 116};
  b.arms[static_cast<int>(Cardinal::S)] = 0;
  a.corners = corner_points(a.center, 8);
  b.corners = corner_points(b.center, 8);
  RoadSegment r;
  r.from = 0;
  r.to = 1;
  r.a = a.center;
  r.b = b.center;
  m.roads = {r};
  m.intersections = {a, b};
  Aabb bounds{{-200, -200}, {400, 300}};
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    Building bd;
    bd.id = static_cast<std::uint32_t>(i);
    bd.footprint = boxes[i];
    bd.door = boxes[i].center();
    m.buildings.push_back(bd);
    bounds = bounds.merged(boxes[i]);
  }
  m.bounds = bounds;
  m.finalize();
  return m;
}

}  // namespace citysim::test
