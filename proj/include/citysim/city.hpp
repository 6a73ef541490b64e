#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "citysim/catalog.hpp"
#include "citysim/geometry.hpp"
#include "citysim/quadtree.hpp"
#include "citysim/raycast.hpp"
#include "citysim/rng.hpp"

namespace citysim {

struct RoadParams {
  int initial_roads = 4;
  int max_depth = 16;
  double branch_probability = 0.5;
  double segment_length = 240.0;
  double block_size = 120.0;
  double road_width = 12.0;
  double sidewalk_width = 4.0;
  double snap_tolerance = 3.0;
  double min_intersection_spacing = 40.0;
};

struct BuildingParams {
  double setback = 2.0;
  double min_footprint = 15.0;
  double max_footprint = 35.0;
  double fill_gap_threshold = 12.0;
  double max_gap = 4.0;
  AssetPool asset_pool = AssetPool::all;
};

enum class ElementClass : std::uint8_t { tree, cone, bench, parked_vehicle, barrier };
constexpr int kElementClassCount = 5;

std::string_view element_class_name(ElementClass c);
ElementClass element_class_from_name(std::string_view s);

struct ElementParams {
  /// Items per 100 m of sidewalk band, split across classes by `mix`.
  double density = 0.0;
  std::array<double, kElementClassCount> mix = {0.4, 0.15, 0.2, 0.15, 0.1};

  double class_density(ElementClass c) const;
};

struct TrafficParams {
  int vehicles = 0;
  int pedestrians = 0;
};

struct CitySpec {
  std::uint64_t seed = 0;
  double target_area_km2 = 2.0;
  RoadParams roads;
  BuildingParams buildings;
  ElementParams elements;
  TrafficParams traffic;

  /// Distance from a road centerline to its sidewalk centerline.
  double sidewalk_offset() const { return roads.road_width / 2 + roads.sidewalk_width / 2; }
  /// Half width of road + sidewalks.
  double corridor_half_width() const { return roads.road_width / 2 + roads.sidewalk_width; }
  /// Lateral offset of building fronts.
  double frontage_offset() const { return corridor_half_width() + buildings.setback; }

  void validate() const;
};

/// Hard maps carry street elements and traffic; easy maps carry neither.
CitySpec hard_variant(CitySpec spec, double element_density = 6.0, int vehicles = 50, int pedestrians = 100);
CitySpec easy_variant(CitySpec spec);

struct RoadSegment {
  std::uint32_t id = 0;
  std::uint32_t from = 0;  // intersection at the lower coordinate end
  std::uint32_t to = 0;
  Axis axis = Axis::NS;
  Vec2 a;  // centerline, a at `from`
  Vec2 b;
  double width = 12.0;
  double sidewalk_offset = 8.0;
  int depth = 0;

  double length() const { return distance(a, b); }
  /// Direction of travel from a to b: N for NS roads, E for EW roads.
  Cardinal direction() const { return axis == Axis::NS ? Cardinal::N : Cardinal::E; }
  Vec2 tangent() const { return axis == Axis::NS ? Vec2{0, 1} : Vec2{1, 0}; }
  /// Unit normal pointing to `side` (+1 east/north, -1 west/south).
  Vec2 normal(int side) const { return axis == Axis::NS ? Vec2{double(side), 0} : Vec2{0, double(side)}; }
  Vec2 point(double along, double lateral, int side) const { return a + tangent() * along + normal(side) * lateral; }
  /// Cardinal pointing from the road toward `side`.
  Cardinal side_cardinal(int side) const;
};

enum class Corner : std::uint8_t { NE = 0, SE = 1, SW = 2, NW = 3 };

struct Intersection {
  std::uint32_t id = 0;
  Vec2 center;
  std::array<std::int32_t, 4> arms = {-1, -1, -1, -1};  // indexed by Cardinal
  std::array<Vec2, 4> corners;                          // indexed by Corner
  bool signalized = false;

  int arm_count() const;
  bool has_arm(Cardinal c) const { return arms[static_cast<int>(c)] >= 0; }
};

struct Building {
  std::uint32_t id = 0;
  std::string asset;
  Aabb footprint;
  Vec2 door;
  std::uint32_t road = 0;
  int side = 1;
  Cardinal facing = Cardinal::N;  // direction from the door toward the building
  std::string color, height, material, signage;

  std::string description() const;
};

enum class Zone : std::uint8_t { building_adjacent, sidewalk };

struct StreetElement {
  std::uint32_t id = 0;
  ElementClass cls = ElementClass::tree;
  Aabb footprint;
  Zone zone = Zone::sidewalk;
  std::uint32_t road = 0;
  int side = 1;
};

enum class AgentKind : std::uint8_t { vehicle, pedestrian, robot };
std::string_view agent_kind_name(AgentKind k);

/// Traffic population record, consumed by the traffic simulation.
struct SpawnRecord {
  std::uint32_t id = 0;
  AgentKind kind = AgentKind::vehicle;
  std::uint32_t road = 0;
  int side = 1;
  double along = 0.0;
};

struct RoadNetwork {
  std::vector<RoadSegment> roads;
  std::vector<Intersection> intersections;
};

class CityMap {
 public:
  CitySpec spec;
  std::vector<RoadSegment> roads;
  std::vector<Intersection> intersections;
  std::vector<Building> buildings;
  std::vector<StreetElement> elements;
  std::vector<SpawnRecord> spawns;
  Aabb bounds;

  /// Rebuilds derived indexes; called by the generator and the loader.
  void finalize();

  /// Static obstacles (buildings, trees, other elements) with a quadtree.
  const RayScene& scene() const { return scene_; }
  /// Building footprints only, used for elevated views.
  const RayScene& building_scene() const { return building_scene_; }

  /// True if the point lies on a carriageway (road surface or intersection box).
  bool on_carriageway(Vec2 p) const;

  /// Signalized crosswalk band of an arm: the carriageway strip pedestrians
  /// cross, plus the axis of pedestrian movement across it.
  Aabb crosswalk_band(const Intersection& in, Cardinal arm) const;

  double area_km2() const { return bounds.area() / 1e6; }

 private:
  RayScene scene_;
  RayScene building_scene_;
  QuadTree carriageway_;
  std::vector<Aabb> carriageway_boxes_;
};

/// Lattice line coordinates for a spec (throws SpecInfeasible).
std::vector<double> lattice_lines(const CitySpec& spec);

RoadNetwork generate_roads(const CitySpec& spec);
std::vector<Building> place_buildings(const RoadNetwork& net, const CitySpec& spec, Rng& rng);
std::vector<StreetElement> place_street_elements(const RoadNetwork& net, const std::vector<Building>& buildings,
                                                 const CitySpec& spec);
std::vector<SpawnRecord> populate_traffic(const RoadNetwork& net, const CitySpec& spec, Rng& rng);
CityMap generate_city(const CitySpec& spec);

/// Corner positions of an intersection for a given sidewalk offset.
std::array<Vec2, 4> corner_points(Vec2 center, double offset);

/// Road corridor box (carriageway plus sidewalks).
Aabb road_corridor(const RoadSegment& r, double half_width);

}  // namespace citysim
