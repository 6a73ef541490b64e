#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "citysim/city.hpp"
#include "citysim/geometry.hpp"
#include "citysim/rng.hpp"

namespace citysim {

enum class WaypointKind : std::uint8_t { road, intersection };

struct Waypoint {
  std::uint32_t id = 0;
  WaypointKind kind = WaypointKind::road;
  Vec2 position;
  std::uint32_t parent = 0;  // road id or intersection id
  int corner = -1;           // Corner index for intersection waypoints
  int side = 0;              // road side for road waypoints
};

enum class EdgeKind : std::uint8_t { chain, corner, crosswalk, road };

struct Edge {
  std::uint32_t a = 0;
  std::uint32_t b = 0;
  double length = 0.0;
  EdgeKind kind = EdgeKind::chain;
  std::uint32_t intersection = 0;  // crosswalk/corner edges
  Cardinal arm = Cardinal::N;      // crosswalk: the arm being crossed
  Axis crossing = Axis::NS;        // crosswalk: axis of movement across it
  bool gated = false;              // crosswalk at a signalized intersection
};

/// Undirected graph with positions. Built from a map (sidewalk graph), from a
/// map's road network (vehicle graph), or directly from nodes and edges.
class WaypointGraph {
 public:
  WaypointGraph() = default;
  WaypointGraph(std::vector<Waypoint> nodes, std::vector<Edge> edges);

  const std::vector<Waypoint>& nodes() const { return nodes_; }
  const std::vector<Edge>& edges() const { return edges_; }
  std::size_t size() const { return nodes_.size(); }
  const Waypoint& node(std::uint32_t id) const { return nodes_[id]; }

  /// (neighbor, edge index) pairs sorted by neighbor id.
  std::span<const std::pair<std::uint32_t, std::uint32_t>> neighbors(std::uint32_t id) const {
    return adjacency_[id];
  }
  const Edge* edge_between(std::uint32_t a, std::uint32_t b) const;

  /// Whether every edge is at least as long as the Manhattan distance
  /// between its endpoints (true on axis-aligned graphs).
  bool manhattan_admissible() const { return manhattan_admissible_; }
  bool euclidean_admissible() const { return euclidean_admissible_; }

  bool connected() const;

  /// Sidewalk graph only: chain of one road side from the `from`-end corner
  /// to the `to`-end corner, corners included.
  std::span<const std::uint32_t> chain(std::uint32_t road, int side) const;

  static std::uint32_t corner_id(std::uint32_t intersection, Corner c) {
    return 4 * intersection + static_cast<std::uint32_t>(c);
  }

  /// Nearest node to a point (lowest id on ties).
  std::uint32_t nearest(Vec2 p) const;

 private:
  friend WaypointGraph build_waypoint_graph(const CityMap& map);

  std::vector<Waypoint> nodes_;
  std::vector<Edge> edges_;
  std::vector<std::vector<std::pair<std::uint32_t, std::uint32_t>>> adjacency_;
  std::vector<std::array<std::vector<std::uint32_t>, 2>> chains_;
  bool manhattan_admissible_ = true;
  bool euclidean_admissible_ = true;
};

inline constexpr double kWaypointSpacing = 17.0;

/// Sidewalk waypoint graph: four corner waypoints per intersection (ids
/// 4*i + corner), 17 m side chains, corner and crosswalk ring edges.
WaypointGraph build_waypoint_graph(const CityMap& map);

/// Vehicle routing graph: one node per intersection (same ids), one edge per road.
WaypointGraph build_road_graph(const CityMap& map);

struct Path {
  std::vector<std::uint32_t> nodes;
  double cost = 0.0;
};

/// Shortest path by summed edge length; ties broken toward smaller node ids.
std::optional<Path> astar_path(const WaypointGraph& g, std::uint32_t start, std::uint32_t goal);

struct RouteWeights {
  double straight = 0.5;
  double left = 0.25;
  double right = 0.25;
  double reverse = 0.0;
};

enum class TurnClass : std::uint8_t { straight, left, right, reverse };
TurnClass classify_turn(Vec2 prev, Vec2 cur, Vec2 next);

/// Random walk of `hops` edges. At each node the options other than going
/// back are classified relative to the incoming direction and drawn with the
/// class weights; going back happens only when nothing else is available.
/// `previous` seeds the incoming direction for the first hop.
std::vector<std::uint32_t> sample_route(const WaypointGraph& g, std::uint32_t start, int hops, Rng& rng,
                                        const RouteWeights& weights = {},
                                        std::optional<std::uint32_t> previous = std::nullopt);

double path_length(const WaypointGraph& g, std::span<const std::uint32_t> path);

}  // namespace citysim
