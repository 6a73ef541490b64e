#include "citysim/waypoints.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>

#include "citysim/error.hpp"

namespace citysim {

WaypointGraph::WaypointGraph(std::vector<Waypoint> nodes, std::vector<Edge> edges)
    : nodes_(std::move(nodes)), edges_(std::move(edges)) {
  adjacency_.resize(nodes_.size());
  for (std::uint32_t i = 0; i < edges_.size(); ++i) {
    const Edge& e = edges_[i];
    adjacency_[e.a].push_back({e.b, i});
    adjacency_[e.b].push_back({e.a, i});
    const double m = manhattan(nodes_[e.a].position, nodes_[e.b].position);
    if (e.length < m) manhattan_admissible_ = false;
    if (e.length < distance(nodes_[e.a].position, nodes_[e.b].position)) euclidean_admissible_ = false;
  }
  for (auto& adj : adjacency_) std::sort(adj.begin(), adj.end());
}

const Edge* WaypointGraph::edge_between(std::uint32_t a, std::uint32_t b) const {
  for (const auto& [n, e] : adjacency_[a]) {
    if (n == b) return &edges_[e];
  }
  return nullptr;
}

bool WaypointGraph::connected() const {
  if (nodes_.empty()) return true;
  std::vector<std::uint32_t> parent(nodes_.size());
  std::iota(parent.begin(), parent.end(), 0u);
  auto find = [&](std::uint32_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };
  std::size_t components = nodes_.size();
  for (const Edge& e : edges_) {
    const std::uint32_t ra = find(e.a);
    const std::uint32_t rb = find(e.b);
    if (ra != rb) {
      parent[ra] = rb;
      --components;
    }
  }
  return components == 1;
}

std::span<const std::uint32_t> WaypointGraph::chain(std::uint32_t road, int side) const {
  return chains_.at(road)[side > 0 ? 1 : 0];
}

std::uint32_t WaypointGraph::nearest(Vec2 p) const {
  std::uint32_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (const Waypoint& w : nodes_) {
    const double d = distance(w.position, p);
    if (d < best_d) {
      best_d = d;
      best = w.id;
    }
  }
  return best;
}

namespace {

// Corner pair on each side of a road, ordered (at `from`, at `to`).
std::pair<Corner, Corner> chain_corners(Axis axis, int side) {
  if (axis == Axis::NS) return side > 0 ? std::pair{Corner::NE, Corner::SE} : std::pair{Corner::NW, Corner::SW};
  return side > 0 ? std::pair{Corner::NE, Corner::NW} : std::pair{Corner::SE, Corner::SW};
}

Edge make_edge(const std::vector<Waypoint>& nodes, std::uint32_t a, std::uint32_t b, EdgeKind kind) {
  Edge e;
  e.a = a;
  e.b = b;
  e.length = distance(nodes[a].position, nodes[b].position);
  e.kind = kind;
  return e;
}

}  // namespace

WaypointGraph build_waypoint_graph(const CityMap& map) {
  std::vector<Waypoint> nodes;
  std::vector<Edge> edges;
  for (const Intersection& in : map.intersections) {
    for (int c = 0; c < 4; ++c) {
      Waypoint w;
      w.id = static_cast<std::uint32_t>(nodes.size());
      w.kind = WaypointKind::intersection;
      w.position = in.corners[c];
      w.parent = in.id;
      w.corner = c;
      nodes.push_back(w);
    }
  }

  // Ring edges between adjacent corners. The edge between two corners crosses
  // the arm lying between them; without an arm it wraps the sidewalk corner.
  struct RingSide {
    Corner a;
    Corner b;
    Cardinal arm;
  };
  constexpr std::array<RingSide, 4> ring = {{
      {Corner::NE, Corner::SE, Cardinal::E},
      {Corner::SE, Corner::SW, Cardinal::S},
      {Corner::SW, Corner::NW, Cardinal::W},
      {Corner::NW, Corner::NE, Cardinal::N},
  }};
  for (const Intersection& in : map.intersections) {
    for (const RingSide& rs : ring) {
      const std::uint32_t a = WaypointGraph::corner_id(in.id, rs.a);
      const std::uint32_t b = WaypointGraph::corner_id(in.id, rs.b);
      Edge e = make_edge(nodes, std::min(a, b), std::max(a, b), EdgeKind::corner);
      e.intersection = in.id;
      e.arm = rs.arm;
      if (in.has_arm(rs.arm)) {
        e.kind = EdgeKind::crosswalk;
        e.crossing = axis_of(rs.arm) == Axis::NS ? Axis::EW : Axis::NS;
        e.gated = in.signalized;
      }
      edges.push_back(e);
    }
  }

  std::vector<std::array<std::vector<std::uint32_t>, 2>> chains(map.roads.size());
  for (const RoadSegment& r : map.roads) {
    for (int side : {-1, 1}) {
      const auto [ca, cb] = chain_corners(r.axis, side);
      const std::uint32_t start = WaypointGraph::corner_id(r.from, ca);
      const std::uint32_t end = WaypointGraph::corner_id(r.to, cb);
      const Vec2 p0 = nodes[start].position;
      const Vec2 p1 = nodes[end].position;
      const double len = distance(p0, p1);
      const int interior = len > 0.0 ? static_cast<int>(std::ceil(len / kWaypointSpacing)) - 1 : 0;
      // Spacing runs from the lower-id intersection; the remainder lands at
      // the end nearer the higher id.
      const bool from_low = r.from < r.to;
      std::vector<Vec2> points;
      for (int k = 1; k <= interior; ++k) {
        const double s = kWaypointSpacing * k;
        points.push_back(from_low ? p0 + r.tangent() * s : p1 - r.tangent() * s);
      }
      if (!from_low) std::reverse(points.begin(), points.end());

      auto& chain = chains[r.id][side > 0 ? 1 : 0];
      chain.push_back(start);
      for (Vec2 p : points) {
        Waypoint w;
        w.id = static_cast<std::uint32_t>(nodes.size());
        w.kind = WaypointKind::road;
        w.position = p;
        w.parent = r.id;
        w.side = side;
        nodes.push_back(w);
        chain.push_back(w.id);
      }
      chain.push_back(end);
      for (std::size_t k = 0; k + 1 < chain.size(); ++k) edges.push_back(make_edge(nodes, chain[k], chain[k + 1], EdgeKind::chain));
    }
  }

  WaypointGraph g(std::move(nodes), std::move(edges));
  g.chains_ = std::move(chains);
  return g;
}

WaypointGraph build_road_graph(const CityMap& map) {
  std::vector<Waypoint> nodes;
  for (const Intersection& in : map.intersections) {
    Waypoint w;
    w.id = in.id;
    w.kind = WaypointKind::intersection;
    w.position = in.center;
    w.parent = in.id;
    nodes.push_back(w);
  }
  std::vector<Edge> edges;
  for (const RoadSegment& r : map.roads) {
    Edge e = make_edge(nodes, r.from, r.to, EdgeKind::road);
    e.intersection = r.id;
    edges.push_back(e);
  }
  return WaypointGraph(std::move(nodes), std::move(edges));
}

std::optional<Path> astar_path(const WaypointGraph& g, std::uint32_t start, std::uint32_t goal) {
  if (start >= g.size() || goal >= g.size()) throw Error(ErrorCode::domain_error, "waypoint id out of range");
  const Vec2 target = g.node(goal).position;
  // Manhattan on axis-aligned graphs, Euclidean otherwise, and no heuristic
  // at all when edge lengths undercut straight-line distance.
  const bool use_manhattan = g.manhattan_admissible();
  const bool use_euclid = g.euclidean_admissible();
  auto h = [&](std::uint32_t n) {
    const Vec2 p = g.node(n).position;
    if (use_manhattan) return manhattan(p, target);
    return use_euclid ? distance(p, target) : 0.0;
  };

  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> dist(g.size(), inf);
  std::vector<std::uint32_t> parent(g.size(), std::numeric_limits<std::uint32_t>::max());
  std::vector<bool> closed(g.size(), false);
  using Item = std::pair<double, std::uint32_t>;  // (f, node): equal f pops the smaller id
  std::priority_queue<Item, std::vector<Item>, std::greater<>> open;
  dist[start] = 0.0;
  open.push({h(start), start});
  while (!open.empty()) {
    const auto [f, n] = open.top();
    open.pop();
    if (closed[n]) continue;
    closed[n] = true;
    if (n == goal) break;
    for (const auto& [m, ei] : g.neighbors(n)) {
      if (closed[m]) continue;
      const double nd = dist[n] + g.edges()[ei].length;
      if (nd < dist[m]) {
        dist[m] = nd;
        parent[m] = n;
        open.push({nd + h(m), m});
      }
    }
  }
  if (!closed[goal]) return std::nullopt;
  Path p;
  p.cost = dist[goal];
  for (std::uint32_t n = goal; n != start; n = parent[n]) p.nodes.push_back(n);
  p.nodes.push_back(start);
  std::reverse(p.nodes.begin(), p.nodes.end());
  return p;
}

TurnClass classify_turn(Vec2 prev, Vec2 cur, Vec2 next) {
  const double d = heading_difference(bearing(prev, cur), bearing(cur, next));
  if (std::abs(d) < 45.0) return TurnClass::straight;
  if (std::abs(d) > 135.0) return TurnClass::reverse;
  return d < 0.0 ? TurnClass::left : TurnClass::right;
}

std::vector<std::uint32_t> sample_route(const WaypointGraph& g, std::uint32_t start, int hops, Rng& rng,
                                        const RouteWeights& weights, std::optional<std::uint32_t> previous) {
  std::vector<std::uint32_t> route{start};
  std::optional<std::uint32_t> prev = previous;
  std::uint32_t cur = start;
  std::vector<std::uint32_t> options;
  std::vector<double> w;
  for (int hop = 0; hop < hops; ++hop) {
    const auto nbrs = g.neighbors(cur);
    if (nbrs.empty()) break;
    options.clear();
    w.clear();
    for (const auto& [n, e] : nbrs) {
      if (prev && n == *prev) continue;
      options.push_back(n);
    }
    std::uint32_t next;
    if (options.empty()) {
      next = *prev;
    } else if (!prev) {
      next = options[rng.below(options.size())];
    } else {
      const Vec2 pp = g.node(*prev).position;
      const Vec2 cp = g.node(cur).position;
      for (std::uint32_t n : options) {
        switch (classify_turn(pp, cp, g.node(n).position)) {
          case TurnClass::straight: w.push_back(weights.straight); break;
          case TurnClass::left: w.push_back(weights.left); break;
          case TurnClass::right: w.push_back(weights.right); break;
          case TurnClass::reverse: w.push_back(weights.reverse); break;
        }
      }
      const int pick = rng.weighted(w);
      next = pick >= 0 ? options[static_cast<std::size_t>(pick)] : options[rng.below(options.size())];
    }
    route.push_back(next);
    prev = cur;
    cur = next;
  }
  return route;
}

double path_length(const WaypointGraph& g, std::span<const std::uint32_t> path) {
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < path.size(); ++i) {
    const Edge* e = g.edge_between(path[i], path[i + 1]);
    if (e == nullptr) throw Error(ErrorCode::domain_error, "path uses a missing edge");
    total += e->length;
  }
  return total;
}

}  // namespace citysim
