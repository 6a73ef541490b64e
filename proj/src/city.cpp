#include "citysim/city.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <queue>
#include <tuple>

#include "citysim/error.hpp"

namespace citysim {

namespace {

constexpr std::array<std::string_view, kElementClassCount> kElementNames = {
    "tree", "cone", "bench", "parked_vehicle", "barrier",
};

// Footprint of each element class: extent along the road, extent across it.
struct ElementShape {
  double along;
  double lateral;
  Zone zone;
};
constexpr std::array<ElementShape, kElementClassCount> kElementShapes = {{
    {1.2, 1.2, Zone::sidewalk},
    {0.5, 0.5, Zone::sidewalk},
    {1.8, 0.6, Zone::building_adjacent},
    {4.0, 1.5, Zone::sidewalk},
    {2.0, 0.5, Zone::building_adjacent},
}};

double round_half(double x) { return std::round(x * 2.0) / 2.0; }

Cardinal opposite(Cardinal c) { return static_cast<Cardinal>((static_cast<int>(c) + 2) % 4); }
Cardinal rotate_cw(Cardinal c) { return static_cast<Cardinal>((static_cast<int>(c) + 1) % 4); }
Cardinal rotate_ccw(Cardinal c) { return static_cast<Cardinal>((static_cast<int>(c) + 3) % 4); }

// Road growth over a square lattice of candidate intersection points.
class RoadGrower {
 public:
  RoadGrower(const CitySpec& spec, std::vector<double> lines)
      : spec_(spec), lines_(std::move(lines)), n_(static_cast<int>(lines_.size())),
        point_node_(static_cast<std::size_t>(n_ * n_), -1), point_inside_(static_cast<std::size_t>(n_ * n_), -1),
        rng_(derive_seed(spec.seed, Stream::roads)) {}

  RoadNetwork run() {
    const int c = (n_ - 1) / 2;
    const std::int32_t start = node_at(c, c);
    std::array<Cardinal, 4> dirs = {Cardinal::N, Cardinal::E, Cardinal::S, Cardinal::W};
    rng_.shuffle(dirs);
    const int initial = std::clamp(spec_.roads.initial_roads, 1, 4);
    for (int k = 0; k < initial; ++k) push(start, dirs[k], 0);

    while (!queue_.empty()) {
      const Candidate cand = queue_.top();
      queue_.pop();
      grow(cand);
    }
    finish();
    return std::move(net_);
  }

 private:
  struct Candidate {
    int depth;
    std::uint64_t tiebreak;
    std::uint64_t seq;
    std::uint32_t node;
    Cardinal dir;

    bool operator>(const Candidate& o) const {
      return std::tie(depth, tiebreak, seq) > std::tie(o.depth, o.tiebreak, o.seq);
    }
  };

  int index(int i, int j) const { return j * n_ + i; }
  Vec2 position(int i, int j) const { return {lines_[i], lines_[j]}; }

  std::int32_t node_at(int i, int j) {
    std::int32_t& slot = point_node_[index(i, j)];
    if (slot < 0) {
      Intersection in;
      in.id = static_cast<std::uint32_t>(net_.intersections.size());
      in.center = position(i, j);
      net_.intersections.push_back(in);
      grid_.push_back({i, j});
      slot = static_cast<std::int32_t>(in.id);
    }
    return slot;
  }

  void push(std::uint32_t node, Cardinal dir, int depth) {
    if (depth > spec_.roads.max_depth) return;
    queue_.push({depth, rng_.next_u64(), seq_++, node, dir});
  }

  // Snap a grid point to an existing intersection within tolerance.
  std::int32_t existing_near(Vec2 p) const {
    for (const Intersection& in : net_.intersections) {
      if (distance(in.center, p) <= spec_.roads.snap_tolerance) return static_cast<std::int32_t>(in.id);
    }
    return -1;
  }

  void grow(const Candidate& cand) {
    Intersection& origin = net_.intersections[cand.node];
    if (origin.has_arm(cand.dir)) return;
    const auto [oi, oj] = grid_[cand.node];
    const int di = cand.dir == Cardinal::E ? 1 : cand.dir == Cardinal::W ? -1 : 0;
    const int dj = cand.dir == Cardinal::N ? 1 : cand.dir == Cardinal::S ? -1 : 0;

    int available = 0;
    for (int i = oi + di, j = oj + dj; i >= 0 && j >= 0 && i < n_ && j < n_; i += di, j += dj) ++available;
    const int kmax = std::max(1, static_cast<int>(std::floor(spec_.roads.segment_length / spec_.roads.block_size)));
    int k = static_cast<int>(rng_.range(1, kmax));
    const bool spawn_left = rng_.bernoulli(spec_.roads.branch_probability);
    const bool spawn_right = rng_.bernoulli(spec_.roads.branch_probability);
    k = std::min(k, available);
    if (k == 0) return;

    const int ei = oi + di * k;
    const int ej = oj + dj * k;
    const Vec2 from_pos = position(oi, oj);
    const Vec2 end_pos = position(ei, ej);

    // Lattice points strictly between the ends must be free of other roads.
    for (int s = 1; s < k; ++s) {
      const int idx = index(oi + di * s, oj + dj * s);
      if (point_node_[idx] >= 0 || point_inside_[idx] >= 0) return;
    }
    if (point_inside_[index(ei, ej)] >= 0) return;

    const std::int32_t snapped = existing_near(end_pos);
    if (snapped >= 0 && net_.intersections[snapped].has_arm(opposite(cand.dir))) return;

    // Intersection checking: no unrelated intersection may sit near the new
    // segment's midline.
    for (const Intersection& in : net_.intersections) {
      if (in.id == cand.node || static_cast<std::int32_t>(in.id) == snapped) continue;
      if (point_segment_distance(in.center, from_pos, end_pos) < spec_.roads.min_intersection_spacing) return;
    }

    const std::uint32_t end = snapped >= 0 ? static_cast<std::uint32_t>(snapped) : node_at(ei, ej);
    const auto seg_id = static_cast<std::uint32_t>(net_.roads.size());
    for (int s = 1; s < k; ++s) point_inside_[index(oi + di * s, oj + dj * s)] = static_cast<std::int32_t>(seg_id);

    RoadSegment seg;
    seg.id = seg_id;
    seg.axis = axis_of(cand.dir);
    seg.depth = cand.depth;
    seg.width = spec_.roads.road_width;
    seg.sidewalk_offset = spec_.sidewalk_offset();
    const bool forward = cand.dir == Cardinal::N || cand.dir == Cardinal::E;
    seg.from = forward ? cand.node : end;
    seg.to = forward ? end : cand.node;
    seg.a = net_.intersections[seg.from].center;
    seg.b = net_.intersections[seg.to].center;
    net_.roads.push_back(seg);
    net_.intersections[cand.node].arms[static_cast<int>(cand.dir)] = static_cast<std::int32_t>(seg_id);
    net_.intersections[end].arms[static_cast<int>(opposite(cand.dir))] = static_cast<std::int32_t>(seg_id);

    // Road-end attachment closes a loop; growth continues only from new ends.
    if (snapped >= 0) return;
    push(end, cand.dir, cand.depth + 1);
    if (spawn_left) push(end, rotate_ccw(cand.dir), cand.depth + 1);
    if (spawn_right) push(end, rotate_cw(cand.dir), cand.depth + 1);
  }

  void finish() {
    const double offset = spec_.sidewalk_offset();
    for (Intersection& in : net_.intersections) {
      in.corners = corner_points(in.center, offset);
      in.signalized = in.arm_count() >= 3;
    }
  }

  const CitySpec& spec_;
  std::vector<double> lines_;
  int n_;
  std::vector<std::int32_t> point_node_;
  std::vector<std::int32_t> point_inside_;
  std::vector<std::pair<int, int>> grid_;
  Rng rng_;
  std::priority_queue<Candidate, std::vector<Candidate>, std::greater<>> queue_;
  std::uint64_t seq_ = 0;
  RoadNetwork net_;
};

Aabb intersection_box(const Intersection& in, double half) { return Aabb::from_center(in.center, half, half); }

// Box spanning [along0, along1] x [lat0, lat1] on one side of a road.
Aabb side_box(const RoadSegment& r, int side, double along0, double along1, double lat0, double lat1) {
  return Aabb::from_corners(r.point(along0, lat0, side), r.point(along1, lat1, side));
}

struct Interval {
  double lo;
  double hi;
};

class BuildingPlacer {
 public:
  BuildingPlacer(const RoadNetwork& net, const CitySpec& spec, Rng& rng)
      : net_(net), spec_(spec), rng_(rng), blockers_(bounds(net, spec)) {
    const double half = spec.corridor_half_width();
    std::uint32_t key = 0;
    for (const RoadSegment& r : net.roads) blockers_.insert(key++, road_corridor(r, half));
    for (const Intersection& in : net.intersections) blockers_.insert(key++, intersection_box(in, half));
    for (const BuildingAsset& a : building_catalog()) {
      if (spec.buildings.asset_pool == AssetPool::all || !a.test_only) assets_.push_back(&a);
    }
  }

  std::vector<Building> run() {
    for (const RoadSegment& r : net_.roads) {
      for (int side : {-1, 1}) {
        sample_side(r, side);
        fill_side(r, side);
      }
    }
    return std::move(out_);
  }

 private:
  static Aabb bounds(const RoadNetwork& net, const CitySpec& spec) {
    Aabb b{{0, 0}, {1, 1}};
    if (!net.intersections.empty()) {
      b = Aabb::from_center(net.intersections.front().center, 1, 1);
      for (const Intersection& in : net.intersections) b = b.merged(Aabb::from_center(in.center, 1, 1));
    }
    const double margin = spec.frontage_offset() + spec.buildings.max_footprint + 1.0;
    return b.inflated(margin, margin);
  }

  double draw(double lo, double hi) { return round_half(rng_.uniform(lo, hi)); }

  bool fits(const Aabb& box) const { return !blockers_.any_overlap(box); }

  void place(const RoadSegment& r, int side, double along0, double width, double depth) {
    const double front = spec_.frontage_offset();
    Building b;
    b.id = static_cast<std::uint32_t>(out_.size());
    b.footprint = side_box(r, side, along0, along0 + width, front, front + depth);
    b.door = r.point(along0 + width / 2, r.sidewalk_offset, side);
    b.road = r.id;
    b.side = side;
    b.facing = r.side_cardinal(side);
    const BuildingAsset& asset = *assets_[rng_.below(assets_.size())];
    b.asset = asset.tag;
    b.color = asset.color;
    b.height = asset.height;
    b.material = asset.material;
    b.signage = asset.signage;
    blockers_.insert(static_cast<std::uint32_t>(1u << 30) + b.id, b.footprint);
    out_.push_back(std::move(b));
    occupied_.push_back({along0, along0 + width});
  }

  // Deepest footprint (from `depth` down to the minimum) that fits, or 0.
  double fit_depth(const RoadSegment& r, int side, double along0, double width, double depth) const {
    const double front = spec_.frontage_offset();
    const double min_depth = spec_.buildings.min_footprint;
    for (double d = depth;; d -= 5.0) {
      if (d < min_depth) d = min_depth;
      if (fits(side_box(r, side, along0, along0 + width, front, front + d))) return d;
      if (d == min_depth) return 0.0;
    }
  }

  void sample_side(const RoadSegment& r, int side) {
    const BuildingParams& p = spec_.buildings;
    const double front = spec_.frontage_offset();
    const double start = front;
    const double end = r.length() - front;
    occupied_.clear();
    double pos = start;
    while (pos < end) {
      const double gap = draw(0.0, p.max_gap);
      const double width = draw(p.min_footprint, p.max_footprint);
      const double depth = draw(p.min_footprint, p.max_footprint);
      const double lo = pos + gap;
      if (lo + width > end) break;
      const double d = fit_depth(r, side, lo, width, depth);
      if (d > 0.0) {
        place(r, side, lo, width, d);
        pos = lo + width;
      } else {
        pos += 2.0;
      }
    }
  }

  // Greedy gap filling with the widest footprint that fits, flush against
  // the gap end nearer to the segment end.
  void fill_side(const RoadSegment& r, int side) {
    const BuildingParams& p = spec_.buildings;
    const double front = spec_.frontage_offset();
    const double start = front;
    const double end = r.length() - front;
    if (end - start < p.fill_gap_threshold) return;
    for (;;) {
      std::sort(occupied_.begin(), occupied_.end(), [](const Interval& a, const Interval& b) { return a.lo < b.lo; });
      std::vector<Interval> gaps;
      double cursor = start;
      for (const Interval& iv : occupied_) {
        if (iv.lo - cursor >= p.fill_gap_threshold) gaps.push_back({cursor, iv.lo});
        cursor = std::max(cursor, iv.hi);
      }
      if (end - cursor >= p.fill_gap_threshold) gaps.push_back({cursor, end});

      bool placed = false;
      for (const Interval& g : gaps) {
        const double width = std::min(g.hi - g.lo, p.max_footprint);
        const double mid = r.length() / 2;
        const bool near_lo = (g.lo + g.hi) / 2 < mid;
        const double lo = near_lo ? g.lo : g.hi - width;
        const double d = fit_depth(r, side, lo, width, p.max_footprint);
        if (d > 0.0) {
          place(r, side, lo, width, d);
          placed = true;
          break;
        }
        // Mark unfillable gaps so the loop terminates.
        occupied_.push_back(g);
      }
      if (!placed) return;
    }
  }

  const RoadNetwork& net_;
  const CitySpec& spec_;
  Rng& rng_;
  QuadTree blockers_;
  std::vector<const BuildingAsset*> assets_;
  std::vector<Building> out_;
  std::vector<Interval> occupied_;
};

}  // namespace

std::string_view element_class_name(ElementClass c) { return kElementNames[static_cast<std::size_t>(c)]; }

ElementClass element_class_from_name(std::string_view s) {
  for (std::size_t i = 0; i < kElementNames.size(); ++i) {
    if (kElementNames[i] == s) return static_cast<ElementClass>(i);
  }
  throw Error(ErrorCode::schema_error, "unknown element class: " + std::string(s));
}

std::string_view agent_kind_name(AgentKind k) {
  switch (k) {
    case AgentKind::vehicle: return "vehicle";
    case AgentKind::pedestrian: return "pedestrian";
    case AgentKind::robot: return "robot";
  }
  return "?";
}

double ElementParams::class_density(ElementClass c) const {
  double total = 0.0;
  for (double w : mix) total += w;
  if (total <= 0.0) return 0.0;
  return density * mix[static_cast<std::size_t>(c)] / total;
}

void CitySpec::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::config_error, "invalid city spec: " + what); };
  if (!(target_area_km2 > 0.0)) fail("target_area must be > 0");
  if (roads.initial_roads < 0 || roads.max_depth < 0) fail("road counts must be >= 0");
  if (roads.branch_probability < 0.0 || roads.branch_probability > 1.0) fail("branch_probability outside [0,1]");
  if (!(roads.block_size > 0.0) || !(roads.segment_length > 0.0)) fail("block_size and segment_length must be > 0");
  if (!(roads.road_width > 0.0) || roads.sidewalk_width < 0.0) fail("road/sidewalk width");
  if (buildings.min_footprint <= 0.0 || buildings.max_footprint < buildings.min_footprint) fail("footprint range");
  if (buildings.setback < 0.0 || buildings.max_gap < 0.0 || buildings.fill_gap_threshold <= 0.0) fail("building spacing");
  if (elements.density < 0.0) fail("element density must be >= 0");
  for (double w : elements.mix) {
    if (w < 0.0) fail("element mix weights must be >= 0");
  }
  if (traffic.vehicles < 0 || traffic.pedestrians < 0) fail("traffic counts must be >= 0");
}

CitySpec hard_variant(CitySpec spec, double element_density, int vehicles, int pedestrians) {
  spec.elements.density = element_density;
  spec.traffic.vehicles = vehicles;
  spec.traffic.pedestrians = pedestrians;
  return spec;
}

CitySpec easy_variant(CitySpec spec) {
  spec.elements.density = 0.0;
  spec.traffic = {};
  return spec;
}

Cardinal RoadSegment::side_cardinal(int side) const {
  if (axis == Axis::NS) return side > 0 ? Cardinal::E : Cardinal::W;
  return side > 0 ? Cardinal::N : Cardinal::S;
}

int Intersection::arm_count() const {
  int n = 0;
  for (std::int32_t a : arms) n += a >= 0 ? 1 : 0;
  return n;
}

std::string Building::description() const {
  BuildingAsset a{asset, color, height, material, signage, false};
  return describe(a);
}

std::array<Vec2, 4> corner_points(Vec2 c, double o) {
  return {Vec2{c.x + o, c.y + o}, Vec2{c.x + o, c.y - o}, Vec2{c.x - o, c.y - o}, Vec2{c.x - o, c.y + o}};
}

Aabb road_corridor(const RoadSegment& r, double half_width) {
  if (r.axis == Axis::NS) return {{r.a.x - half_width, r.a.y}, {r.a.x + half_width, r.b.y}};
  return {{r.a.x, r.a.y - half_width}, {r.b.x, r.a.y + half_width}};
}

std::vector<double> lattice_lines(const CitySpec& spec) {
  const double side = std::sqrt(spec.target_area_km2 * 1e6);
  const double margin = spec.frontage_offset() + spec.buildings.max_footprint;
  const double u = spec.roads.block_size;
  const double usable = side - 2.0 * margin;
  const int n = usable < 0.0 ? 0 : static_cast<int>(std::floor(usable / u + 1e-9)) + 1;
  if (n < 2) {
    throw Error(ErrorCode::spec_infeasible, "target area cannot host a single block of the given block size");
  }
  std::vector<double> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out[i] = (i - (n - 1) / 2.0) * u;
  return out;
}

RoadNetwork generate_roads(const CitySpec& spec) {
  spec.validate();
  RoadGrower grower(spec, lattice_lines(spec));
  return grower.run();
}

std::vector<Building> place_buildings(const RoadNetwork& net, const CitySpec& spec, Rng& rng) {
  BuildingPlacer placer(net, spec, rng);
  return placer.run();
}

std::vector<StreetElement> place_street_elements(const RoadNetwork& net, const std::vector<Building>& buildings,
                                                 const CitySpec& spec) {
  std::vector<StreetElement> out;
  if (spec.elements.density <= 0.0) return out;
  QuadTree blocked(Aabb{{-1e6, -1e6}, {1e6, 1e6}});
  for (const Building& b : buildings) blocked.insert(b.id, b.footprint);

  const double inner = spec.roads.road_width / 2;                  // sidewalk starts here
  const double outer = spec.corridor_half_width();                 // and ends here
  const double front = spec.frontage_offset();
  const std::uint64_t base = derive_seed(spec.seed, Stream::elements);
  for (const RoadSegment& r : net.roads) {
    const double band_lo = outer;
    const double band_hi = r.length() - outer;
    const double band_len = band_hi - band_lo;
    if (band_len <= 0.0) continue;
    for (int side : {-1, 1}) {
      for (int c = 0; c < kElementClassCount; ++c) {
        const auto cls = static_cast<ElementClass>(c);
        const double per100 = spec.elements.class_density(cls);
        const int count = static_cast<int>(std::floor(per100 * band_len / 100.0 + 1e-9));
        if (count <= 0) continue;
        const ElementShape& shape = kElementShapes[c];
        if (shape.along > band_len) continue;
        // One stream per (road, side, class): raising a density only appends.
        const std::uint64_t key = (static_cast<std::uint64_t>(r.id) << 8) | (static_cast<std::uint64_t>(side + 1) << 4) |
                                  static_cast<std::uint64_t>(c);
        Rng rng(derive_seed(base, key));
        const double lat0 = shape.zone == Zone::sidewalk ? inner : front - shape.lateral;
        for (int k = 0; k < count; ++k) {
          for (int attempt = 0; attempt < 8; ++attempt) {
            const double center = round_half(rng.uniform(band_lo + shape.along / 2, band_hi - shape.along / 2));
            const Aabb box = side_box(r, side, center - shape.along / 2, center + shape.along / 2, lat0, lat0 + shape.lateral);
            if (blocked.any_overlap(box)) continue;
            StreetElement e;
            e.id = static_cast<std::uint32_t>(out.size());
            e.cls = cls;
            e.footprint = box;
            e.zone = shape.zone;
            e.road = r.id;
            e.side = side;
            out.push_back(e);
            break;
          }
        }
      }
    }
  }
  return out;
}

std::vector<SpawnRecord> populate_traffic(const RoadNetwork& net, const CitySpec& spec, Rng& rng) {
  std::vector<SpawnRecord> out;
  if (net.roads.empty()) return out;
  std::vector<double> weights;
  for (const RoadSegment& r : net.roads) weights.push_back(r.length());
  const double margin = spec.corridor_half_width() + 2.0;
  auto spawn = [&](AgentKind kind) {
    const auto road = static_cast<std::uint32_t>(rng.weighted(weights));
    const RoadSegment& r = net.roads[road];
    SpawnRecord s;
    s.id = static_cast<std::uint32_t>(out.size());
    s.kind = kind;
    s.road = road;
    s.side = rng.bernoulli(0.5) ? 1 : -1;
    s.along = round_half(rng.uniform(margin, std::max(margin, r.length() - margin)));
    out.push_back(s);
  };
  for (int i = 0; i < spec.traffic.vehicles; ++i) spawn(AgentKind::vehicle);
  for (int i = 0; i < spec.traffic.pedestrians; ++i) spawn(AgentKind::pedestrian);
  return out;
}

CityMap generate_city(const CitySpec& spec) {
  CityMap map;
  map.spec = spec;
  RoadNetwork net = generate_roads(spec);
  Rng building_rng(derive_seed(spec.seed, Stream::buildings));
  map.buildings = place_buildings(net, spec, building_rng);
  map.elements = place_street_elements(net, map.buildings, spec);
  Rng traffic_rng(derive_seed(spec.seed, Stream::traffic));
  map.spawns = populate_traffic(net, spec, traffic_rng);
  map.roads = std::move(net.roads);
  map.intersections = std::move(net.intersections);

  const double half = spec.corridor_half_width();
  Aabb bounds = Aabb::from_center(map.intersections.front().center, half, half);
  for (const RoadSegment& r : map.roads) bounds = bounds.merged(road_corridor(r, half));
  for (const Intersection& in : map.intersections) bounds = bounds.merged(intersection_box(in, half));
  for (const Building& b : map.buildings) bounds = bounds.merged(b.footprint);
  for (const StreetElement& e : map.elements) bounds = bounds.merged(e.footprint);
  map.bounds = bounds;
  map.finalize();
  return map;
}

void CityMap::finalize() {
  std::vector<SceneBox> statics;
  std::vector<SceneBox> tall;
  statics.reserve(buildings.size() + elements.size());
  for (const Building& b : buildings) {
    statics.push_back({b.id, EntityClass::building, b.footprint});
    tall.push_back({b.id, EntityClass::building, b.footprint});
  }
  for (const StreetElement& e : elements) {
    const EntityClass cls = e.cls == ElementClass::tree ? EntityClass::tree : EntityClass::element;
    statics.push_back({e.id, cls, e.footprint});
    if (cls == EntityClass::tree) tall.push_back({e.id, cls, e.footprint});
  }
  scene_ = RayScene(std::move(statics));
  building_scene_ = RayScene(std::move(tall));

  carriageway_boxes_.clear();
  const double half = spec.roads.road_width / 2;
  for (const RoadSegment& r : roads) carriageway_boxes_.push_back(road_corridor(r, half));
  for (const Intersection& in : intersections) carriageway_boxes_.push_back(intersection_box(in, half));
  carriageway_ = QuadTree(bounds.inflated(1.0, 1.0));
  for (std::size_t i = 0; i < carriageway_boxes_.size(); ++i) {
    carriageway_.insert(static_cast<std::uint32_t>(i), carriageway_boxes_[i]);
  }
}

bool CityMap::on_carriageway(Vec2 p) const {
  const Aabb probe{p, p};
  for (std::uint32_t i : carriageway_.query(probe)) {
    if (carriageway_boxes_[i].contains(p)) return true;
  }
  return false;
}

Aabb CityMap::crosswalk_band(const Intersection& in, Cardinal arm) const {
  const double half = spec.roads.road_width / 2;
  const double outer = spec.corridor_half_width();
  const Vec2 c = in.center;
  switch (arm) {
    case Cardinal::N: return {{c.x - half, c.y + half}, {c.x + half, c.y + outer}};
    case Cardinal::S: return {{c.x - half, c.y - outer}, {c.x + half, c.y - half}};
    case Cardinal::E: return {{c.x + half, c.y - half}, {c.x + outer, c.y + half}};
    case Cardinal::W: return {{c.x - outer, c.y - half}, {c.x - half, c.y + half}};
  }
  return {};
}

}  // namespace citysim
