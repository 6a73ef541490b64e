#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "citysim/city.hpp"
#include "citysim/city_io.hpp"
#include "citysim/error.hpp"

using namespace citysim;

namespace {

// One road between two dead ends, from (0,0) toward north or east.
RoadNetwork single_road(double len, Axis axis = Axis::NS) {
  RoadNetwork net;
  Intersection a;
  a.id = 0;
  Intersection b;
  b.id = 1;
  b.center = axis == Axis::NS ? Vec2{0, len} : Vec2{len, 0};
  a.arms[static_cast<int>(axis == Axis::NS ? Cardinal::N : Cardinal::E)] = 0;
  b.arms[static_cast<int>(axis == Axis::NS ? Cardinal::S : Cardinal::W)] = 0;
  a.corners = corner_points(a.center, 8);
  b.corners = corner_points(b.center, 8);
  RoadSegment r;
  r.from = 0;
  r.to = 1;
  r.axis = axis;
  r.a = a.center;
  r.b = b.center;
  net.roads = {r};
  net.intersections = {a, b};
  return net;
}

bool connected(const std::vector<RoadSegment>& roads, std::size_t n) {
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const RoadSegment& r : roads) parent[find(r.from)] = find(r.to);
  std::set<std::size_t> roots;
  for (std::size_t i = 0; i < n; ++i) roots.insert(find(i));
  return roots.size() == 1;
}

// Two axis-aligned segments may only touch at an intersection they share.
bool crossing_ok(const RoadSegment& s, const RoadSegment& t) {
  const Aabb a = Aabb::from_corners(s.a, s.b);
  const Aabb b = Aabb::from_corners(t.a, t.b);
  if (!a.intersects(b)) return true;
  const Aabb common{{std::max(a.min.x, b.min.x), std::max(a.min.y, b.min.y)},
                    {std::min(a.max.x, b.max.x), std::min(a.max.y, b.max.y)}};
  if (common.width() > 0 || common.height() > 0) return false;  // collinear overlap
  const std::set<std::uint32_t> ends_s{s.from, s.to};
  const Vec2 p = common.min;
  const bool at_s_end = p == s.a || p == s.b;
  const bool at_t_end = p == t.a || p == t.b;
  if (!at_s_end || !at_t_end) return false;
  const std::uint32_t ts = p == t.a ? t.from : t.to;
  return ends_s.count(ts) == 1;
}

CitySpec random_spec(Rng& rng, std::uint64_t seed) {
  CitySpec spec;
  spec.seed = seed;
  spec.target_area_km2 = rng.uniform(0.5, 3.0);
  spec.roads.initial_roads = static_cast<int>(rng.range(1, 4));
  spec.roads.max_depth = static_cast<int>(rng.range(0, 20));
  spec.roads.branch_probability = rng.uniform();
  spec.roads.segment_length = rng.uniform(120, 480);
  return spec;
}

}  // namespace

TEST_CASE("lattice lines are block-spaced and centered") {
  CitySpec spec;
  const auto lines = lattice_lines(spec);
  CHECK(lines.size() == 12);
  for (std::size_t i = 1; i < lines.size(); ++i) CHECK(lines[i] - lines[i - 1] == doctest::Approx(120));
  CHECK(lines.front() == doctest::Approx(-lines.back()));
  spec.target_area_km2 = 0.02;
  CHECK_THROWS_AS(lattice_lines(spec), Error);
  try {
    generate_roads(spec);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::spec_infeasible);
  }
}

TEST_CASE("spec validation rejects out-of-range parameters") {
  CitySpec spec;
  spec.roads.branch_probability = 1.5;
  CHECK_THROWS_AS(spec.validate(), Error);
  spec = {};
  spec.target_area_km2 = 0;
  CHECK_THROWS_AS(spec.validate(), Error);
  spec = {};
  spec.traffic.vehicles = -1;
  CHECK_THROWS_AS(spec.validate(), Error);
}

TEST_CASE("no growth allowed gives one segment between two dead ends") {
  CitySpec spec;
  spec.roads.initial_roads = 1;
  spec.roads.max_depth = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    spec.seed = seed;
    const RoadNetwork net = generate_roads(spec);
    CHECK(net.roads.size() == 1);
    CHECK(net.intersections.size() == 2);
    for (const Intersection& in : net.intersections) CHECK(in.arm_count() == 1);
  }
}

TEST_CASE("zero branch probability gives a single non-branching chain") {
  CitySpec spec;
  spec.roads.initial_roads = 1;
  spec.roads.branch_probability = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    spec.seed = seed;
    const RoadNetwork net = generate_roads(spec);
    CHECK(net.intersections.size() == net.roads.size() + 1);
    int ends = 0;
    for (const Intersection& in : net.intersections) {
      CHECK(in.arm_count() <= 2);
      ends += in.arm_count() == 1;
    }
    CHECK(ends == 2);
    std::set<Axis> axes;
    for (const RoadSegment& r : net.roads) axes.insert(r.axis);
    CHECK(axes.size() == 1);
  }
}

TEST_CASE("generated road graphs are connected, planar and axis-aligned") {
  Rng rng(123);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const CitySpec spec = random_spec(rng, seed);
    CAPTURE(seed);
    const RoadNetwork net = generate_roads(spec);
    REQUIRE(!net.roads.empty());
    CHECK(connected(net.roads, net.intersections.size()));
    for (const RoadSegment& r : net.roads) {
      CHECK(r.from != r.to);
      CHECK((r.a.x == r.b.x || r.a.y == r.b.y));
      CHECK(r.length() > 0);
      CHECK(r.a == net.intersections[r.from].center);
      CHECK(r.b == net.intersections[r.to].center);
    }
    for (const Intersection& in : net.intersections) {
      CHECK(in.arm_count() >= 1);
      CHECK(in.arm_count() <= 4);
      CHECK(in.signalized == (in.arm_count() >= 3));
      for (int c = 0; c < 4; ++c) {
        if (in.arms[c] < 0) continue;
        const RoadSegment& r = net.roads[static_cast<std::size_t>(in.arms[c])];
        CHECK((r.from == in.id || r.to == in.id));
      }
    }
    bool planar = true;
    for (std::size_t i = 0; i < net.roads.size(); ++i) {
      for (std::size_t j = i + 1; j < net.roads.size(); ++j) planar = planar && crossing_ok(net.roads[i], net.roads[j]);
    }
    CHECK(planar);
    // Intersection checking: no intersection sits closer than the minimum
    // spacing to a segment it does not terminate.
    for (const RoadSegment& r : net.roads) {
      for (const Intersection& in : net.intersections) {
        if (in.id == r.from || in.id == r.to) continue;
        CHECK(point_segment_distance(in.center, r.a, r.b) >= spec.roads.min_intersection_spacing);
      }
    }
  }
}

TEST_CASE("building packing on a single segment matches arithmetic") {
  CitySpec spec;
  spec.buildings.min_footprint = 20;
  spec.buildings.max_footprint = 20;
  spec.buildings.max_gap = 0;
  const double front = spec.frontage_offset();
  // Frontage F on each side: floor(F / 20) sampled buildings plus one fill
  // when the remainder reaches the fill-gap threshold.
  for (double frontage : {100.0, 110.0, 115.0, 50.0, 12.0, 11.0, 0.0}) {
    CAPTURE(frontage);
    const int sampled = static_cast<int>(std::floor(frontage / 20));
    const double rest = frontage - 20.0 * sampled;
    const int want = sampled + (rest >= spec.buildings.fill_gap_threshold ? 1 : 0);
    for (Axis axis : {Axis::NS, Axis::EW}) {
      Rng rng(1);
      const auto b = place_buildings(single_road(frontage + 2 * front, axis), spec, rng);
      int per_side[2] = {0, 0};
      for (const Building& x : b) per_side[x.side > 0 ? 1 : 0]++;
      CHECK(per_side[0] == want);
      CHECK(per_side[1] == want);
    }
  }
}

TEST_CASE("segment too short for a footprint gets no buildings") {
  CitySpec spec;
  Rng rng(3);
  const double len = spec.buildings.min_footprint + 2 * spec.buildings.setback - 0.5;
  CHECK(place_buildings(single_road(len), spec, rng).empty());
}

TEST_CASE("street element counts follow density times band length") {
  CitySpec spec;
  spec.elements.mix = {1, 0, 0, 0, 0};
  const double band = 100.0;
  const RoadNetwork net = single_road(band + 2 * spec.corridor_half_width());
  for (double density : {0.0, 0.5, 2.0, 2.5, 3.0, 7.0}) {
    spec.elements.density = density;
    const auto e = place_street_elements(net, {}, spec);
    CHECK(e.size() == 2 * static_cast<std::size_t>(std::floor(density * band / 100.0)));
    for (const StreetElement& x : e) CHECK(x.cls == ElementClass::tree);
  }
  spec.elements.density = 2;
  CHECK(place_street_elements(net, {}, spec).size() == 4);
}

TEST_CASE("elements respect zones, passage and buildings; density is monotone") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    CitySpec spec = hard_variant(CitySpec{});
    spec.seed = seed;
    const CityMap m = generate_city(spec);
    REQUIRE(!m.elements.empty());
    const double inner = spec.roads.road_width / 2;
    const double outer = spec.corridor_half_width();
    const double front = spec.frontage_offset();
    for (const StreetElement& e : m.elements) {
      const RoadSegment& r = m.roads[e.road];
      // Lateral extent measured from the road centerline.
      const bool ns = r.axis == Axis::NS;
      const double lo = ns ? std::min(std::abs(e.footprint.min.x - r.a.x), std::abs(e.footprint.max.x - r.a.x))
                           : std::min(std::abs(e.footprint.min.y - r.a.y), std::abs(e.footprint.max.y - r.a.y));
      const double hi = ns ? std::max(std::abs(e.footprint.min.x - r.a.x), std::abs(e.footprint.max.x - r.a.x))
                           : std::max(std::abs(e.footprint.min.y - r.a.y), std::abs(e.footprint.max.y - r.a.y));
      if (e.zone == Zone::sidewalk) {
        CHECK(lo >= inner - 1e-9);
        CHECK(hi <= outer + 1e-9);
      } else {
        CHECK(lo >= outer - 1e-9);
        CHECK(hi <= front + 1e-9);
      }
      const double blocked = std::max(0.0, std::min(hi, outer) - std::max(lo, inner));
      CHECK(outer - inner - blocked >= 1.2);
      for (const Building& b : m.buildings) CHECK_FALSE(b.footprint.overlaps(e.footprint));
    }

    CitySpec denser = spec;
    denser.elements.density = spec.elements.density * 2;
    const CityMap m2 = generate_city(denser);
    CHECK(m2.elements.size() >= m.elements.size());
    std::map<std::tuple<std::uint32_t, int, int>, int> c1, c2;
    for (const StreetElement& e : m.elements) c1[{e.road, e.side, static_cast<int>(e.cls)}]++;
    for (const StreetElement& e : m2.elements) c2[{e.road, e.side, static_cast<int>(e.cls)}]++;
    for (const auto& [k, n] : c1) CHECK(c2[k] >= n);
  }
}

TEST_CASE("buildings never overlap each other, roads or intersections") {
  Rng rng(77);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    CitySpec spec = random_spec(rng, seed);
    spec.target_area_km2 = std::min(spec.target_area_km2, 1.5);
    CAPTURE(seed);
    const CityMap m = generate_city(spec);
    const double half = spec.corridor_half_width();
    bool ok = true;
    for (std::size_t i = 0; i < m.buildings.size(); ++i) {
      const Building& b = m.buildings[i];
      for (std::size_t j = i + 1; j < m.buildings.size(); ++j) ok = ok && !b.footprint.overlaps(m.buildings[j].footprint);
      for (const RoadSegment& r : m.roads) ok = ok && !b.footprint.overlaps(road_corridor(r, half));
      for (const Intersection& in : m.intersections) ok = ok && !b.footprint.overlaps(Aabb::from_center(in.center, half, half));
      // Door on the sidewalk band of the facing road, in front of the building.
      const RoadSegment& r = m.roads[b.road];
      const Vec2 rel = b.door - r.a;
      const double along = dot(rel, r.tangent());
      const double lateral = dot(rel, r.normal(b.side));
      ok = ok && along >= 0 && along <= r.length();
      ok = ok && lateral >= spec.roads.road_width / 2 && lateral <= half;
      ok = ok && b.facing == r.side_cardinal(b.side);
    }
    CHECK(ok);
  }
}

TEST_CASE("generate_city is deterministic and seed-sensitive") {
  CitySpec spec;
  spec.seed = 42;
  CHECK(serialize_map(generate_city(spec)) == serialize_map(generate_city(spec)));
  int differ = 0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    CitySpec a;
    a.seed = 2 * s;
    CitySpec b;
    b.seed = 2 * s + 1;
    const RoadNetwork na = generate_roads(a);
    const RoadNetwork nb = generate_roads(b);
    bool same = na.roads.size() == nb.roads.size();
    for (std::size_t i = 0; same && i < na.roads.size(); ++i) same = na.roads[i].a == nb.roads[i].a && na.roads[i].b == nb.roads[i].b;
    differ += same ? 0 : 1;
  }
  CHECK(differ >= 1);
  MESSAGE("road graphs differing across 20 seed pairs: " << differ);
}

TEST_CASE("2 km2 target yields bounds within the calibration band") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    CitySpec spec;
    spec.seed = seed;
    const CityMap m = generate_city(spec);
    CHECK(m.area_km2() >= 1.6);
    CHECK(m.area_km2() <= 2.4);
  }
}

TEST_CASE("traffic population records") {
  CitySpec spec = hard_variant(CitySpec{}, 6.0, 7, 9);
  const CityMap m = generate_city(spec);
  REQUIRE(m.spawns.size() == 16);
  int vehicles = 0;
  for (const SpawnRecord& s : m.spawns) {
    vehicles += s.kind == AgentKind::vehicle;
    CHECK((s.side == 1 || s.side == -1));
    CHECK(s.road < m.roads.size());
    CHECK(s.along >= 0);
    CHECK(s.along <= m.roads[s.road].length());
  }
  CHECK(vehicles == 7);
  CHECK(generate_city(easy_variant(spec)).spawns.empty());
  CHECK(generate_city(easy_variant(spec)).elements.empty());
}

TEST_CASE("catalog descriptions and training pool") {
  const auto cat = building_catalog();
  CHECK(cat.size() == 60);
  std::set<std::pair<std::string, std::string>> pairs;
  for (const BuildingAsset& a : cat) pairs.insert({a.color, a.material});
  CHECK(pairs.size() == 60);
  BuildingAsset a{"x", "red", "tall", "brick", "a cafe sign", false};
  CHECK(describe(a) == "a tall red brick building with a cafe sign");
  a.signage.clear();
  CHECK(describe(a) == "a tall red brick building");

  CitySpec spec;
  spec.buildings.asset_pool = AssetPool::train;
  for (const Building& b : generate_city(spec).buildings) {
    const BuildingAsset* asset = find_asset(b.asset);
    REQUIRE(asset);
    CHECK_FALSE(asset->test_only);
  }
}

TEST_CASE("map files round-trip bit-exactly") {
  CitySpec spec = hard_variant(CitySpec{});
  spec.seed = 9;
  const CityMap m = generate_city(spec);
  const std::string text = serialize_map(m);
  const CityMap back = parse_map(text);
  CHECK(serialize_map(back) == text);
  CHECK(map_hash(back) == map_hash(m));
  CHECK(back.buildings.size() == m.buildings.size());
  CHECK(back.scene().boxes().size() == m.scene().boxes().size());

  Json j = Json::parse(text);
  j["version"] = 99;
  CHECK_THROWS_AS(map_from_json(j), Error);
  Json k = Json::parse(text);
  k.erase("roads");
  CHECK_THROWS_AS(map_from_json(k), Error);
  CHECK_THROWS_AS(parse_map("{not json"), Error);
  Json big = Json::parse(text);
  big["spec"]["seed"] = "18446744073709551615";
  CHECK(map_from_json(big).spec.seed == 18446744073709551615ULL);
}
