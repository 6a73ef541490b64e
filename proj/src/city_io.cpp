#include "citysim/city_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "citysim/error.hpp"
#include "json_fields.hpp"

namespace citysim {

using namespace detail;

namespace {

Axis axis_from(const std::string& s) {
  if (s == "NS") return Axis::NS;
  if (s == "EW") return Axis::EW;
  schema_fail("bad axis: " + s);
}

Zone zone_from(const std::string& s) {
  if (s == "sidewalk") return Zone::sidewalk;
  if (s == "building_adjacent") return Zone::building_adjacent;
  schema_fail("bad zone: " + s);
}

AgentKind kind_from(const std::string& s) {
  if (s == "vehicle") return AgentKind::vehicle;
  if (s == "pedestrian") return AgentKind::pedestrian;
  if (s == "robot") return AgentKind::robot;
  schema_fail("bad agent kind: " + s);
}

}  // namespace

Json vec_json(Vec2 v) { return Json::array({v.x, v.y}); }

Vec2 vec_from(const Json& j) {
  if (!j.is_array() || j.size() != 2) schema_fail("expected [x, y]");
  return {j[0].get<double>(), j[1].get<double>()};
}

Json box_json(const Aabb& b) { return Json::array({b.min.x, b.min.y, b.max.x, b.max.y}); }

Aabb box_from(const Json& j) {
  if (!j.is_array() || j.size() != 4) schema_fail("expected [minx, miny, maxx, maxy]");
  Aabb b{{j[0].get<double>(), j[1].get<double>()}, {j[2].get<double>(), j[3].get<double>()}};
  if (!b.valid()) schema_fail("inverted box");
  return b;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

Json to_json(const CitySpec& s) {
  Json j;
  // Seeds are written as strings: JSON numbers above 2^53 do not survive
  // every reader.
  j["seed"] = std::to_string(s.seed);
  j["target_area_km2"] = s.target_area_km2;
  j["roads"] = {
      {"initial_roads", s.roads.initial_roads},
      {"max_depth", s.roads.max_depth},
      {"branch_probability", s.roads.branch_probability},
      {"segment_length", s.roads.segment_length},
      {"block_size", s.roads.block_size},
      {"road_width", s.roads.road_width},
      {"sidewalk_width", s.roads.sidewalk_width},
      {"snap_tolerance", s.roads.snap_tolerance},
      {"min_intersection_spacing", s.roads.min_intersection_spacing},
  };
  j["buildings"] = {
      {"setback", s.buildings.setback},
      {"min_footprint", s.buildings.min_footprint},
      {"max_footprint", s.buildings.max_footprint},
      {"fill_gap_threshold", s.buildings.fill_gap_threshold},
      {"max_gap", s.buildings.max_gap},
      {"asset_pool", asset_pool_name(s.buildings.asset_pool)},
  };
  Json mix = Json::object();
  for (int c = 0; c < kElementClassCount; ++c) {
    mix[std::string(element_class_name(static_cast<ElementClass>(c)))] = s.elements.mix[c];
  }
  j["elements"] = {{"density", s.elements.density}, {"mix", mix}};
  j["traffic"] = {{"vehicles", s.traffic.vehicles}, {"pedestrians", s.traffic.pedestrians}};
  return j;
}

CitySpec spec_from_json(const Json& j) {
  CitySpec s;
  if (auto it = j.find("seed"); it != j.end()) {
    if (it->is_string()) {
      s.seed = std::stoull(it->get<std::string>());
    } else {
      s.seed = it->get<std::uint64_t>();
    }
  }
  read_opt(j, "target_area_km2", s.target_area_km2);
  if (auto it = j.find("roads"); it != j.end()) {
    read_opt(*it, "initial_roads", s.roads.initial_roads);
    read_opt(*it, "max_depth", s.roads.max_depth);
    read_opt(*it, "branch_probability", s.roads.branch_probability);
    read_opt(*it, "segment_length", s.roads.segment_length);
    read_opt(*it, "block_size", s.roads.block_size);
    read_opt(*it, "road_width", s.roads.road_width);
    read_opt(*it, "sidewalk_width", s.roads.sidewalk_width);
    read_opt(*it, "snap_tolerance", s.roads.snap_tolerance);
    read_opt(*it, "min_intersection_spacing", s.roads.min_intersection_spacing);
  }
  if (auto it = j.find("buildings"); it != j.end()) {
    read_opt(*it, "setback", s.buildings.setback);
    read_opt(*it, "min_footprint", s.buildings.min_footprint);
    read_opt(*it, "max_footprint", s.buildings.max_footprint);
    read_opt(*it, "fill_gap_threshold", s.buildings.fill_gap_threshold);
    read_opt(*it, "max_gap", s.buildings.max_gap);
    if (auto p = it->find("asset_pool"); p != it->end()) s.buildings.asset_pool = asset_pool_from_name(p->get<std::string>());
  }
  if (auto it = j.find("elements"); it != j.end()) {
    read_opt(*it, "density", s.elements.density);
    if (auto m = it->find("mix"); m != it->end()) {
      for (int c = 0; c < kElementClassCount; ++c) {
        read_opt(*m, std::string(element_class_name(static_cast<ElementClass>(c))).c_str(), s.elements.mix[c]);
      }
    }
  }
  if (auto it = j.find("traffic"); it != j.end()) {
    read_opt(*it, "vehicles", s.traffic.vehicles);
    read_opt(*it, "pedestrians", s.traffic.pedestrians);
  }
  s.validate();
  return s;
}

Json to_json(const CityMap& m) {
  Json j;
  j["schema"] = kMapSchema;
  j["version"] = kMapVersion;
  j["spec"] = to_json(m.spec);
  j["bounds"] = box_json(m.bounds);
  Json roads = Json::array();
  for (const RoadSegment& r : m.roads) {
    roads.push_back({{"id", r.id},
                     {"from", r.from},
                     {"to", r.to},
                     {"axis", axis_name(r.axis)},
                     {"a", vec_json(r.a)},
                     {"b", vec_json(r.b)},
                     {"width", r.width},
                     {"sidewalk_offset", r.sidewalk_offset},
                     {"depth", r.depth}});
  }
  j["roads"] = std::move(roads);
  Json inters = Json::array();
  for (const Intersection& in : m.intersections) {
    Json corners = Json::array();
    for (Vec2 c : in.corners) corners.push_back(vec_json(c));
    inters.push_back({{"id", in.id},
                      {"center", vec_json(in.center)},
                      {"arms", in.arms},
                      {"corners", corners},
                      {"signalized", in.signalized}});
  }
  j["intersections"] = std::move(inters);
  Json buildings = Json::array();
  for (const Building& b : m.buildings) {
    buildings.push_back({{"id", b.id},
                         {"asset", b.asset},
                         {"footprint", box_json(b.footprint)},
                         {"door", vec_json(b.door)},
                         {"road", b.road},
                         {"side", b.side},
                         {"facing", cardinal_letter(b.facing)},
                         {"color", b.color},
                         {"height", b.height},
                         {"material", b.material},
                         {"signage", b.signage}});
  }
  j["buildings"] = std::move(buildings);
  Json elements = Json::array();
  for (const StreetElement& e : m.elements) {
    elements.push_back({{"id", e.id},
                        {"class", element_class_name(e.cls)},
                        {"footprint", box_json(e.footprint)},
                        {"zone", e.zone == Zone::sidewalk ? "sidewalk" : "building_adjacent"},
                        {"road", e.road},
                        {"side", e.side}});
  }
  j["elements"] = std::move(elements);
  Json spawns = Json::array();
  for (const SpawnRecord& s : m.spawns) {
    spawns.push_back({{"id", s.id}, {"kind", agent_kind_name(s.kind)}, {"road", s.road}, {"side", s.side}, {"along", s.along}});
  }
  j["spawns"] = std::move(spawns);
  return j;
}

CityMap map_from_json(const Json& j) {
  if (!j.is_object()) schema_fail("map document must be an object");
  if (get<std::string>(j, "schema") != kMapSchema) schema_fail("not a citysim map");
  if (get<int>(j, "version") != kMapVersion) schema_fail("unsupported map version");
  CityMap m;
  try {
    m.spec = spec_from_json(field(j, "spec"));
    m.bounds = box_from(field(j, "bounds"));
    for (const Json& r : field(j, "roads")) {
      RoadSegment s;
      s.id = get<std::uint32_t>(r, "id");
      s.from = get<std::uint32_t>(r, "from");
      s.to = get<std::uint32_t>(r, "to");
      s.axis = axis_from(get<std::string>(r, "axis"));
      s.a = vec_from(field(r, "a"));
      s.b = vec_from(field(r, "b"));
      s.width = get<double>(r, "width");
      s.sidewalk_offset = get<double>(r, "sidewalk_offset");
      s.depth = get<int>(r, "depth");
      if (s.id != m.roads.size()) schema_fail("road ids must be dense and ordered");
      m.roads.push_back(s);
    }
    for (const Json& r : field(j, "intersections")) {
      Intersection in;
      in.id = get<std::uint32_t>(r, "id");
      in.center = vec_from(field(r, "center"));
      in.arms = get<std::array<std::int32_t, 4>>(r, "arms");
      const Json& corners = field(r, "corners");
      if (!corners.is_array() || corners.size() != 4) schema_fail("intersection needs 4 corners");
      for (int k = 0; k < 4; ++k) in.corners[k] = vec_from(corners[k]);
      in.signalized = get<bool>(r, "signalized");
      if (in.id != m.intersections.size()) schema_fail("intersection ids must be dense and ordered");
      m.intersections.push_back(in);
    }
    for (const Json& r : field(j, "buildings")) {
      Building b;
      b.id = get<std::uint32_t>(r, "id");
      b.asset = get<std::string>(r, "asset");
      b.footprint = box_from(field(r, "footprint"));
      b.door = vec_from(field(r, "door"));
      b.road = get<std::uint32_t>(r, "road");
      b.side = get<int>(r, "side");
      b.facing = cardinal_from_letter(get<std::string>(r, "facing"));
      b.color = get<std::string>(r, "color");
      b.height = get<std::string>(r, "height");
      b.material = get<std::string>(r, "material");
      b.signage = get<std::string>(r, "signage");
      if (b.id != m.buildings.size()) schema_fail("building ids must be dense and ordered");
      m.buildings.push_back(std::move(b));
    }
    for (const Json& r : field(j, "elements")) {
      StreetElement e;
      e.id = get<std::uint32_t>(r, "id");
      e.cls = element_class_from_name(get<std::string>(r, "class"));
      e.footprint = box_from(field(r, "footprint"));
      e.zone = zone_from(get<std::string>(r, "zone"));
      e.road = get<std::uint32_t>(r, "road");
      e.side = get<int>(r, "side");
      if (e.id != m.elements.size()) schema_fail("element ids must be dense and ordered");
      m.elements.push_back(e);
    }
    for (const Json& r : field(j, "spawns")) {
      SpawnRecord s;
      s.id = get<std::uint32_t>(r, "id");
      s.kind = kind_from(get<std::string>(r, "kind"));
      s.road = get<std::uint32_t>(r, "road");
      s.side = get<int>(r, "side");
      s.along = get<double>(r, "along");
      m.spawns.push_back(s);
    }
  } catch (const nlohmann::json::exception& e) {
    schema_fail(std::string("malformed map: ") + e.what());
  }
  for (const RoadSegment& r : m.roads) {
    if (r.from >= m.intersections.size() || r.to >= m.intersections.size()) schema_fail("road endpoint out of range");
  }
  for (const Building& b : m.buildings) {
    if (b.road >= m.roads.size()) schema_fail("building road out of range");
  }
  for (const SpawnRecord& s : m.spawns) {
    if (s.road >= m.roads.size()) schema_fail("spawn road out of range");
  }
  m.finalize();
  return m;
}

std::string serialize_map(const CityMap& map) { return to_json(map).dump(); }

CityMap parse_map(std::string_view text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    schema_fail(std::string("map is not valid JSON: ") + e.what());
  }
  return map_from_json(j);
}

std::uint64_t map_hash(const CityMap& map) {
  const std::string s = serialize_map(map);
  return fnv1a(s.data(), s.size());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io_error, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io_error, "cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw Error(ErrorCode::io_error, "write failed: " + path.string());
}

void save_map(const CityMap& map, const std::filesystem::path& path) { write_file(path, serialize_map(map) + "\n"); }

CityMap load_map(const std::filesystem::path& path) { return parse_map(read_file(path)); }

}  // namespace citysim
