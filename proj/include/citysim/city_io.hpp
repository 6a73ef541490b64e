#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include <json.hpp>

#include "citysim/city.hpp"

namespace citysim {

using Json = nlohmann::json;

inline constexpr std::string_view kMapSchema = "citysim.map";
inline constexpr int kMapVersion = 1;

Json to_json(const CitySpec& spec);
CitySpec spec_from_json(const Json& j);

Json to_json(const CityMap& map);
CityMap map_from_json(const Json& j);

/// Canonical single-line serialization (sorted keys, shortest round-trip
/// number formatting). Identical maps give identical bytes.
std::string serialize_map(const CityMap& map);
CityMap parse_map(std::string_view text);

std::uint64_t map_hash(const CityMap& map);

void save_map(const CityMap& map, const std::filesystem::path& path);
CityMap load_map(const std::filesystem::path& path);

/// Whole-file helpers shared by the loaders; throw IoError.
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view text);

Json vec_json(Vec2 v);
Vec2 vec_from(const Json& j);
Json box_json(const Aabb& b);
Aabb box_from(const Json& j);
std::string hex64(std::uint64_t v);

}  // namespace citysim
