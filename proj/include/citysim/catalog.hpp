#pragma once

#include <span>
#include <string>
#include <string_view>

namespace citysim {

enum class AssetPool { all, train };

std::string_view asset_pool_name(AssetPool p);
AssetPool asset_pool_from_name(std::string_view s);

struct BuildingAsset {
  std::string tag;
  std::string color;
  std::string height;    // "low-rise", "mid-rise", "tall"
  std::string material;
  std::string signage;   // empty when the facade carries no sign
  bool test_only = false;
};

/// Bundled catalog. Roughly a third of the assets are reserved for test maps.
std::span<const BuildingAsset> building_catalog();

const BuildingAsset* find_asset(std::string_view tag);

/// Templated description, e.g. "a tall light blue glass building with a cafe sign".
std::string describe(const BuildingAsset& asset);

}  // namespace citysim
