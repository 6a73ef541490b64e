#include "citysim/catalog.hpp"

#include <array>
#include <cstdio>
#include <vector>

#include "citysim/error.hpp"

namespace citysim {

namespace {

constexpr std::array<const char*, 12> kColors = {
    "red",   "light blue", "white", "gray",  "beige",      "dark green",
    "brown", "yellow",     "black", "orange", "pale pink", "navy",
};
constexpr std::array<const char*, 5> kMaterials = {"brick", "glass", "concrete", "wooden", "stone"};
constexpr std::array<const char*, 3> kHeights = {"low-rise", "mid-rise", "tall"};
constexpr std::array<const char*, 8> kSigns = {
    "", "a cafe sign", "a pharmacy sign", "a bank logo", "", "a bookstore sign", "a hotel sign", "a bakery sign",
};

constexpr int kAssetCount = 60;

std::vector<BuildingAsset> make_catalog() {
  std::vector<BuildingAsset> out;
  out.reserve(kAssetCount);
  for (int i = 0; i < kAssetCount; ++i) {
    // 12 colors x 5 materials covers every (color, material) pair exactly once.
    BuildingAsset a;
    char tag[16];
    std::snprintf(tag, sizeof tag, "bldg_%02d", i);
    a.tag = tag;
    a.color = kColors[i % 12];
    a.material = kMaterials[(i / 12 + i) % 5];
    a.height = kHeights[(i / 4) % 3];
    a.signage = kSigns[(i * 3 + i / 8) % 8];
    a.test_only = (i % 3) == 2;
    out.push_back(std::move(a));
  }
  return out;
}

}  // namespace

std::string_view asset_pool_name(AssetPool p) { return p == AssetPool::all ? "all" : "train"; }

AssetPool asset_pool_from_name(std::string_view s) {
  if (s == "all") return AssetPool::all;
  if (s == "train") return AssetPool::train;
  throw Error(ErrorCode::schema_error, "unknown asset pool: " + std::string(s));
}

std::span<const BuildingAsset> building_catalog() {
  static const std::vector<BuildingAsset> catalog = make_catalog();
  return catalog;
}

const BuildingAsset* find_asset(std::string_view tag) {
  for (const BuildingAsset& a : building_catalog()) {
    if (a.tag == tag) return &a;
  }
  return nullptr;
}

std::string describe(const BuildingAsset& asset) {
  std::string out = "a " + asset.height + " " + asset.color + " " + asset.material + " building";
  if (!asset.signage.empty()) out += " with " + asset.signage;
  return out;
}

}  // namespace citysim
