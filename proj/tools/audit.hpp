#pragma once

#include <cstddef>

#include "citysim/city.hpp"

namespace citysim::tools {

// Brute-force geometric audit of a map, independent of the generator's own
// bookkeeping: every pair is tested.
struct MapAudit {
  std::size_t building_overlaps = 0;
  std::size_t road_overlaps = 0;  // buildings over road corridors or intersection boxes
  std::size_t sidewalk_components = 0;
  std::size_t road_components = 0;

  bool sound() const {
    return building_overlaps == 0 && road_overlaps == 0 && sidewalk_components == 1 && road_components == 1;
  }
};

MapAudit audit_map(const CityMap& map);

}  // namespace citysim::tools
