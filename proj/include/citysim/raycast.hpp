#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "citysim/geometry.hpp"
#include "citysim/kernels.hpp"
#include "citysim/quadtree.hpp"

namespace citysim {

enum class EntityClass : std::uint8_t {
  building,
  tree,
  sidewalk,
  driveway,
  vehicle,
  pedestrian,
  robot,
  element,
  sky,
};

std::string_view entity_class_name(EntityClass c);
EntityClass entity_class_from_name(std::string_view s);

/// Bit set over EntityClass.
using ClassMask = std::uint32_t;
constexpr ClassMask mask_of(EntityClass c) { return ClassMask{1} << static_cast<unsigned>(c); }
constexpr ClassMask kAllClasses = 0xffffffffu;

struct SceneBox {
  std::uint32_t id = 0;
  EntityClass cls = EntityClass::building;
  Aabb box;
};

struct RayHit {
  double distance = 0.0;
  EntityClass cls = EntityClass::sky;
  std::uint32_t id = 0;

  bool operator==(const RayHit&) const = default;
};

/// Nearest entity along a compass-heading ray, or nullopt on a miss. Ties go
/// to the entity listed first.
std::optional<RayHit> raycast(std::span<const SceneBox> entities, Vec2 origin, double heading,
                              double max_range);

/// Static box set with a quadtree for culling. Candidate lists are returned
/// in ascending scene order so that tie-breaking matches a linear scan.
class RayScene {
 public:
  struct Candidates {
    kernels::BoxSoA soa;
    std::vector<std::uint32_t> index;  // scene index of each candidate
  };

  RayScene() = default;
  explicit RayScene(std::vector<SceneBox> boxes);

  const std::vector<SceneBox>& boxes() const { return boxes_; }
  const QuadTree& index() const { return tree_; }

  void gather(const Aabb& window, ClassMask mask, Candidates& out) const;

  /// Single ray against all boxes of the given classes.
  std::optional<RayHit> cast(Vec2 origin, double heading, double max_range, ClassMask mask = kAllClasses) const;

 private:
  std::vector<SceneBox> boxes_;
  QuadTree tree_;
};

}  // namespace citysim
