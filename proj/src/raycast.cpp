#include "citysim/raycast.hpp"

#include <algorithm>
#include <array>

#include "citysim/error.hpp"

namespace citysim {

namespace {

constexpr std::array<std::string_view, 9> kClassNames = {
    "building", "tree", "sidewalk", "driveway", "vehicle", "pedestrian", "robot", "element", "sky",
};

}  // namespace

std::string_view entity_class_name(EntityClass c) { return kClassNames[static_cast<std::size_t>(c)]; }

EntityClass entity_class_from_name(std::string_view s) {
  for (std::size_t i = 0; i < kClassNames.size(); ++i) {
    if (kClassNames[i] == s) return static_cast<EntityClass>(i);
  }
  throw Error(ErrorCode::schema_error, "unknown entity class: " + std::string(s));
}

std::optional<RayHit> raycast(std::span<const SceneBox> entities, Vec2 origin, double heading,
                              double max_range) {
  kernels::BoxSoA soa;
  soa.reserve(entities.size());
  for (const SceneBox& e : entities) soa.push(e.box);
  const kernels::Ray ray{origin, heading_vector(heading), max_range};
  const kernels::NearestHit h = kernels::active().ray_boxes(ray, kernels::view(soa));
  if (!h.hit()) return std::nullopt;
  const SceneBox& e = entities[static_cast<std::size_t>(h.index)];
  return RayHit{h.t, e.cls, e.id};
}

RayScene::RayScene(std::vector<SceneBox> boxes) : boxes_(std::move(boxes)) {
  Aabb bounds{{0, 0}, {1, 1}};
  if (!boxes_.empty()) {
    bounds = boxes_.front().box;
    for (const SceneBox& b : boxes_) bounds = bounds.merged(b.box);
  }
  tree_ = QuadTree(bounds.inflated(1.0, 1.0));
  for (std::size_t i = 0; i < boxes_.size(); ++i) tree_.insert(static_cast<std::uint32_t>(i), boxes_[i].box);
}

void RayScene::gather(const Aabb& window, ClassMask mask, Candidates& out) const {
  out.soa.clear();
  out.index.clear();
  tree_.query(window, out.index);
  std::sort(out.index.begin(), out.index.end());
  std::erase_if(out.index, [&](std::uint32_t i) { return (mask & mask_of(boxes_[i].cls)) == 0; });
  out.soa.reserve(out.index.size());
  for (std::uint32_t i : out.index) out.soa.push(boxes_[i].box);
}

std::optional<RayHit> RayScene::cast(Vec2 origin, double heading, double max_range, ClassMask mask) const {
  const Vec2 dir = heading_vector(heading);
  const Vec2 end = origin + dir * max_range;
  Candidates c;
  gather(Aabb::from_corners(origin, end), mask, c);
  const kernels::NearestHit h = kernels::active().ray_boxes({origin, dir, max_range}, kernels::view(c.soa));
  if (!h.hit()) return std::nullopt;
  const SceneBox& e = boxes_[c.index[static_cast<std::size_t>(h.index)]];
  return RayHit{h.t, e.cls, e.id};
}

}  // namespace citysim
