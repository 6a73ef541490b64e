#include <cmath>

#include "citysim/kernels.hpp"

namespace citysim::kernels {

namespace {

inline double vmin(double a, double b) { return a < b ? a : b; }
inline double vmax(double a, double b) { return a > b ? a : b; }

NearestHit ray_boxes_scalar(const Ray& ray, const BoxView& boxes) {
  const double ox = ray.origin.x;
  const double oy = ray.origin.y;
  const double inv_x = slab_reciprocal(ray.dir.x);
  const double inv_y = slab_reciprocal(ray.dir.y);
  NearestHit best;
  for (std::size_t i = 0; i < boxes.n; ++i) {
    const double t1x = (boxes.min_x[i] - ox) * inv_x;
    const double t2x = (boxes.max_x[i] - ox) * inv_x;
    const double t1y = (boxes.min_y[i] - oy) * inv_y;
    const double t2y = (boxes.max_y[i] - oy) * inv_y;
    const double tnear = vmax(vmin(t1x, t2x), vmin(t1y, t2y));
    const double tfar = vmin(vmax(t1x, t2x), vmax(t1y, t2y));
    const double t = vmax(tnear, 0.0);
    const bool hit = (tnear <= tfar) && (tfar >= 0.0) && (t <= ray.max_range);
    if (hit && t < best.t) {
      best.t = t;
      best.index = static_cast<std::int64_t>(i);
    }
  }
  return best;
}

NearestHit ray_discs_scalar(const Ray& ray, const DiscView& discs) {
  NearestHit best;
  for (std::size_t i = 0; i < discs.n; ++i) {
    const double dx = discs.cx[i] - ray.origin.x;
    const double dy = discs.cy[i] - ray.origin.y;
    const double b = dx * ray.dir.x + dy * ray.dir.y;
    const double c = (dx * dx + dy * dy) - discs.r[i] * discs.r[i];
    const double disc = b * b - c;
    const double s = std::sqrt(vmax(disc, 0.0));
    const double t0 = b - s;
    const bool inside = c <= 0.0;
    const double t = inside ? 0.0 : t0;
    const bool hit = (disc >= 0.0) && (inside || t0 >= 0.0) && (t <= ray.max_range);
    if (hit && t < best.t) {
      best.t = t;
      best.index = static_cast<std::int64_t>(i);
    }
  }
  return best;
}

}  // namespace

const KernelSet& scalar_kernels() {
  static const KernelSet set{"scalar", &ray_boxes_scalar, &ray_discs_scalar};
  return set;
}

}  // namespace citysim::kernels
