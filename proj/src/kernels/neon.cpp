#include "citysim/kernels.hpp"

#if defined(__aarch64__)
#define CITYSIM_HAVE_NEON_KERNELS 1
#include <arm_neon.h>
#endif

namespace citysim::kernels {

#if CITYSIM_HAVE_NEON_KERNELS

namespace {

// vminq/vmaxq propagate NaN; the reference semantics are a < b ? a : b.
inline float64x2_t sel_min(float64x2_t a, float64x2_t b) { return vbslq_f64(vcltq_f64(a, b), a, b); }
inline float64x2_t sel_max(float64x2_t a, float64x2_t b) { return vbslq_f64(vcgtq_f64(a, b), a, b); }

NearestHit finish(float64x2_t best_t, int64x2_t best_idx, NearestHit tail) {
  double ts[2];
  std::int64_t idx[2];
  vst1q_f64(ts, best_t);
  vst1q_s64(idx, best_idx);
  NearestHit out;
  for (int lane = 0; lane < 2; ++lane) {
    if (idx[lane] < 0) continue;
    if (ts[lane] < out.t || (ts[lane] == out.t && idx[lane] < out.index)) {
      out.t = ts[lane];
      out.index = idx[lane];
    }
  }
  if (tail.hit() && (tail.t < out.t || (tail.t == out.t && (out.index < 0 || tail.index < out.index)))) {
    out = tail;
  }
  return out;
}

NearestHit ray_boxes_neon(const Ray& ray, const BoxView& boxes) {
  const float64x2_t ox = vdupq_n_f64(ray.origin.x);
  const float64x2_t oy = vdupq_n_f64(ray.origin.y);
  const float64x2_t inv_x = vdupq_n_f64(slab_reciprocal(ray.dir.x));
  const float64x2_t inv_y = vdupq_n_f64(slab_reciprocal(ray.dir.y));
  const float64x2_t zero = vdupq_n_f64(0.0);
  const float64x2_t range = vdupq_n_f64(ray.max_range);
  float64x2_t best_t = vdupq_n_f64(std::numeric_limits<double>::infinity());
  int64x2_t best_idx = vdupq_n_s64(-1);
  const std::int64_t init[2] = {0, 1};
  int64x2_t lane_idx = vld1q_s64(init);
  const int64x2_t two = vdupq_n_s64(2);

  std::size_t i = 0;
  for (; i + 2 <= boxes.n; i += 2) {
    const float64x2_t t1x = vmulq_f64(vsubq_f64(vld1q_f64(boxes.min_x + i), ox), inv_x);
    const float64x2_t t2x = vmulq_f64(vsubq_f64(vld1q_f64(boxes.max_x + i), ox), inv_x);
    const float64x2_t t1y = vmulq_f64(vsubq_f64(vld1q_f64(boxes.min_y + i), oy), inv_y);
    const float64x2_t t2y = vmulq_f64(vsubq_f64(vld1q_f64(boxes.max_y + i), oy), inv_y);
    const float64x2_t tnear = sel_max(sel_min(t1x, t2x), sel_min(t1y, t2y));
    const float64x2_t tfar = sel_min(sel_max(t1x, t2x), sel_max(t1y, t2y));
    const float64x2_t t = sel_max(tnear, zero);
    uint64x2_t hit = vcleq_f64(tnear, tfar);
    hit = vandq_u64(hit, vcgeq_f64(tfar, zero));
    hit = vandq_u64(hit, vcleq_f64(t, range));
    const uint64x2_t better = vandq_u64(hit, vcltq_f64(t, best_t));
    best_t = vbslq_f64(better, t, best_t);
    best_idx = vbslq_s64(better, lane_idx, best_idx);
    lane_idx = vaddq_s64(lane_idx, two);
  }
  NearestHit tail;
  if (i < boxes.n) {
    const BoxView rest{boxes.min_x + i, boxes.min_y + i, boxes.max_x + i, boxes.max_y + i, boxes.n - i};
    tail = scalar_kernels().ray_boxes(ray, rest);
    if (tail.hit()) tail.index += static_cast<std::int64_t>(i);
  }
  return finish(best_t, best_idx, tail);
}

NearestHit ray_discs_neon(const Ray& ray, const DiscView& discs) {
  const float64x2_t ox = vdupq_n_f64(ray.origin.x);
  const float64x2_t oy = vdupq_n_f64(ray.origin.y);
  const float64x2_t dirx = vdupq_n_f64(ray.dir.x);
  const float64x2_t diry = vdupq_n_f64(ray.dir.y);
  const float64x2_t zero = vdupq_n_f64(0.0);
  const float64x2_t range = vdupq_n_f64(ray.max_range);
  float64x2_t best_t = vdupq_n_f64(std::numeric_limits<double>::infinity());
  int64x2_t best_idx = vdupq_n_s64(-1);
  const std::int64_t init[2] = {0, 1};
  int64x2_t lane_idx = vld1q_s64(init);
  const int64x2_t two = vdupq_n_s64(2);

  std::size_t i = 0;
  for (; i + 2 <= discs.n; i += 2) {
    const float64x2_t dx = vsubq_f64(vld1q_f64(discs.cx + i), ox);
    const float64x2_t dy = vsubq_f64(vld1q_f64(discs.cy + i), oy);
    const float64x2_t r = vld1q_f64(discs.r + i);
    const float64x2_t b = vaddq_f64(vmulq_f64(dx, dirx), vmulq_f64(dy, diry));
    const float64x2_t c = vsubq_f64(vaddq_f64(vmulq_f64(dx, dx), vmulq_f64(dy, dy)), vmulq_f64(r, r));
    const float64x2_t disc = vsubq_f64(vmulq_f64(b, b), c);
    const float64x2_t s = vsqrtq_f64(sel_max(disc, zero));
    const float64x2_t t0 = vsubq_f64(b, s);
    const uint64x2_t inside = vcleq_f64(c, zero);
    const float64x2_t t = vbslq_f64(inside, zero, t0);
    uint64x2_t hit = vcgeq_f64(disc, zero);
    hit = vandq_u64(hit, vorrq_u64(inside, vcgeq_f64(t0, zero)));
    hit = vandq_u64(hit, vcleq_f64(t, range));
    const uint64x2_t better = vandq_u64(hit, vcltq_f64(t, best_t));
    best_t = vbslq_f64(better, t, best_t);
    best_idx = vbslq_s64(better, lane_idx, best_idx);
    lane_idx = vaddq_s64(lane_idx, two);
  }
  NearestHit tail;
  if (i < discs.n) {
    const DiscView rest{discs.cx + i, discs.cy + i, discs.r + i, discs.n - i};
    tail = scalar_kernels().ray_discs(ray, rest);
    if (tail.hit()) tail.index += static_cast<std::int64_t>(i);
  }
  return finish(best_t, best_idx, tail);
}

}  // namespace

const KernelSet* neon_kernels() {
  static const KernelSet set{"neon", &ray_boxes_neon, &ray_discs_neon};
  return &set;
}

#else

const KernelSet* neon_kernels() { return nullptr; }

#endif

}  // namespace citysim::kernels
