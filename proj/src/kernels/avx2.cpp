#include "citysim/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)
#define CITYSIM_HAVE_AVX2_KERNELS 1
#include <immintrin.h>
#endif

#include <cmath>

namespace citysim::kernels {

#if CITYSIM_HAVE_AVX2_KERNELS

namespace {

#define CITYSIM_AVX2 __attribute__((target("avx2")))

// Reduces the per-lane winners plus a scalar-tail winner to the global one:
// smallest t, then smallest index.
CITYSIM_AVX2 NearestHit reduce_lanes(__m256d best_t, __m256d best_idx, NearestHit tail) {
  alignas(32) double ts[4];
  alignas(32) double idx[4];
  _mm256_store_pd(ts, best_t);
  _mm256_store_pd(idx, best_idx);
  NearestHit out;
  for (int lane = 0; lane < 4; ++lane) {
    if (idx[lane] < 0.0) continue;
    const auto i = static_cast<std::int64_t>(idx[lane]);
    if (ts[lane] < out.t || (ts[lane] == out.t && i < out.index)) {
      out.t = ts[lane];
      out.index = i;
    }
  }
  if (tail.hit() && (tail.t < out.t || (tail.t == out.t && (out.index < 0 || tail.index < out.index)))) {
    out = tail;
  }
  return out;
}

CITYSIM_AVX2 NearestHit ray_boxes_avx2(const Ray& ray, const BoxView& boxes) {
  const double inv_x_s = slab_reciprocal(ray.dir.x);
  const double inv_y_s = slab_reciprocal(ray.dir.y);
  const __m256d ox = _mm256_set1_pd(ray.origin.x);
  const __m256d oy = _mm256_set1_pd(ray.origin.y);
  const __m256d inv_x = _mm256_set1_pd(inv_x_s);
  const __m256d inv_y = _mm256_set1_pd(inv_y_s);
  const __m256d zero = _mm256_setzero_pd();
  const __m256d range = _mm256_set1_pd(ray.max_range);
  const __m256d four = _mm256_set1_pd(4.0);

  __m256d best_t = _mm256_set1_pd(std::numeric_limits<double>::infinity());
  __m256d best_idx = _mm256_set1_pd(-1.0);
  __m256d lane_idx = _mm256_set_pd(3.0, 2.0, 1.0, 0.0);

  std::size_t i = 0;
  for (; i + 4 <= boxes.n; i += 4) {
    const __m256d t1x = _mm256_mul_pd(_mm256_sub_pd(_mm256_loadu_pd(boxes.min_x + i), ox), inv_x);
    const __m256d t2x = _mm256_mul_pd(_mm256_sub_pd(_mm256_loadu_pd(boxes.max_x + i), ox), inv_x);
    const __m256d t1y = _mm256_mul_pd(_mm256_sub_pd(_mm256_loadu_pd(boxes.min_y + i), oy), inv_y);
    const __m256d t2y = _mm256_mul_pd(_mm256_sub_pd(_mm256_loadu_pd(boxes.max_y + i), oy), inv_y);
    const __m256d tnear = _mm256_max_pd(_mm256_min_pd(t1x, t2x), _mm256_min_pd(t1y, t2y));
    const __m256d tfar = _mm256_min_pd(_mm256_max_pd(t1x, t2x), _mm256_max_pd(t1y, t2y));
    const __m256d t = _mm256_max_pd(tnear, zero);
    __m256d hit = _mm256_cmp_pd(tnear, tfar, _CMP_LE_OQ);
    hit = _mm256_and_pd(hit, _mm256_cmp_pd(tfar, zero, _CMP_GE_OQ));
    hit = _mm256_and_pd(hit, _mm256_cmp_pd(t, range, _CMP_LE_OQ));
    const __m256d better = _mm256_and_pd(hit, _mm256_cmp_pd(t, best_t, _CMP_LT_OQ));
    best_t = _mm256_blendv_pd(best_t, t, better);
    best_idx = _mm256_blendv_pd(best_idx, lane_idx, better);
    lane_idx = _mm256_add_pd(lane_idx, four);
  }

  NearestHit tail;
  if (i < boxes.n) {
    const BoxView rest{boxes.min_x + i, boxes.min_y + i, boxes.max_x + i, boxes.max_y + i, boxes.n - i};
    tail = scalar_kernels().ray_boxes(ray, rest);
    if (tail.hit()) tail.index += static_cast<std::int64_t>(i);
  }
  return reduce_lanes(best_t, best_idx, tail);
}

CITYSIM_AVX2 NearestHit ray_discs_avx2(const Ray& ray, const DiscView& discs) {
  const __m256d ox = _mm256_set1_pd(ray.origin.x);
  const __m256d oy = _mm256_set1_pd(ray.origin.y);
  const __m256d dirx = _mm256_set1_pd(ray.dir.x);
  const __m256d diry = _mm256_set1_pd(ray.dir.y);
  const __m256d zero = _mm256_setzero_pd();
  const __m256d range = _mm256_set1_pd(ray.max_range);
  const __m256d four = _mm256_set1_pd(4.0);

  __m256d best_t = _mm256_set1_pd(std::numeric_limits<double>::infinity());
  __m256d best_idx = _mm256_set1_pd(-1.0);
  __m256d lane_idx = _mm256_set_pd(3.0, 2.0, 1.0, 0.0);

  std::size_t i = 0;
  for (; i + 4 <= discs.n; i += 4) {
    const __m256d dx = _mm256_sub_pd(_mm256_loadu_pd(discs.cx + i), ox);
    const __m256d dy = _mm256_sub_pd(_mm256_loadu_pd(discs.cy + i), oy);
    const __m256d r = _mm256_loadu_pd(discs.r + i);
    const __m256d b = _mm256_add_pd(_mm256_mul_pd(dx, dirx), _mm256_mul_pd(dy, diry));
    const __m256d c = _mm256_sub_pd(_mm256_add_pd(_mm256_mul_pd(dx, dx), _mm256_mul_pd(dy, dy)), _mm256_mul_pd(r, r));
    const __m256d disc = _mm256_sub_pd(_mm256_mul_pd(b, b), c);
    const __m256d s = _mm256_sqrt_pd(_mm256_max_pd(disc, zero));
    const __m256d t0 = _mm256_sub_pd(b, s);
    const __m256d inside = _mm256_cmp_pd(c, zero, _CMP_LE_OQ);
    const __m256d t = _mm256_blendv_pd(t0, zero, inside);
    __m256d hit = _mm256_cmp_pd(disc, zero, _CMP_GE_OQ);
    hit = _mm256_and_pd(hit, _mm256_or_pd(inside, _mm256_cmp_pd(t0, zero, _CMP_GE_OQ)));
    hit = _mm256_and_pd(hit, _mm256_cmp_pd(t, range, _CMP_LE_OQ));
    const __m256d better = _mm256_and_pd(hit, _mm256_cmp_pd(t, best_t, _CMP_LT_OQ));
    best_t = _mm256_blendv_pd(best_t, t, better);
    best_idx = _mm256_blendv_pd(best_idx, lane_idx, better);
    lane_idx = _mm256_add_pd(lane_idx, four);
  }

  NearestHit tail;
  if (i < discs.n) {
    const DiscView rest{discs.cx + i, discs.cy + i, discs.r + i, discs.n - i};
    tail = scalar_kernels().ray_discs(ray, rest);
    if (tail.hit()) tail.index += static_cast<std::int64_t>(i);
  }
  return reduce_lanes(best_t, best_idx, tail);
}

#undef CITYSIM_AVX2

}  // namespace

const KernelSet* avx2_kernels() {
  static const KernelSet set{"avx2", &ray_boxes_avx2, &ray_discs_avx2};
  static const bool supported = __builtin_cpu_supports("avx2");
  return supported ? &set : nullptr;
}

#else

const KernelSet* avx2_kernels() { return nullptr; }

#endif

}  // namespace citysim::kernels
