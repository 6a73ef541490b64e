#pragma once

// Batched ray-casting kernels. Every variant must return bit-identical
// results to the scalar reference: same operation order, no fused
// multiply-add, explicit `a < b ? a : b` min/max semantics (which is what
// the x86 min/max instructions implement for NaN and signed zero).

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string_view>
#include <vector>

#include "citysim/geometry.hpp"

namespace citysim::kernels {

struct Ray {
  Vec2 origin;
  Vec2 dir;  // unit length
  double max_range = 0.0;
};

/// Structure-of-arrays box set.
struct BoxSoA {
  std::vector<double> min_x, min_y, max_x, max_y;

  std::size_t size() const { return min_x.size(); }
  void clear();
  void reserve(std::size_t n);
  void push(const Aabb& b);
};

/// Structure-of-arrays disc set.
struct DiscSoA {
  std::vector<double> cx, cy, r;

  std::size_t size() const { return cx.size(); }
  void clear();
  void reserve(std::size_t n);
  void push(Vec2 c, double radius);
};

struct NearestHit {
  std::int64_t index = -1;
  double t = std::numeric_limits<double>::infinity();

  bool hit() const { return index >= 0; }
  bool operator==(const NearestHit&) const = default;
};

struct BoxView {
  const double* min_x;
  const double* min_y;
  const double* max_x;
  const double* max_y;
  std::size_t n;
};

struct DiscView {
  const double* cx;
  const double* cy;
  const double* r;
  std::size_t n;
};

inline BoxView view(const BoxSoA& s) { return {s.min_x.data(), s.min_y.data(), s.max_x.data(), s.max_y.data(), s.size()}; }
inline DiscView view(const DiscSoA& s) { return {s.cx.data(), s.cy.data(), s.r.data(), s.size()}; }

/// Reciprocal used by the slab test. Zero components map to a huge finite
/// value so `0 * inv` never produces NaN.
inline double slab_reciprocal(double d) {
  if (d == 0.0) return std::signbit(d) ? -1e300 : 1e300;
  return 1.0 / d;
}

/// Nearest box hit along the ray (smallest t, lowest index on ties). A ray
/// starting inside a box hits it at t = 0.
using RayBoxesFn = NearestHit (*)(const Ray& ray, const BoxView& boxes);
/// Nearest disc hit along the ray, same conventions.
using RayDiscsFn = NearestHit (*)(const Ray& ray, const DiscView& discs);

struct KernelSet {
  std::string_view name;
  RayBoxesFn ray_boxes;
  RayDiscsFn ray_discs;
};

const KernelSet& scalar_kernels();
/// nullptr when not compiled in or the CPU lacks the instructions.
const KernelSet* avx2_kernels();
const KernelSet* neon_kernels();

/// Kernel set chosen at startup: best available, overridable with the
/// CITYSIM_KERNELS environment variable ("scalar", "avx2", "neon").
const KernelSet& active();

/// Force a specific set (tests, benchmarks). Returns false if unavailable.
bool select(std::string_view name);

std::vector<std::string_view> available();

}  // namespace citysim::kernels
