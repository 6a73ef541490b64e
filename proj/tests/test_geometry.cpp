#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "citysim/geometry.hpp"
#include "citysim/kernels.hpp"
#include "citysim/quadtree.hpp"
#include "citysim/raycast.hpp"
#include "citysim/rng.hpp"

using namespace citysim;

namespace {

Aabb random_box(Rng& rng, double extent, double max_size) {
  const Vec2 c{rng.uniform(-extent, extent), rng.uniform(-extent, extent)};
  return Aabb::from_center(c, rng.uniform(0.0, max_size), rng.uniform(0.0, max_size));
}

// Independent ray/box oracle: Liang-Barsky clipping against the four half-planes.
std::optional<double> clip_entry(Vec2 o, Vec2 d, const Aabb& b, double max_range) {
  double t0 = 0.0;
  double t1 = max_range;
  const double p[4] = {-d.x, d.x, -d.y, d.y};
  const double q[4] = {o.x - b.min.x, b.max.x - o.x, o.y - b.min.y, b.max.y - o.y};
  for (int i = 0; i < 4; ++i) {
    if (p[i] == 0.0) {
      if (q[i] < 0.0) return std::nullopt;
      continue;
    }
    const double r = q[i] / p[i];
    if (p[i] < 0.0) {
      t0 = std::max(t0, r);
    } else {
      t1 = std::min(t1, r);
    }
  }
  if (t0 > t1) return std::nullopt;
  return t0;
}

}  // namespace

TEST_CASE("turn_heading rotates by a quarter turn with wraparound") {
  CHECK(turn_heading(0, Turn::right) == 90);
  CHECK(turn_heading(0, Turn::left) == 270);
  CHECK(turn_heading(270, Turn::right) == 0);
  Rng rng(7);
  for (int i = 0; i < 1000; ++i) {
    const double h = rng.uniform(0.0, 360.0);
    const double back = turn_heading(turn_heading(h, Turn::left), Turn::right);
    CHECK(heading_difference(h, back) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(turn_heading(turn_heading(h, Turn::right), Turn::left) >= 0.0);
  }
  for (double h : {0.0, 90.0, 180.0, 270.0}) {
    CHECK(turn_heading(turn_heading(h, Turn::right), Turn::left) == h);
  }
}

TEST_CASE("headings, bearings and cardinals follow the compass convention") {
  CHECK(normalize_heading(-90) == 270);
  CHECK(normalize_heading(720) == 0);
  CHECK(cardinal_of(44) == Cardinal::N);
  CHECK(cardinal_of(46) == Cardinal::E);
  CHECK(cardinal_of(359) == Cardinal::N);
  CHECK(bearing({0, 0}, {0, 10}) == doctest::Approx(0));
  CHECK(bearing({0, 0}, {10, 0}) == doctest::Approx(90));
  CHECK(bearing({0, 0}, {-10, 0}) == doctest::Approx(270));
  CHECK(heading_vector(0) == Vec2{0, 1});
  CHECK(heading_vector(90) == Vec2{1, 0});
  CHECK(heading_vector(180) == Vec2{0, -1});
  CHECK(heading_vector(270) == Vec2{-1, 0});
  CHECK(heading_difference(350, 10) == doctest::Approx(20));
  CHECK(heading_difference(10, 350) == doctest::Approx(-20));
  CHECK(heading_difference(0, 180) == doctest::Approx(180));
}

TEST_CASE("aabb closed intersection versus strict overlap") {
  const Aabb a{{0, 0}, {1, 1}};
  const Aabb b{{1, 0}, {2, 1}};
  CHECK(a.intersects(b));
  CHECK_FALSE(a.overlaps(b));
  CHECK(point_box_distance({3, 0.5}, a) == doctest::Approx(2));
  CHECK(point_box_distance({0.5, 0.5}, a) == 0);
  CHECK(point_segment_distance({5, 3}, {0, 0}, {10, 0}) == doctest::Approx(3));
}

TEST_CASE("quadtree on empty and self windows") {
  QuadTree q(Aabb{{-100, -100}, {100, 100}});
  CHECK(q.query(Aabb{{-50, -50}, {50, 50}}).empty());
  const Aabb box{{3, 4}, {9, 12}};
  q.insert(42, box);
  CHECK(q.query(box) == std::vector<std::uint32_t>{42});
}

TEST_CASE("quadtree query equals brute-force scan") {
  Rng rng(2024);
  for (int trial = 0; trial < 5; ++trial) {
    QuadTree q(Aabb{{-500, -500}, {500, 500}});
    std::vector<Aabb> boxes;
    for (std::uint32_t i = 0; i < 1000; ++i) {
      // Some boxes fall partly or wholly outside the root region.
      boxes.push_back(random_box(rng, 600.0, trial == 0 ? 2.0 : 40.0));
      q.insert(i, boxes.back());
    }
    CHECK(q.size() == 1000);
    CHECK(q.node_count() > 1);
    for (int w = 0; w < 100; ++w) {
      const Aabb window = random_box(rng, 600.0, 120.0);
      auto got = q.query(window);
      std::sort(got.begin(), got.end());
      CHECK(std::adjacent_find(got.begin(), got.end()) == got.end());
      std::vector<std::uint32_t> want;
      bool any = false;
      for (std::uint32_t i = 0; i < boxes.size(); ++i) {
        if (boxes[i].intersects(window)) want.push_back(i);
        any = any || boxes[i].overlaps(window);
      }
      CHECK(got == want);
      CHECK(q.any_overlap(window) == any);
    }
  }
}

TEST_CASE("quadtree query order is deterministic for a fixed insertion sequence") {
  auto build = [] {
    Rng rng(5);
    QuadTree q(Aabb{{0, 0}, {100, 100}});
    for (std::uint32_t i = 0; i < 300; ++i) q.insert(i, random_box(rng, 100.0, 5.0));
    return q.query(Aabb{{10, 10}, {70, 60}});
  };
  CHECK(build() == build());
}

TEST_CASE("raycast trivial scenes") {
  CHECK_FALSE(raycast({}, {0, 0}, 0, 100).has_value());
  const std::vector<SceneBox> one = {{7, EntityClass::building, Aabb::from_center({0, 20}, 5, 5)}};
  const auto h = raycast(one, {0, 0}, 0, 100);
  REQUIRE(h);
  CHECK(h->distance == 15.0);
  CHECK(h->id == 7);
  CHECK(h->cls == EntityClass::building);

  const std::vector<SceneBox> two = {{2, EntityClass::building, Aabb::from_center({0, 35}, 5, 5)},
                                     {1, EntityClass::tree, Aabb::from_center({0, 20}, 5, 5)}};
  const auto near = raycast(two, {0, 0}, 0, 100);
  REQUIRE(near);
  CHECK(near->distance == 15.0);
  CHECK(near->id == 1);
  CHECK_FALSE(raycast(two, {0, 0}, 0, 14.9).has_value());
  CHECK_FALSE(raycast(two, {0, 0}, 90, 100).has_value());
}

TEST_CASE("raycast matches a clipping oracle and is monotone in range") {
  Rng rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<SceneBox> boxes;
    for (std::uint32_t i = 0; i < 30; ++i) boxes.push_back({i, EntityClass::building, random_box(rng, 100.0, 10.0)});
    const Vec2 o{rng.uniform(-100, 100), rng.uniform(-100, 100)};
    // Cardinal rays exercise the zero-direction-component path.
    const double heading = trial % 4 == 0 ? 90.0 * (trial / 4 % 4) : rng.uniform(0, 360);
    const double range = rng.uniform(10, 200);
    const auto got = raycast(boxes, o, heading, range);
    std::optional<double> best;
    for (const SceneBox& b : boxes) {
      const auto t = clip_entry(o, heading_vector(heading), b.box, range);
      if (t && (!best || *t < *best)) best = t;
    }
    REQUIRE(got.has_value() == best.has_value());
    if (!got) continue;
    CHECK(got->distance == doctest::Approx(*best).epsilon(1e-9));
    const double shorter = rng.uniform(got->distance, range);
    const auto again = raycast(boxes, o, heading, shorter);
    REQUIRE(again);
    CHECK(*again == *got);
  }
}

TEST_CASE("ray scene agrees with a linear scan") {
  Rng rng(11);
  std::vector<SceneBox> boxes;
  for (std::uint32_t i = 0; i < 800; ++i) {
    boxes.push_back({i, i % 3 == 0 ? EntityClass::tree : EntityClass::building, random_box(rng, 400.0, 15.0)});
  }
  // Duplicate boxes check the lowest-index tie rule.
  boxes.push_back({800, EntityClass::building, boxes[10].box});
  const RayScene scene(boxes);
  for (int k = 0; k < 2000; ++k) {
    const Vec2 o{rng.uniform(-400, 400), rng.uniform(-400, 400)};
    const double heading = rng.uniform(0, 360);
    CHECK(scene.cast(o, heading, 120) == raycast(boxes, o, heading, 120));
    std::vector<SceneBox> buildings;
    for (const SceneBox& b : boxes) {
      if (b.cls == EntityClass::building) buildings.push_back(b);
    }
    if (k % 100 == 0) CHECK(scene.cast(o, heading, 120, mask_of(EntityClass::building)) == raycast(buildings, o, heading, 120));
  }
}

TEST_CASE("kernel variants are bit-identical to the scalar reference") {
  const auto names = kernels::available();
  REQUIRE(std::find(names.begin(), names.end(), "scalar") != names.end());
  std::vector<const kernels::KernelSet*> sets;
  if (const auto* k = kernels::avx2_kernels()) sets.push_back(k);
  if (const auto* k = kernels::neon_kernels()) sets.push_back(k);
  if (sets.empty()) MESSAGE("no SIMD kernels on this host; scalar only");
  const kernels::KernelSet& ref = kernels::scalar_kernels();

  Rng rng(31337);
  kernels::BoxSoA boxes;
  kernels::DiscSoA discs;
  for (int trial = 0; trial < 3000; ++trial) {
    boxes.clear();
    discs.clear();
    const int n = static_cast<int>(rng.below(40));  // covers empty sets and SIMD tails
    for (int i = 0; i < n; ++i) {
      boxes.push(random_box(rng, 50.0, 8.0));
      discs.push({rng.uniform(-50, 50), rng.uniform(-50, 50)}, rng.uniform(0.1, 4.0));
      if (i > 0 && rng.bernoulli(0.1)) {
        // Exact duplicates force ties.
        boxes.push(Aabb{{boxes.min_x[0], boxes.min_y[0]}, {boxes.max_x[0], boxes.max_y[0]}});
        discs.push({discs.cx[0], discs.cy[0]}, discs.r[0]);
      }
    }
    const double heading = trial % 3 == 0 ? 90.0 * static_cast<double>(rng.below(4)) : rng.uniform(0, 360);
    const kernels::Ray ray{{rng.uniform(-50, 50), rng.uniform(-50, 50)}, heading_vector(heading), rng.uniform(1, 150)};
    const auto want_b = ref.ray_boxes(ray, kernels::view(boxes));
    const auto want_d = ref.ray_discs(ray, kernels::view(discs));
    for (const auto* k : sets) {
      CAPTURE(k->name);
      const auto got_b = k->ray_boxes(ray, kernels::view(boxes));
      const auto got_d = k->ray_discs(ray, kernels::view(discs));
      CHECK(got_b.index == want_b.index);
      CHECK(std::bit_cast<std::uint64_t>(got_b.t) == std::bit_cast<std::uint64_t>(want_b.t));
      CHECK(got_d.index == want_d.index);
      CHECK(std::bit_cast<std::uint64_t>(got_d.t) == std::bit_cast<std::uint64_t>(want_d.t));
    }
  }
}

TEST_CASE("disc kernel geometry") {
  const auto& k = kernels::scalar_kernels();
  kernels::DiscSoA d;
  d.push({0, 10}, 1.0);
  d.push({0, 5}, 0.5);
  const kernels::Ray ray{{0, 0}, {0, 1}, 100};
  const auto h = k.ray_discs(ray, kernels::view(d));
  CHECK(h.index == 1);
  CHECK(h.t == doctest::Approx(4.5));
  const kernels::Ray inside{{0, 10}, {1, 0}, 100};
  CHECK(k.ray_discs(inside, kernels::view(d)).t == 0.0);
  const kernels::Ray away{{0, 0}, {0, -1}, 100};
  CHECK_FALSE(k.ray_discs(away, kernels::view(d)).hit());
}

TEST_CASE("kernel selection") {
  CHECK(kernels::select("scalar"));
  CHECK(kernels::active().name == "scalar");
  CHECK_FALSE(kernels::select("bogus"));
  const auto names = kernels::available();
  CHECK(kernels::select(names.back()));
}
