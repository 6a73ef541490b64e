#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace citysim {

/// World coordinates in meters; x grows east, y grows north.
struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  constexpr Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  constexpr Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  constexpr Vec2 operator*(double s) const { return {x * s, y * s}; }
  constexpr Vec2& operator+=(Vec2 o) {
    x += o.x;
    y += o.y;
    return *this;
  }
  constexpr bool operator==(const Vec2&) const = default;
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double length(Vec2 v) { return std::sqrt(v.x * v.x + v.y * v.y); }
inline double distance(Vec2 a, Vec2 b) { return length(a - b); }
inline double manhattan(Vec2 a, Vec2 b) { return std::abs(a.x - b.x) + std::abs(a.y - b.y); }

enum class Cardinal : std::uint8_t { N = 0, E = 1, S = 2, W = 3 };

std::string_view cardinal_name(Cardinal c);       // "north", ...
std::string_view cardinal_letter(Cardinal c);     // "N", ...
Cardinal cardinal_from_letter(std::string_view s);

/// Compass heading in degrees: 0 = North, clockwise positive, in [0, 360).
double normalize_heading(double degrees);
Cardinal cardinal_of(double heading);
inline double cardinal_heading(Cardinal c) { return 90.0 * static_cast<int>(c); }

/// Signed smallest rotation from `from` to `to`, in (-180, 180].
double heading_difference(double from, double to);

/// Unit vector for a compass heading. Exact for multiples of 90 degrees.
Vec2 heading_vector(double heading);

/// Compass bearing of `to` seen from `from`.
double bearing(Vec2 from, Vec2 to);

struct Pose {
  Vec2 position;
  double heading = 0.0;

  bool operator==(const Pose&) const = default;
};

enum class Turn : std::uint8_t { left, right };

/// left = -90, right = +90, result normalized to [0, 360).
double turn_heading(double heading, Turn turn);

enum class Axis : std::uint8_t { NS, EW };

inline Axis axis_of(Cardinal c) {
  return (c == Cardinal::N || c == Cardinal::S) ? Axis::NS : Axis::EW;
}
std::string_view axis_name(Axis a);

struct Aabb {
  Vec2 min;
  Vec2 max;

  static Aabb from_center(Vec2 c, double half_w, double half_h) {
    return {{c.x - half_w, c.y - half_h}, {c.x + half_w, c.y + half_h}};
  }
  static Aabb from_corners(Vec2 a, Vec2 b) {
    return {{std::fmin(a.x, b.x), std::fmin(a.y, b.y)}, {std::fmax(a.x, b.x), std::fmax(a.y, b.y)}};
  }

  bool valid() const { return min.x <= max.x && min.y <= max.y; }
  double width() const { return max.x - min.x; }
  double height() const { return max.y - min.y; }
  double area() const { return width() * height(); }
  Vec2 center() const { return {(min.x + max.x) * 0.5, (min.y + max.y) * 0.5}; }

  /// Closed-set test: boxes that share only an edge intersect.
  bool intersects(const Aabb& o) const {
    return min.x <= o.max.x && o.min.x <= max.x && min.y <= o.max.y && o.min.y <= max.y;
  }
  /// Interior overlap: positive-area intersection only.
  bool overlaps(const Aabb& o) const {
    return min.x < o.max.x && o.min.x < max.x && min.y < o.max.y && o.min.y < max.y;
  }
  bool contains(const Aabb& o) const {
    return min.x <= o.min.x && min.y <= o.min.y && o.max.x <= max.x && o.max.y <= max.y;
  }
  bool contains(Vec2 p) const { return min.x <= p.x && p.x <= max.x && min.y <= p.y && p.y <= max.y; }
  Aabb inflated(double dx, double dy) const {
    return {{min.x - dx, min.y - dy}, {max.x + dx, max.y + dy}};
  }
  Aabb merged(const Aabb& o) const {
    return {{std::fmin(min.x, o.min.x), std::fmin(min.y, o.min.y)},
            {std::fmax(max.x, o.max.x), std::fmax(max.y, o.max.y)}};
  }

  bool operator==(const Aabb&) const = default;
};

/// Euclidean distance from a point to a box (0 inside).
double point_box_distance(Vec2 p, const Aabb& box);

/// Distance from a point to a segment.
double point_segment_distance(Vec2 p, Vec2 a, Vec2 b);

}  // namespace citysim
