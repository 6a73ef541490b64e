#include "citysim/geometry.hpp"

#include <algorithm>
#include <numbers>

#include "citysim/error.hpp"

namespace citysim {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::spec_infeasible: return "SpecInfeasible";
    case ErrorCode::no_valid_pair: return "NoValidPair";
    case ErrorCode::insufficient_landmarks: return "InsufficientLandmarks";
    case ErrorCode::domain_error: return "DomainError";
    case ErrorCode::empty_input: return "EmptyInput";
    case ErrorCode::agent_busy: return "AgentBusy";
    case ErrorCode::unknown_agent: return "UnknownAgent";
    case ErrorCode::unknown_op: return "UnknownOp";
    case ErrorCode::message_too_long: return "MessageTooLong";
    case ErrorCode::oracle_blocked: return "OracleBlocked";
    case ErrorCode::io_error: return "IoError";
    case ErrorCode::schema_error: return "SchemaError";
    case ErrorCode::bad_request: return "BadRequest";
    case ErrorCode::config_error: return "ConfigError";
    case ErrorCode::bind_error: return "BindError";
    case ErrorCode::export_error: return "ExportError";
  }
  return "Unknown";
}

std::string_view cardinal_name(Cardinal c) {
  switch (c) {
    case Cardinal::N: return "north";
    case Cardinal::E: return "east";
    case Cardinal::S: return "south";
    case Cardinal::W: return "west";
  }
  return "north";
}

std::string_view cardinal_letter(Cardinal c) {
  switch (c) {
    case Cardinal::N: return "N";
    case Cardinal::E: return "E";
    case Cardinal::S: return "S";
    case Cardinal::W: return "W";
  }
  return "N";
}

Cardinal cardinal_from_letter(std::string_view s) {
  if (s == "N") return Cardinal::N;
  if (s == "E") return Cardinal::E;
  if (s == "S") return Cardinal::S;
  if (s == "W") return Cardinal::W;
  throw Error(ErrorCode::schema_error, "bad cardinal: " + std::string(s));
}

std::string_view axis_name(Axis a) { return a == Axis::NS ? "NS" : "EW"; }

double normalize_heading(double degrees) {
  double h = std::fmod(degrees, 360.0);
  if (h < 0.0) h += 360.0;
  if (h >= 360.0) h = 0.0;  // -1e-17 + 360 rounds to 360
  return h;
}

Cardinal cardinal_of(double heading) {
  const double h = normalize_heading(heading);
  const int q = static_cast<int>(std::floor((h + 45.0) / 90.0)) % 4;
  return static_cast<Cardinal>(q);
}

double heading_difference(double from, double to) {
  double d = normalize_heading(to - from);
  if (d > 180.0) d -= 360.0;
  return d;
}

Vec2 heading_vector(double heading) {
  const double h = normalize_heading(heading);
  if (h == 0.0) return {0.0, 1.0};
  if (h == 90.0) return {1.0, 0.0};
  if (h == 180.0) return {0.0, -1.0};
  if (h == 270.0) return {-1.0, 0.0};
  const double rad = h * std::numbers::pi / 180.0;
  return {std::sin(rad), std::cos(rad)};
}

double bearing(Vec2 from, Vec2 to) {
  const Vec2 d = to - from;
  if (d.x == 0.0 && d.y == 0.0) return 0.0;
  if (d.x == 0.0) return d.y > 0.0 ? 0.0 : 180.0;
  if (d.y == 0.0) return d.x > 0.0 ? 90.0 : 270.0;
  return normalize_heading(std::atan2(d.x, d.y) * 180.0 / std::numbers::pi);
}

double turn_heading(double heading, Turn turn) {
  return normalize_heading(heading + (turn == Turn::left ? -90.0 : 90.0));
}

double point_box_distance(Vec2 p, const Aabb& box) {
  const double dx = std::max({box.min.x - p.x, 0.0, p.x - box.max.x});
  const double dy = std::max({box.min.y - p.y, 0.0, p.y - box.max.y});
  return std::sqrt(dx * dx + dy * dy);
}

double point_segment_distance(Vec2 p, Vec2 a, Vec2 b) {
  const Vec2 ab = b - a;
  const double len2 = dot(ab, ab);
  if (len2 == 0.0) return distance(p, a);
  const double t = std::clamp(dot(p - a, ab) / len2, 0.0, 1.0);
  return distance(p, a + ab * t);
}

}  // namespace citysim
