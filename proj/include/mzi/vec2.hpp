#pragma once

#include <cmath>
#include <ostream>

namespace mzi {

struct Vec2 {
  double x{0.0};
  double y{0.0};

  constexpr Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  constexpr Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  constexpr Vec2 operator-() const { return {-x, -y}; }
  constexpr Vec2 operator*(double s) const { return {x * s, y * s}; }
  constexpr bool operator==(const Vec2&) const = default;
};

constexpr Vec2 operator*(double s, Vec2 v) { return v * s; }
constexpr double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double norm(Vec2 v) { return std::hypot(v.x, v.y); }
inline Vec2 normalized(Vec2 v) {
  const double n = norm(v);
  return {v.x / n, v.y / n};
}
// Counter-clockwise perpendicular.
constexpr Vec2 perp(Vec2 v) { return {-v.y, v.x}; }

// Mirror a direction about a plane with unit normal n.
constexpr Vec2 reflect_direction(Vec2 d, Vec2 n) { return d - 2.0 * dot(d, n) * n; }

// Mirror a point about the plane through `on_plane` with unit normal n.
constexpr Vec2 reflect_point(Vec2 p, Vec2 on_plane, Vec2 n) {
  return p - 2.0 * dot(p - on_plane, n) * n;
}

inline std::ostream& operator<<(std::ostream& os, Vec2 v) {
  return os << '(' << v.x << ", " << v.y << ')';
}

}  // namespace mzi
