#pragma once

// Planar geometry: SE(2) poses and convex polygons with closed-set overlap tests.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

namespace cellscript {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kPoseTolerance = 1e-9;

/// Wraps an angle into (-pi, pi].
inline double normalize_angle(double a) {
  a = std::fmod(a, 2.0 * kPi);
  if (a <= -kPi) a += 2.0 * kPi;
  if (a > kPi) a -= 2.0 * kPi;
  return a;
}

/// Smallest signed difference a - b on the circle.
inline double angle_diff(double a, double b) { return normalize_angle(a - b); }

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend bool operator==(Vec2, Vec2) = default;
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }

inline Vec2 rotate(Vec2 v, double theta) {
  const double c = std::cos(theta), s = std::sin(theta);
  return {c * v.x - s * v.y, s * v.x + c * v.y};
}

/// Rigid transform in the plane. theta is kept in (-pi, pi].
struct Pose {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;

  Pose() = default;
  Pose(double px, double py, double th) : x(px), y(py), theta(normalize_angle(th)) {}

  Vec2 position() const { return {x, y}; }

  /// Maps a point expressed in this frame into the parent frame.
  Vec2 apply(Vec2 p) const { return rotate(p, theta) + position(); }

  Pose inverse() const {
    const Vec2 t = rotate({-x, -y}, -theta);
    return {t.x, t.y, -theta};
  }

  friend Pose operator*(const Pose& a, const Pose& b) {
    const Vec2 t = a.apply(b.position());
    return {t.x, t.y, a.theta + b.theta};
  }
};

inline Pose rotation(double theta) { return {0.0, 0.0, theta}; }

inline bool approx_equal(const Pose& a, const Pose& b, double tol = kPoseTolerance) {
  return std::abs(a.x - b.x) <= tol && std::abs(a.y - b.y) <= tol &&
         std::abs(angle_diff(a.theta, b.theta)) <= tol;
}

/// Combined translational + angular residual used by the IK contract.
inline double pose_residual(const Pose& a, const Pose& b) {
  return std::hypot(a.x - b.x, a.y - b.y) + std::abs(angle_diff(a.theta, b.theta));
}

using Polygon = std::vector<Vec2>;

inline double signed_area(std::span<const Vec2> poly) {
  double s = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    s += cross(poly[i], poly[(i + 1) % poly.size()]);
  }
  return 0.5 * s;
}

/// Convex, counter-clockwise, and with area above 1e-9 m^2.
inline bool is_valid_convex(std::span<const Vec2> poly) {
  if (poly.size() < 3 || signed_area(poly) <= 1e-9) return false;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Vec2 a = poly[i], b = poly[(i + 1) % poly.size()], c = poly[(i + 2) % poly.size()];
    if (cross(b - a, c - b) < -1e-12) return false;
  }
  return true;
}

inline Polygon transform(std::span<const Vec2> poly, const Pose& pose) {
  Polygon out;
  out.reserve(poly.size());
  for (const Vec2& p : poly) out.push_back(pose.apply(p));
  return out;
}

/// Andrew's monotone chain; returns CCW hull without collinear points.
inline Polygon convex_hull(std::vector<Vec2> pts) {
  std::sort(pts.begin(), pts.end(), [](Vec2 a, Vec2 b) { return a.x < b.x || (a.x == b.x && a.y < b.y); });
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) return pts;
  Polygon hull(2 * pts.size());
  std::size_t k = 0;
  for (const Vec2& p : pts) {
    while (k >= 2 && cross(hull[k - 1] - hull[k - 2], p - hull[k - 2]) <= 0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, lower = k + 1; i-- > 0;) {
    while (k >= lower && cross(hull[k - 1] - hull[k - 2], pts[i] - hull[k - 2]) <= 0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  return hull;
}

namespace detail {

inline constexpr int kArcSegments = 16;

/// Circumradius factor so a regular n-gon contains the circle it approximates.
inline double circumscribed(double r, int n) { return r / std::cos(kPi / n); }

}  // namespace detail

/// Minkowski sum with a disk of radius `margin` (circumscribed polygonal disk, so conservative).
inline Polygon inflate(std::span<const Vec2> poly, double margin) {
  if (margin <= 0.0) return Polygon(poly.begin(), poly.end());
  const int n = detail::kArcSegments;
  const double r = detail::circumscribed(margin, n);
  std::vector<Vec2> pts;
  pts.reserve(poly.size() * n);
  for (const Vec2& p : poly) {
    for (int i = 0; i < n; ++i) {
      const double a = 2.0 * kPi * i / n;
      pts.push_back({p.x + r * std::cos(a), p.y + r * std::sin(a)});
    }
  }
  return convex_hull(std::move(pts));
}

/// Convex polygon enclosing the capsule around segment [a, b] with radius r.
inline Polygon capsule_polygon(Vec2 a, Vec2 b, double r) {
  const int n = detail::kArcSegments;
  const double rc = detail::circumscribed(r, n);
  std::vector<Vec2> pts;
  pts.reserve(2 * n);
  for (int i = 0; i < n; ++i) {
    const double ang = 2.0 * kPi * i / n;
    const Vec2 d{rc * std::cos(ang), rc * std::sin(ang)};
    pts.push_back(a + d);
    pts.push_back(b + d);
  }
  return convex_hull(std::move(pts));
}

struct Aabb {
  Vec2 lo{1e300, 1e300};
  Vec2 hi{-1e300, -1e300};

  bool overlaps(const Aabb& o) const {
    return lo.x <= o.hi.x && o.lo.x <= hi.x && lo.y <= o.hi.y && o.lo.y <= hi.y;
  }
};

inline Aabb bounds(std::span<const Vec2> poly) {
  Aabb box;
  for (const Vec2& p : poly) {
    box.lo = {std::min(box.lo.x, p.x), std::min(box.lo.y, p.y)};
    box.hi = {std::max(box.hi.x, p.x), std::max(box.hi.y, p.y)};
  }
  return box;
}

namespace detail {

inline void project(std::span<const Vec2> poly, Vec2 axis, double& lo, double& hi) {
  lo = hi = dot(poly[0], axis);
  for (const Vec2& p : poly.subspan(1)) {
    const double d = dot(p, axis);
    lo = std::min(lo, d);
    hi = std::max(hi, d);
  }
}

inline bool has_separating_axis(std::span<const Vec2> a, std::span<const Vec2> b) {
  for (std::size_t i = 0; i < a.size(); ++i) {
    const Vec2 e = a[(i + 1) % a.size()] - a[i];
    const Vec2 axis{-e.y, e.x};
    double alo, ahi, blo, bhi;
    project(a, axis, alo, ahi);
    project(b, axis, blo, bhi);
    // Touching is contact (closed sets): separation needs a strict gap.
    if (ahi < blo || bhi < alo) return true;
  }
  return false;
}

}  // namespace detail

/// Separating-axis test on convex polygons. Touching counts as overlap.
inline bool sat_overlap(std::span<const Vec2> a, std::span<const Vec2> b) {
  if (a.empty() || b.empty()) return false;
  if (!bounds(a).overlaps(bounds(b))) return false;
  return !detail::has_separating_axis(a, b) && !detail::has_separating_axis(b, a);
}

inline bool point_in_convex(std::span<const Vec2> poly, Vec2 p) {
  for (std::size_t i = 0; i < poly.size(); ++i) {
    if (cross(poly[(i + 1) % poly.size()] - poly[i], p - poly[i]) < 0.0) return false;
  }
  return true;
}

inline double point_segment_distance(Vec2 p, Vec2 a, Vec2 b) {
  const Vec2 ab = b - a;
  const double len2 = dot(ab, ab);
  const double t = len2 > 0.0 ? std::clamp(dot(p - a, ab) / len2, 0.0, 1.0) : 0.0;
  return norm(p - (a + t * ab));
}

/// Axis-aligned extents (width, height) of a polygon in its own frame.
inline Vec2 extents(std::span<const Vec2> poly) {
  const Aabb b = bounds(poly);
  return {b.hi.x - b.lo.x, b.hi.y - b.lo.y};
}

inline Polygon rectangle(double w, double h) {
  return {{-w / 2, -h / 2}, {w / 2, -h / 2}, {w / 2, h / 2}, {-w / 2, h / 2}};
}

}  // namespace cellscript
