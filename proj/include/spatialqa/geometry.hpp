#pragma once

// Geometric kernel: frame transforms, pinhole projection, ray/OBB slab test,
// 2D convex hulls and convex-polygon predicates.

#include "spatialqa/scene.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace spatialqa {

class MissingAnchor : public std::invalid_argument {
 public:
  MissingAnchor() : std::invalid_argument("object frame requires an anchor object") {}
};

class DegenerateInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::UnitZ();  // unit norm

  static Ray between(const Vec3& from, const Vec3& to) { return {from, (to - from).normalized()}; }
  Vec3 at(double t) const { return origin + t * direction; }
};

/// Counter-clockwise convex polygon in pixel (or ground-plane) coordinates.
struct Hull2D {
  std::vector<Vec2> vertices;
};

// ---------------------------------------------------------------------------
// Frames

/// Expresses a world point in the requested frame. Ego is the camera frame,
/// world is the identity, object is the anchor box frame about its center.
inline Vec3 world_to_frame(const Vec3& p, FrameKind frame, const CameraView& view,
                           const ObjectInstance* anchor = nullptr) {
  switch (frame) {
    case FrameKind::world: return p;
    case FrameKind::ego: return view.extrinsics.apply_inverse(p);
    case FrameKind::object:
      if (!anchor) throw MissingAnchor();
      return anchor->box.to_local(p);
  }
  return p;
}

inline Vec3 frame_to_world(const Vec3& p, FrameKind frame, const CameraView& view,
                           const ObjectInstance* anchor = nullptr) {
  switch (frame) {
    case FrameKind::world: return p;
    case FrameKind::ego: return view.extrinsics.apply(p);
    case FrameKind::object:
      if (!anchor) throw MissingAnchor();
      return anchor->box.to_world(p);
  }
  return p;
}

// ---------------------------------------------------------------------------
// Projection

/// Pinhole projection of an ego-frame point; nullopt when behind the camera.
inline std::optional<Vec2> project_ego(const Vec3& ego, const CameraIntrinsics& k) {
  if (!(ego.z() > 0.0)) return std::nullopt;
  return Vec2(k.fx * ego.x() / ego.z() + k.cx, k.fy * ego.y() / ego.z() + k.cy);
}

inline std::optional<Vec2> project(const Vec3& p_world, const CameraView& view) {
  return project_ego(view.extrinsics.apply_inverse(p_world), view.intrinsics);
}

/// Inverse of project_ego at a known depth, in the ego frame.
inline Vec3 backproject_ego(const Vec2& uv, double depth, const CameraIntrinsics& k) {
  return {(uv.x() - k.cx) / k.fx * depth, (uv.y() - k.cy) / k.fy * depth, depth};
}

inline bool inside_image(const Vec2& uv, const CameraIntrinsics& k) {
  return uv.x() >= 0.0 && uv.x() <= k.width && uv.y() >= 0.0 && uv.y() <= k.height;
}

// ---------------------------------------------------------------------------
// Ray / oriented box

inline constexpr double kSlabEpsilon = 1e-12;

/// Slab test in the box frame. Returns the entry distance (0 if the origin is
/// inside the box) or nullopt on a miss.
inline std::optional<double> ray_box_intersect(const Ray& ray, const OrientedBox& box) {
  const Vec3 o = box.to_local(ray.origin);
  const Vec3 d = box.heading.transpose() * ray.direction;
  double t_near = 0.0;
  double t_far = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    const double h = box.half_extents[a];
    if (std::abs(d[a]) < kSlabEpsilon) {
      if (o[a] < -h || o[a] > h) return std::nullopt;
      continue;
    }
    const double inv = 1.0 / d[a];
    const double t0 = (-h - o[a]) * inv;
    const double t1 = (h - o[a]) * inv;
    t_near = std::max(t_near, std::min(t0, t1));
    t_far = std::min(t_far, std::max(t0, t1));
  }
  if (t_near > t_far) return std::nullopt;
  return t_near;
}

// ---------------------------------------------------------------------------
// 2D predicates

inline constexpr double kHullEpsilon = 1e-9;

/// Signed area of the triangle (o, a, b) times two; positive for a CCW turn.
inline double cross(const Vec2& o, const Vec2& a, const Vec2& b) {
  return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
}

/// Andrew's monotone chain. Drops interior and collinear points.
inline Hull2D convex_hull(std::span<const Vec2> points) {
  std::vector<Vec2> pts(points.begin(), points.end());
  std::sort(pts.begin(), pts.end(), [](const Vec2& a, const Vec2& b) {
    return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
  });
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) throw DegenerateInput("convex hull needs at least 3 distinct points");

  std::vector<Vec2> hull(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= kHullEpsilon) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, lower = k + 1; i-- > 0;) {
    while (k >= lower && cross(hull[k - 2], hull[k - 1], pts[i]) <= kHullEpsilon) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  if (hull.size() < 3) throw DegenerateInput("convex hull input is collinear");
  return {std::move(hull)};
}

/// Boundary-inclusive containment: p must be on the left of (or on) every edge.
inline bool point_in_hull(const Vec2& p, const Hull2D& hull) {
  const auto& v = hull.vertices;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (cross(v[i], v[(i + 1) % v.size()], p) < 0.0) return false;
  }
  return true;
}

/// Same test as point_in_hull for an arbitrary CCW convex polygon.
inline bool point_in_convex(const Vec2& p, std::span<const Vec2> poly) {
  for (std::size_t i = 0; i < poly.size(); ++i) {
    if (cross(poly[i], poly[(i + 1) % poly.size()], p) < 0.0) return false;
  }
  return true;
}

namespace detail {

inline void project_onto(std::span<const Vec2> poly, const Vec2& axis, double& lo, double& hi) {
  lo = std::numeric_limits<double>::infinity();
  hi = -lo;
  for (const auto& p : poly) {
    const double s = p.dot(axis);
    lo = std::min(lo, s);
    hi = std::max(hi, s);
  }
}

inline bool separated_along_edges(std::span<const Vec2> a, std::span<const Vec2> b, double eps) {
  for (std::size_t i = 0; i < a.size(); ++i) {
    const Vec2 e = a[(i + 1) % a.size()] - a[i];
    const double len = e.norm();
    if (len == 0.0) continue;
    const Vec2 axis(-e.y() / len, e.x() / len);
    double alo, ahi, blo, bhi;
    project_onto(a, axis, alo, ahi);
    project_onto(b, axis, blo, bhi);
    if (std::min(ahi, bhi) - std::max(alo, blo) <= eps) return true;
  }
  return false;
}

}  // namespace detail

/// True iff two convex polygons share a region of positive area. Contact
/// along an edge or at a vertex (within eps) does not count.
inline bool convex_overlap(std::span<const Vec2> a, std::span<const Vec2> b,
                           double eps = kHullEpsilon) {
  return !detail::separated_along_edges(a, b, eps) && !detail::separated_along_edges(b, a, eps);
}

/// Signed area (positive for CCW).
inline double polygon_area(std::span<const Vec2> poly) {
  double a = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const auto& p = poly[i];
    const auto& q = poly[(i + 1) % poly.size()];
    a += p.x() * q.y() - q.x() * p.y();
  }
  return 0.5 * a;
}

/// Top-down footprint of a box: convex hull of its corners dropped onto the
/// ground plane. A 4-gon for upright boxes.
inline std::vector<Vec2> box_footprint(const OrientedBox& box) {
  std::array<Vec2, 8> pts;
  const auto corners = box.corners();
  for (int i = 0; i < 8; ++i) pts[i] = corners[i].head<2>();
  return convex_hull(pts).vertices;
}

}  // namespace spatialqa
