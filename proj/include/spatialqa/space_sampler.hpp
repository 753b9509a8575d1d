#pragma once

// Free-space sampling around an anchor: support surfaces, directional ground
// regions, and raycast-filtered point samples.

#include "spatialqa/geometry.hpp"
#include "spatialqa/occupancy.hpp"
#include "spatialqa/random.hpp"
#include "spatialqa/scene.hpp"

#include <algorithm>
#include <array>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace spatialqa {

class UnsupportedRelation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline const std::vector<std::string>& default_surface_allowlist() {
  static const std::vector<std::string> labels{"table", "desk",    "counter", "shelf",
                                               "floor", "bed",     "cabinet"};
  return labels;
}

struct SupportSurface {
  ObjectInstance object;
  double z_top = 0.0;
};

/// Objects whose label is allowlisted, with their top height.
inline std::vector<SupportSurface> support_surfaces(const Scene& scene,
                                                    const std::vector<std::string>& allowlist) {
  std::vector<SupportSurface> out;
  for (const auto& o : scene.objects) {
    if (std::find(allowlist.begin(), allowlist.end(), o.label) == allowlist.end()) continue;
    out.push_back({o, o.box.center.z() + o.box.half_extents.z()});
  }
  return out;
}

inline constexpr double kRestingTolerance = 0.05;  // m, gap between object bottom and surface top

/// The highest support whose outline contains the object's center and whose
/// top is within kRestingTolerance of the object's bottom.
inline std::optional<SupportSurface> find_support(const ObjectInstance& obj,
                                                  const std::vector<SupportSurface>& supports) {
  std::optional<SupportSurface> best;
  const double bottom = obj.box.z_min();
  for (const auto& s : supports) {
    if (s.object.id == obj.id) continue;
    if (std::abs(bottom - s.z_top) > kRestingTolerance) continue;
    if (!point_in_convex(obj.box.center.head<2>(), box_footprint(s.object.box))) continue;
    if (!best || s.z_top > best->z_top) best = s;
  }
  return best;
}

inline constexpr double kSupportBandHeight = 0.4;  // m of clearance rasterized above a surface

/// Occupancy within [z_top, z_top + 0.4] for objects resting on `support`.
inline OccupancyGrid build_support_grid(const Scene& scene, const SupportSurface& support,
                                        double resolution, double padding = 0.5) {
  auto grid = build_occupancy(scene, resolution,
                              {support.z_top, support.z_top + kSupportBandHeight}, padding);
  grid.support_id = support.object.id;
  grid.surface = box_footprint(support.object.box);
  return grid;
}

// ---------------------------------------------------------------------------
// Directional regions

/// Rectangle on the ground plane in (along, across) coordinates about the
/// anchor center: along in [near, far] on `axis`, across in [lo, hi] on `perp`.
struct Region {
  Vec2 origin = Vec2::Zero();
  Vec2 axis = Vec2::UnitX();
  Vec2 perp = Vec2::UnitY();
  double near = 0.0;
  double far = 0.0;
  double lo = 0.0;
  double hi = 0.0;

  Vec2 at(double along, double across) const { return origin + along * axis + across * perp; }

  /// Counter-clockwise corners.
  std::array<Vec2, 4> polygon() const {
    return {at(near, lo), at(far, lo), at(far, hi), at(near, hi)};
  }

  double depth() const { return far - near; }
  double width() const { return hi - lo; }
};

namespace detail {

inline std::optional<Vec2> ground_direction(const Vec3& v) {
  const Vec2 g = v.head<2>();
  const double n = g.norm();
  if (n < 1e-9) return std::nullopt;
  return g / n;
}

}  // namespace detail

/// Unit ground-plane direction in which `relation` points for this frame.
inline Vec2 relation_direction(RelationKind relation, FrameKind frame,
                               const ObjectInstance& anchor, const CameraView& view) {
  if (!is_horizontal(relation))
    throw UnsupportedRelation(std::string("relation '") + std::string(to_string(relation)) +
                              "' has no ground region");
  Vec2 front, left;
  if (frame == FrameKind::object) {
    auto f = detail::ground_direction(anchor.box.heading.col(0));
    auto l = detail::ground_direction(anchor.box.heading.col(1));
    if (!f || !l) throw UnsupportedRelation("anchor '" + anchor.id + "' heading is not upright");
    front = *f;
    left = *l;
  } else {
    // World-frame horizontal relations follow the camera.
    const Mat3& r = view.extrinsics.rotation;
    auto forward = detail::ground_direction(r.col(2));
    if (!forward) forward = detail::ground_direction(-r.col(1));
    if (!forward) throw UnsupportedRelation("camera has no horizontal heading");
    auto right = detail::ground_direction(r.col(0));
    if (!right) right = Vec2(forward->y(), -forward->x());
    front = -*forward;
    left = -*right;
  }
  switch (relation) {
    case RelationKind::front: return front;
    case RelationKind::behind: return -front;
    case RelationKind::left: return left;
    case RelationKind::right: return -left;
    default: break;
  }
  return front;
}

/// Rectangle flush with the anchor footprint's side facing `relation`,
/// `depth` deep, as wide as the footprint across that direction (or `width`).
inline Region directional_region(const ObjectInstance& anchor, RelationKind relation,
                                 FrameKind frame, const CameraView& view, double depth = 1.0,
                                 std::optional<double> width = std::nullopt) {
  Region region;
  region.origin = anchor.box.center.head<2>();
  region.axis = relation_direction(relation, frame, anchor, view);
  region.perp = Vec2(-region.axis.y(), region.axis.x());
  double near = -std::numeric_limits<double>::infinity();
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& c : box_footprint(anchor.box)) {
    const Vec2 d = c - region.origin;
    near = std::max(near, d.dot(region.axis));
    lo = std::min(lo, d.dot(region.perp));
    hi = std::max(hi, d.dot(region.perp));
  }
  region.near = near;
  region.far = near + depth;
  if (width) {
    region.lo = -*width / 2;
    region.hi = *width / 2;
  } else {
    region.lo = lo;
    region.hi = hi;
  }
  return region;
}

// ---------------------------------------------------------------------------
// Context sampling

struct ContextSample {
  std::string view_id;
  std::string anchor_id;
  RelationKind relation = RelationKind::left;
  FrameKind frame = FrameKind::ego;
  std::vector<Vec2> points_2d;
  std::vector<Vec3> points_3d;
};

struct NoFreeSpace {
  std::string reason;
  int occupied = 0;
  int off_image = 0;
  int occluded = 0;
};

struct SamplerOptions {
  int budget = 1000;
  double region_depth = 1.0;
  double lift = 0.02;              // m above the band floor
  double occlusion_slack = 1e-6;   // m
};

/// True when the straight segment camera -> point meets no box (other than
/// `ignore_id`) before reaching the point.
inline bool line_of_sight(const Scene& scene, const Vec3& from, const Vec3& to,
                          const std::optional<std::string>& ignore_id, double slack = 1e-6) {
  const Vec3 d = to - from;
  const double dist = d.norm();
  if (dist == 0.0) return true;
  const Ray ray{from, d / dist};
  for (const auto& obj : scene.objects) {
    if (ignore_id && obj.id == *ignore_id) continue;
    if (auto t = ray_box_intersect(ray, obj.box); t && *t <= dist - slack) return false;
  }
  return true;
}

/// Rejection-samples up to `k` points uniformly in the directional region that
/// sit in free grid cells, project into the image, and are visible from the
/// camera. Deterministic in `seed`.
inline std::variant<ContextSample, NoFreeSpace> sample_context(
    const Scene& scene, const CameraView& view, const ObjectInstance& anchor,
    RelationKind relation, FrameKind frame, const OccupancyGrid& grid, int k, std::uint64_t seed,
    const SamplerOptions& options = {}) {
  if (k < 1) throw std::invalid_argument("sample_context needs k >= 1");
  const Region region = directional_region(anchor, relation, frame, view, options.region_depth);
  const double z = grid.z_band.z_min + options.lift;

  ContextSample sample{view.view_id, anchor.id, relation, frame, {}, {}};
  NoFreeSpace failure;
  Rng rng(seed);
  for (int n = 0; n < options.budget && static_cast<int>(sample.points_3d.size()) < k; ++n) {
    const double along = uniform(rng, region.near, region.far);
    const double across = uniform(rng, region.lo, region.hi);
    const Vec2 xy = region.at(along, across);
    if (!grid.is_free(xy)) {
      ++failure.occupied;
      continue;
    }
    const Vec3 p(xy.x(), xy.y(), z);
    const auto uv = project(p, view);
    if (!uv || !inside_image(*uv, view.intrinsics)) {
      ++failure.off_image;
      continue;
    }
    if (!line_of_sight(scene, view.center(), p, grid.support_id, options.occlusion_slack)) {
      ++failure.occluded;
      continue;
    }
    sample.points_2d.push_back(*uv);
    sample.points_3d.push_back(p);
  }
  if (!sample.points_3d.empty()) return sample;

  // Name the last filter any candidate reached.
  if (failure.occluded > 0)
    failure.reason = "region occluded";
  else if (failure.off_image > 0)
    failure.reason = "region off-image";
  else
    failure.reason = "region fully occupied";
  return failure;
}

}  // namespace spatialqa
