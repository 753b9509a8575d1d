#pragma once

// Spatial compatibility: can a target's footprint, inflated by a clearance
// margin, be placed in a directional region under translation and yaw?

#include "spatialqa/geometry.hpp"
#include "spatialqa/occupancy.hpp"
#include "spatialqa/space_sampler.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

namespace spatialqa {

class RegionUndefined : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct FitQuery {
  std::string anchor_id;
  std::string target_id;
  RelationKind relation = RelationKind::front;
  FrameKind frame = FrameKind::object;
  double margin = 0.10;

  auto sort_key() const { return std::tie(anchor_id, target_id, relation, frame); }
};

struct FitOptions {
  int rotation_steps = 16;
  double translation_step = 0.0;  // 0 = grid resolution
  double region_depth = 1.0;
};

namespace detail {

inline bool placement_free(const OccupancyGrid& grid, const std::array<Vec2, 4>& corners) {
  if (!grid.surface.empty()) {
    for (const auto& c : corners)
      if (!point_in_convex(c, grid.surface)) return false;
  }
  Vec2 lo = corners[0], hi = corners[0];
  for (const auto& c : corners) {
    lo = lo.cwiseMin(c);
    hi = hi.cwiseMax(c);
  }
  // Cells are half-open; shrink by the overlap epsilon so exact contact with a
  // cell edge does not pull in the neighbour.
  const double r = grid.resolution;
  const double fi0 = std::floor((lo.x() + kOverlapEpsilon - grid.origin.x()) / r);
  const double fj0 = std::floor((lo.y() + kOverlapEpsilon - grid.origin.y()) / r);
  const double fi1 = std::floor((hi.x() - kOverlapEpsilon - grid.origin.x()) / r);
  const double fj1 = std::floor((hi.y() - kOverlapEpsilon - grid.origin.y()) / r);
  if (fi0 < 0 || fj0 < 0 || fi1 >= grid.nx || fj1 >= grid.ny) return false;
  const int i0 = static_cast<int>(fi0), j0 = static_cast<int>(fj0);
  const int i1 = static_cast<int>(fi1), j1 = static_cast<int>(fj1);
  if (grid.occupied_in(i0, j0, i1, j1) == 0) return true;
  for (int j = j0; j <= j1; ++j)
    for (int i = i0; i <= i1; ++i)
      if (grid.occupied(i, j) && convex_overlap(grid.cell_polygon(i, j), corners, kOverlapEpsilon))
        return false;
  return true;
}

}  // namespace detail

using Placement = std::array<Vec2, 4>;  // footprint corners, counter-clockwise

/// Exhaustive lattice scan over yaw in {2 pi k / rotation_steps} (relative to
/// the region axis) and centers spaced `step` apart, starting at the low end
/// of each feasible interval. `size` is the already inflated footprint (along
/// the target's local x, y). Returns the first free placement.
inline std::optional<Placement> find_placement(const Region& region, const Vec2& size,
                                               const OccupancyGrid& grid, int rotation_steps,
                                               double step) {
  if (rotation_steps < 1) throw std::invalid_argument("rotation_steps must be >= 1");
  if (!(step > 0.0)) throw std::invalid_argument("translation step must be positive");
  const double hw = size.x() / 2, hh = size.y() / 2;
  for (int k = 0; k < rotation_steps; ++k) {
    const double theta = 2.0 * std::numbers::pi * k / rotation_steps;
    const double c = std::cos(theta), s = std::sin(theta);
    const double reach_along = hw * std::abs(c) + hh * std::abs(s);
    const double reach_across = hw * std::abs(s) + hh * std::abs(c);
    const double a0 = region.near + reach_along, a1 = region.far - reach_along;
    const double b0 = region.lo + reach_across, b1 = region.hi - reach_across;
    if (a0 > a1 + 1e-9 || b0 > b1 + 1e-9) continue;
    const Vec2 u = c * region.axis + s * region.perp;
    const Vec2 v = -s * region.axis + c * region.perp;
    const int na = static_cast<int>(std::floor(std::max(0.0, a1 - a0) / step + 1e-9));
    const int nb = static_cast<int>(std::floor(std::max(0.0, b1 - b0) / step + 1e-9));
    for (int ia = 0; ia <= na; ++ia) {
      for (int ib = 0; ib <= nb; ++ib) {
        const Vec2 center = region.at(a0 + ia * step, b0 + ib * step);
        const Placement corners{center - hw * u - hh * v, center + hw * u - hh * v,
                                center + hw * u + hh * v, center - hw * u + hh * v};
        if (detail::placement_free(grid, corners)) return corners;
      }
    }
  }
  return std::nullopt;
}

inline bool fits_in_region(const Region& region, const Vec2& size, const OccupancyGrid& grid,
                           int rotation_steps, double step) {
  return find_placement(region, size, grid, rotation_steps, step).has_value();
}

inline bool check_fit(const Scene& scene, const CameraView& view, const FitQuery& query,
                      const OccupancyGrid& grid, const FitOptions& options = {}) {
  if (query.anchor_id == query.target_id)
    throw std::invalid_argument("fit query anchor and target must differ");
  if (!(query.margin >= 0.0)) throw std::invalid_argument("fit margin must be >= 0");
  const auto* anchor = scene.find_object(query.anchor_id);
  const auto* target = scene.find_object(query.target_id);
  if (!anchor || !target) throw std::invalid_argument("fit query names an unknown object");

  Region region;
  try {
    region = directional_region(*anchor, query.relation, query.frame, view, options.region_depth);
  } catch (const UnsupportedRelation& e) {
    throw RegionUndefined(e.what());
  }
  const Vec2 size(2 * (target->box.half_extents.x() + query.margin),
                  2 * (target->box.half_extents.y() + query.margin));
  const double step = options.translation_step > 0.0 ? options.translation_step : grid.resolution;
  return fits_in_region(region, size, grid, options.rotation_steps, step);
}

struct FitOutcome {
  FitQuery query;
  std::optional<bool> fits;  // empty when skipped
  std::string skip_reason;
};

/// check_fit over every query, ordered by (anchor, target, relation, frame).
inline std::vector<FitOutcome> emit_compatibility(const Scene& scene, const CameraView& view,
                                                  std::vector<FitQuery> queries,
                                                  const OccupancyGrid& grid,
                                                  const FitOptions& options = {}) {
  std::sort(queries.begin(), queries.end(),
            [](const FitQuery& a, const FitQuery& b) { return a.sort_key() < b.sort_key(); });
  std::vector<FitOutcome> out;
  out.reserve(queries.size());
  for (auto& q : queries) {
    FitOutcome r{std::move(q), std::nullopt, {}};
    try {
      r.fits = check_fit(scene, view, r.query, grid, options);
    } catch (const RegionUndefined& e) {
      r.skip_reason = std::string("RegionUndefined: ") + e.what();
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace spatialqa
