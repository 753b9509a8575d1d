#pragma once

// Top-down occupancy map: box footprints rasterized within a vertical slab.

#include "spatialqa/geometry.hpp"
#include "spatialqa/scene.hpp"

#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace spatialqa {

class GridTooLarge : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ZBand {
  double z_min = 0.0;
  double z_max = 0.0;
};

struct CellIndex {
  int i = 0;
  int j = 0;
};

struct OccupancyGrid {
  Vec2 origin = Vec2::Zero();  // world xy of the (0, 0) cell corner
  double resolution = 0.05;
  int nx = 0;
  int ny = 0;
  std::vector<std::uint8_t> cells;  // row-major, j * nx + i; 1 = occupied
  ZBand z_band;
  std::vector<std::string> warnings;

  // Set when the grid was built for a support surface: the surface's id and
  // top-down outline. Placements and samples must stay on the outline.
  std::optional<std::string> support_id;
  std::vector<Vec2> surface;

  bool occupied(int i, int j) const { return cells[static_cast<std::size_t>(j) * nx + i] != 0; }

  std::size_t occupied_count() const {
    std::size_t n = 0;
    for (auto c : cells) n += c;
    return n;
  }

  std::array<Vec2, 4> cell_polygon(int i, int j) const {
    const double x0 = origin.x() + i * resolution;
    const double y0 = origin.y() + j * resolution;
    const double x1 = origin.x() + (i + 1) * resolution;
    const double y1 = origin.y() + (j + 1) * resolution;
    return {Vec2(x0, y0), Vec2(x1, y0), Vec2(x1, y1), Vec2(x0, y1)};
  }

  std::optional<CellIndex> cell_of(const Vec2& p) const {
    const double fi = std::floor((p.x() - origin.x()) / resolution);
    const double fj = std::floor((p.y() - origin.y()) / resolution);
    if (!(fi >= 0 && fj >= 0 && fi < nx && fj < ny)) return std::nullopt;
    return CellIndex{static_cast<int>(fi), static_cast<int>(fj)};
  }

  /// Inside the grid, in a free cell, and on the support outline if there is one.
  bool is_free(const Vec2& p) const {
    auto c = cell_of(p);
    if (!c || occupied(c->i, c->j)) return false;
    return surface.empty() || point_in_convex(p, surface);
  }

  /// Occupied cells in the inclusive index rectangle, via the summed-area table.
  long occupied_in(int i0, int j0, int i1, int j1) const {
    const auto at = [&](int i, int j) { return prefix_[static_cast<std::size_t>(j) * (nx + 1) + i]; };
    return at(i1 + 1, j1 + 1) - at(i0, j1 + 1) - at(i1 + 1, j0) + at(i0, j0);
  }

  void rebuild_index() {
    prefix_.assign(static_cast<std::size_t>(nx + 1) * (ny + 1), 0);
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i)
        prefix_[static_cast<std::size_t>(j + 1) * (nx + 1) + i + 1] =
            occupied(i, j) + prefix_[static_cast<std::size_t>(j) * (nx + 1) + i + 1] +
            prefix_[static_cast<std::size_t>(j + 1) * (nx + 1) + i] -
            prefix_[static_cast<std::size_t>(j) * (nx + 1) + i];
  }

 private:
  std::vector<long> prefix_;
};

inline constexpr double kOverlapEpsilon = 1e-9;
inline constexpr std::size_t kMaxGridCells = 50'000'000;

/// Positive-length overlap of the box's vertical extent with the band.
inline bool intersects_band(const OrientedBox& box, const ZBand& band) {
  return box.z_max() > band.z_min + kOverlapEpsilon && box.z_min() < band.z_max - kOverlapEpsilon;
}

/// Marks every cell whose square shares positive area with some footprint of a
/// box crossing `band`. The grid spans all boxes' footprints plus `padding`.
inline OccupancyGrid build_occupancy(const Scene& scene, double resolution, ZBand band,
                                     double padding = 0.5) {
  if (!(std::isfinite(resolution) && resolution > 0.0))
    throw std::invalid_argument("grid resolution must be positive");
  if (!(band.z_min < band.z_max)) throw std::invalid_argument("z_band needs z_min < z_max");
  if (!(padding >= 0.5)) throw std::invalid_argument("grid padding must be at least 0.5 m");
  if (scene.objects.empty()) throw std::invalid_argument("scene has no objects");

  std::vector<std::vector<Vec2>> footprints;
  footprints.reserve(scene.objects.size());
  Vec2 lo = Vec2::Constant(std::numeric_limits<double>::infinity());
  Vec2 hi = -lo;
  for (const auto& obj : scene.objects) {
    footprints.push_back(box_footprint(obj.box));
    for (const auto& p : footprints.back()) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
  }

  OccupancyGrid grid;
  grid.resolution = resolution;
  grid.z_band = band;
  grid.origin = lo - Vec2::Constant(padding);
  const Vec2 span = (hi - lo) + Vec2::Constant(2 * padding);
  const double fx = std::ceil(span.x() / resolution - 1e-9);
  const double fy = std::ceil(span.y() / resolution - 1e-9);
  if (!(std::isfinite(fx) && std::isfinite(fy)) ||
      fx * fy > static_cast<double>(kMaxGridCells))
    throw GridTooLarge("occupancy grid for scene '" + scene.scene_id + "' would exceed " +
                       std::to_string(kMaxGridCells) + " cells");
  grid.nx = std::max(1, static_cast<int>(fx));
  grid.ny = std::max(1, static_cast<int>(fy));
  grid.cells.assign(static_cast<std::size_t>(grid.nx) * grid.ny, 0);

  bool any = false;
  for (std::size_t k = 0; k < scene.objects.size(); ++k) {
    if (!intersects_band(scene.objects[k].box, band)) continue;
    any = true;
    const auto& fp = footprints[k];
    Vec2 flo = fp.front(), fhi = fp.front();
    for (const auto& p : fp) {
      flo = flo.cwiseMin(p);
      fhi = fhi.cwiseMax(p);
    }
    const int i0 = std::max(0, static_cast<int>(std::floor((flo.x() - grid.origin.x()) / resolution)) - 1);
    const int j0 = std::max(0, static_cast<int>(std::floor((flo.y() - grid.origin.y()) / resolution)) - 1);
    const int i1 = std::min(grid.nx - 1, static_cast<int>(std::floor((fhi.x() - grid.origin.x()) / resolution)) + 1);
    const int j1 = std::min(grid.ny - 1, static_cast<int>(std::floor((fhi.y() - grid.origin.y()) / resolution)) + 1);
    for (int j = j0; j <= j1; ++j) {
      for (int i = i0; i <= i1; ++i) {
        auto& cell = grid.cells[static_cast<std::size_t>(j) * grid.nx + i];
        if (cell) continue;
        if (convex_overlap(grid.cell_polygon(i, j), fp, kOverlapEpsilon)) cell = 1;
      }
    }
  }
  if (!any)
    grid.warnings.push_back("EmptyBand: no box intersects z in [" + detail::fmt_num(band.z_min) +
                            ", " + detail::fmt_num(band.z_max) + "]");
  grid.rebuild_index();
  return grid;
}

/// Writes the grid as binary PGM (P5): 255 free, 0 occupied, +y up.
inline void write_pgm(const OccupancyGrid& grid, std::ostream& out) {
  out << "P5\n" << grid.nx << ' ' << grid.ny << "\n255\n";
  std::vector<char> row(static_cast<std::size_t>(grid.nx));
  for (int j = grid.ny - 1; j >= 0; --j) {
    for (int i = 0; i < grid.nx; ++i) row[i] = static_cast<char>(grid.occupied(i, j) ? 0 : 255);
    out.write(row.data(), static_cast<std::streamsize>(row.size()));
  }
}

}  // namespace spatialqa
