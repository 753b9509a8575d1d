#include "fit_instances.hpp"
#include "oracles.hpp"
#include "test_support.hpp"
#include "spatialqa/qa.hpp"

#include <gtest/gtest.h>

#include <numbers>
#include <random>

using namespace spatialqa;
using namespace spatialqa::testing;

namespace {

bool inside_region(const Region& region, const Vec2& q) {
  const Vec2 d = q - region.origin;
  return d.dot(region.axis) >= region.near - 1e-9 && d.dot(region.axis) <= region.far + 1e-9 &&
         d.dot(region.perp) >= region.lo - 1e-9 && d.dot(region.perp) <= region.hi + 1e-9;
}

/// Clipped-area test of a placement against every occupied cell.
bool placement_clear(const std::vector<Vec2>& fp, const OccupancyGrid& g) {
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i)
      if (g.occupied(i, j)) {
        const Vec2 cl = g.origin + Vec2(i, j) * g.resolution;
        if (oracle::clipped_area(fp, cl, cl + Vec2::Constant(g.resolution)) > 1e-9) return false;
      }
  return true;
}

/// Independent scan: placements on a lattice covering the region's bounding
/// square, kept if all corners lie in the region and the placement shares no
/// area with any occupied cell.
bool brute_fit(const Region& region, const Vec2& size, const OccupancyGrid& g, int steps, double step) {
  const auto poly = region.polygon();
  Vec2 lo = poly[0], hi = poly[0];
  for (const auto& p : poly) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  for (int k = 0; k < steps; ++k) {
    const double th = 2 * std::numbers::pi * k / steps;
    const Vec2 dir = std::cos(th) * region.axis + std::sin(th) * region.perp;
    const Vec2 u = dir * (size.x() / 2);
    const Vec2 v = Vec2(-dir.y(), dir.x()) * (size.y() / 2);
    for (double x = lo.x(); x <= hi.x() + 1e-12; x += step)
      for (double y = lo.y(); y <= hi.y() + 1e-12; y += step) {
        const Vec2 c(x, y);
        const std::vector<Vec2> fp{c - u - v, c + u - v, c + u + v, c - u + v};
        if (std::all_of(fp.begin(), fp.end(), [&](const Vec2& q) { return inside_region(region, q); }) &&
            placement_clear(fp, g))
          return true;
      }
  }
  return false;
}

}  // namespace

TEST(CheckFit, SmallTargetFits) {
  const auto s = region_scene({0.5, 0.5});
  EXPECT_TRUE(check_fit(s, s.views[0], front_query(), band_grid(s)));
}

TEST(CheckFit, OversizedSquareNeverFits) {
  const auto s = region_scene({0.9, 0.9});
  EXPECT_FALSE(check_fit(s, s.views[0], front_query(), band_grid(s)));
  // w (|cos| + |sin|) >= w: no yaw makes the square narrower than 1.1 m.
  for (int k = 0; k < 16; ++k) {
    const double th = 2 * std::numbers::pi * k / 16;
    EXPECT_GE(1.1 * (std::abs(std::cos(th)) + std::abs(std::sin(th))), 1.1 - 1e-12);
  }
}

TEST(CheckFit, OccupiedRegionRejects) {
  auto s = region_scene({0.2, 0.2});
  s.objects.push_back(make_object("filler", "filler", {1.0, 0, 0.5}, {0.5, 0.5, 0.5}));
  EXPECT_FALSE(check_fit(s, s.views[0], front_query(), band_grid(s)));
}

TEST(CheckFit, RotationMatters) {
  // 0.8 x 0.2 target, inflated to 1.0 x 0.4, in a 0.5 deep x 1.2 wide region.
  const auto s = region_scene({0.8, 0.2}, 0.6);
  const auto g = band_grid(s);
  FitOptions opt;
  opt.region_depth = 0.5;
  EXPECT_TRUE(check_fit(s, s.views[0], front_query(), g, opt));
  opt.rotation_steps = 1;
  EXPECT_FALSE(check_fit(s, s.views[0], front_query(), g, opt));

  const Region region = front_region(s, 0.5);
  const auto placed = find_placement(region, {1.0, 0.4}, g, 16, g.resolution);
  ASSERT_TRUE(placed);
  // The long side runs across the region, i.e. the yaw is 90 degrees.
  const Vec2 long_edge = (*placed)[1] - (*placed)[0];
  EXPECT_NEAR(std::abs(long_edge.normalized().dot(region.axis)), 0.0, 1e-9);
  // Required depth 1.0|cos| + 0.4|sin| is within 0.5 only at 90 and 270 degrees.
  for (int k = 0; k < 16; ++k) {
    const double th = 2 * std::numbers::pi * k / 16;
    const double depth_needed = 1.0 * std::abs(std::cos(th)) + 0.4 * std::abs(std::sin(th));
    EXPECT_EQ(depth_needed <= 0.5 + 1e-9, k == 4 || k == 12) << k;
  }
}

TEST(CheckFit, FoundPlacementsAreSound) {
  int found = 0;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto inst = random_instance(seed);
    const auto region = front_region(inst.scene);
    const auto placed = find_placement(region, inflated(inst), inst.grid, 16, inst.grid.resolution);
    ASSERT_EQ(placed.has_value(), check_fit(inst.scene, inst.scene.views[0], inst.query, inst.grid));
    if (!placed) continue;
    ++found;
    const std::vector<Vec2> fp(placed->begin(), placed->end());
    for (const auto& q : fp) EXPECT_TRUE(inside_region(region, q)) << "seed " << seed;
    EXPECT_TRUE(placement_clear(fp, inst.grid)) << "seed " << seed;
    EXPECT_NEAR((fp[1] - fp[0]).norm(), inflated(inst).x(), 1e-9);
    EXPECT_NEAR((fp[3] - fp[0]).norm(), inflated(inst).y(), 1e-9);
  }
  EXPECT_GT(found, 5);
}

TEST(CheckFit, NoFitMeansBruteScanFindsNone) {
  int negatives = 0;
  for (std::uint64_t seed = 0; seed < 12; ++seed) {
    const auto inst = random_instance(seed);
    if (check_fit(inst.scene, inst.scene.views[0], inst.query, inst.grid)) continue;
    ++negatives;
    EXPECT_FALSE(brute_fit(front_region(inst.scene), inflated(inst), inst.grid, 16, 0.025))
        << "seed " << seed;
  }
  EXPECT_GT(negatives, 0);
}

TEST(CheckFit, InvalidQueries) {
  const auto s = region_scene({0.2, 0.2});
  const auto g = band_grid(s);
  FitQuery q = front_query();
  q.relation = RelationKind::above;
  EXPECT_THROW(check_fit(s, s.views[0], q, g), RegionUndefined);
  q = front_query(-0.1);
  EXPECT_THROW(check_fit(s, s.views[0], q, g), std::invalid_argument);
  q = front_query();
  q.target_id = "anchor";
  EXPECT_THROW(check_fit(s, s.views[0], q, g), std::invalid_argument);
}

TEST(EmitCompatibility, EmptyQueries) {
  const auto s = region_scene({0.2, 0.2});
  EXPECT_TRUE(emit_compatibility(s, s.views[0], {}, band_grid(s)).empty());
}

TEST(EmitCompatibility, FixtureS1MugInFrontOfTable) {
  const auto s = fixture_s1();
  const auto g = build_occupancy(s, 0.05, {0.8, 1.2}, 1.5);
  FitQuery q{"table_1", "mug_1", RelationKind::front, FrameKind::object, 0.10};
  FitQuery huge = q;
  huge.margin = 10.0;
  FitQuery vertical = q;
  vertical.relation = RelationKind::above;
  const auto out = emit_compatibility(s, s.views[0], {huge, vertical, q}, g);
  ASSERT_EQ(out.size(), 3u);
  // Sorted by key: above precedes front; equal keys keep input order.
  EXPECT_EQ(out[0].query.relation, RelationKind::above);
  EXPECT_FALSE(out[0].fits);
  EXPECT_EQ(out[0].skip_reason.rfind("RegionUndefined", 0), 0u);
  ASSERT_TRUE(out[1].fits && out[2].fits);
  EXPECT_FALSE(*out[1].fits);
  EXPECT_TRUE(*out[2].fits);
}

TEST(FitProperties, MonotoneInMargin) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    auto inst = random_instance(seed);
    bool prev = true;
    for (double m : {0.0, 0.02, 0.05, 0.1, 0.15, 0.2, 0.3}) {
      inst.query.margin = m;
      const bool now = check_fit(inst.scene, inst.scene.views[0], inst.query, inst.grid);
      if (!prev) EXPECT_FALSE(now) << "seed " << seed << " margin " << m;
      prev = now;
    }
  }
}

TEST(FitProperties, MonotoneInClutter) {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u01(0, 1);
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    auto inst = random_instance(seed);
    const bool before = check_fit(inst.scene, inst.scene.views[0], inst.query, inst.grid);
    inst.scene.objects.push_back(make_object("more", "more", {0.5 + u01(rng), u01(rng) - 0.5, 0.3},
                                             {0.1, 0.1, 0.3}, u01(rng) * 3));
    const auto grid = band_grid(inst.scene);
    ASSERT_EQ(grid.origin, inst.grid.origin);
    const bool after = check_fit(inst.scene, inst.scene.views[0], inst.query, grid);
    if (!before) EXPECT_FALSE(after) << "seed " << seed;
  }
}

TEST(FitProperties, RefinedLatticeAgrees) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto inst = random_instance(seed);
    FitOptions coarse, fine;
    coarse.translation_step = inst.grid.resolution / GenerationConfig{}.fit_subdivisions;
    fine.translation_step = coarse.translation_step / 4;
    EXPECT_EQ(check_fit(inst.scene, inst.scene.views[0], inst.query, inst.grid, coarse),
              check_fit(inst.scene, inst.scene.views[0], inst.query, inst.grid, fine))
        << "seed " << seed;
  }
}

TEST(FitProperties, SquareFootprintRotationSymmetry) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    auto inst = random_instance(seed);
    auto& t = inst.scene.objects[1].box.half_extents;
    t.y() = t.x();
    FitOptions four, sixteen;
    four.rotation_steps = 4;
    sixteen.rotation_steps = 16;
    EXPECT_EQ(check_fit(inst.scene, inst.scene.views[0], inst.query, inst.grid, four),
              check_fit(inst.scene, inst.scene.views[0], inst.query, inst.grid, sixteen))
        << "seed " << seed;
  }
}
