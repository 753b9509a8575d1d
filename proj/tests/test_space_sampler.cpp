#include "spatialqa/occupancy.hpp"
#include "spatialqa/space_sampler.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <numbers>
#include <sstream>

using namespace spatialqa;
using spatialqa::testing::fixture_s1;
using spatialqa::testing::look_at;
using spatialqa::testing::make_object;

namespace {

constexpr double kPi = std::numbers::pi;

Scene single_box_scene(double yaw_radians) {
  Scene s;
  s.scene_id = "one";
  s.objects.push_back(make_object("b", "box", {0, 0, 0.5}, {0.5, 0.5, 0.5}, yaw_radians));
  s.views.push_back(look_at("v", {0, -3, 1}, {0, 0, 0.5}));
  return s;
}

/// Occupied cells by exact clipped area, recomputed from scratch.
std::vector<std::uint8_t> clipping_oracle(const Scene& s, const OccupancyGrid& g) {
  std::vector<std::uint8_t> cells(g.cells.size(), 0);
  for (const auto& o : s.objects) {
    if (!(o.box.z_max() > g.z_band.z_min && o.box.z_min() < g.z_band.z_max)) continue;
    const auto fp = oracle::footprint_corners(o.box);
    for (int j = 0; j < g.ny; ++j)
      for (int i = 0; i < g.nx; ++i) {
        const Vec2 lo = g.origin + Vec2(i, j) * g.resolution;
        if (oracle::clipped_area(fp, lo, lo + Vec2::Constant(g.resolution)) > 1e-12)
          cells[static_cast<std::size_t>(j) * g.nx + i] = 1;
      }
  }
  return cells;
}

std::vector<std::uint8_t> subsample_oracle(const Scene& s, const OccupancyGrid& g) {
  std::vector<std::uint8_t> cells(g.cells.size(), 0);
  for (const auto& o : s.objects) {
    if (!(o.box.z_max() > g.z_band.z_min && o.box.z_min() < g.z_band.z_max)) continue;
    for (int j = 0; j < g.ny; ++j)
      for (int i = 0; i < g.nx; ++i)
        if (oracle::cell_hit_by_subsample(g.origin + Vec2(i, j) * g.resolution, g.resolution, o.box))
          cells[static_cast<std::size_t>(j) * g.nx + i] = 1;
  }
  return cells;
}

std::size_t count(const std::vector<std::uint8_t>& c) { return std::count(c.begin(), c.end(), 1); }

SupportSurface table_support(const Scene& s) {
  return support_surfaces(s, default_surface_allowlist()).at(0);
}

/// Independent re-check of one emitted point: on the surface, in no box's
/// footprint cell, inside the region, and seen by a marching ray.
void expect_sound_point(const Scene& s, const CameraView& v, const Region& region,
                        const OccupancyGrid& fresh, const Vec3& p, const Vec2& uv) {
  const auto c = fresh.cell_of(p.head<2>());
  ASSERT_TRUE(c);
  const Vec2 lo = fresh.origin + Vec2(c->i, c->j) * fresh.resolution;
  for (const auto& o : s.objects) {
    if (!(o.box.z_max() > fresh.z_band.z_min && o.box.z_min() < fresh.z_band.z_max)) continue;
    EXPECT_LE(oracle::clipped_area(oracle::footprint_corners(o.box), lo,
                                   lo + Vec2::Constant(fresh.resolution)),
              1e-12)
        << o.id;
  }
  const Vec2 d = p.head<2>() - region.origin;
  EXPECT_GE(d.dot(region.axis), region.near - 1e-9);
  EXPECT_LE(d.dot(region.axis), region.far + 1e-9);
  EXPECT_GE(d.dot(region.perp), region.lo - 1e-9);
  EXPECT_LE(d.dot(region.perp), region.hi + 1e-9);

  const auto want_uv = oracle::project(p, v);
  ASSERT_TRUE(want_uv);
  EXPECT_LT((*want_uv - uv).norm(), 1e-9);

  const Vec3 cam = v.extrinsics.translation;
  const double dist = (p - cam).norm();
  const Vec3 dir = (p - cam) / dist;
  for (const auto& o : s.objects) {
    if (fresh.support_id && o.id == *fresh.support_id) continue;
    if (auto t = oracle::march(cam, dir, o.box, dist - 1e-3, 1e-3)) ADD_FAILURE() << "ray hits " << o.id << " at " << *t;
  }
}

}  // namespace

TEST(BuildOccupancy, AxisAlignedUnitBox) {
  const auto s = single_box_scene(0);
  const auto g = build_occupancy(s, 0.1, {0.0, 1.0});
  EXPECT_NEAR(g.origin.x(), -1.0, 1e-12);
  EXPECT_NEAR(g.origin.y(), -1.0, 1e-12);
  EXPECT_EQ(g.nx, 20);
  EXPECT_EQ(g.ny, 20);
  EXPECT_EQ(g.occupied_count(), 100u);
  EXPECT_EQ(g.cells, subsample_oracle(s, g));
}

// A 45-degree footprint clips the corners of cells it only grazes: those cells
// share positive area with the box but none of a 10x10 sub-sample lands inside.
TEST(BuildOccupancy, Rotated45MatchesExactAreaOracle) {
  const auto s = single_box_scene(kPi / 4);
  const auto g = build_occupancy(s, 0.1, {0.0, 1.0});
  EXPECT_EQ(g.cells, clipping_oracle(s, g));
  EXPECT_EQ(g.occupied_count(), 134u);
  const auto sub = subsample_oracle(s, g);
  for (std::size_t k = 0; k < sub.size(); ++k)
    if (sub[k]) EXPECT_TRUE(g.cells[k]) << "cell " << k;
  EXPECT_EQ(count(sub), 120u);
}

TEST(BuildOccupancy, EmptyBandIsAllFreeWithWarning) {
  const auto s = single_box_scene(0.3);
  const auto g = build_occupancy(s, 0.1, {2.0, 3.0});
  EXPECT_EQ(g.occupied_count(), 0u);
  ASSERT_EQ(g.warnings.size(), 1u);
  EXPECT_EQ(g.warnings[0].rfind("EmptyBand", 0), 0u);
}

TEST(BuildOccupancy, TouchingBandDoesNotCount) {
  const auto s = single_box_scene(0);
  EXPECT_EQ(build_occupancy(s, 0.1, {1.0, 2.0}).occupied_count(), 0u);
  EXPECT_EQ(build_occupancy(s, 0.1, {0.99, 2.0}).occupied_count(), 100u);
}

TEST(BuildOccupancy, RejectsBadParameters) {
  const auto s = single_box_scene(0);
  EXPECT_THROW(build_occupancy(s, 0.0, {0, 1}), std::invalid_argument);
  EXPECT_THROW(build_occupancy(s, 0.1, {1, 1}), std::invalid_argument);
  EXPECT_THROW(build_occupancy(s, 0.1, {0, 1}, 0.2), std::invalid_argument);
  EXPECT_THROW(build_occupancy(s, 1e-6, {0, 1}), GridTooLarge);
}

TEST(BuildOccupancy, CoversAllBoxesWithPadding) {
  const auto s = spatialqa::testing::random_scene(4);
  const auto g = build_occupancy(s, 0.05, {0, 2});
  for (const auto& o : s.objects)
    for (const auto& c : oracle::footprint_corners(o.box)) {
      EXPECT_GE(c.x() - g.origin.x(), 0.5 - 1e-9);
      EXPECT_GE(c.y() - g.origin.y(), 0.5 - 1e-9);
      EXPECT_GE(g.origin.x() + g.nx * g.resolution - c.x(), 0.5 - 1e-9);
      EXPECT_GE(g.origin.y() + g.ny * g.resolution - c.y(), 0.5 - 1e-9);
    }
}

TEST(BuildOccupancy, SummedAreaMatchesBruteForce) {
  const auto s = spatialqa::testing::random_scene(8);
  const auto g = build_occupancy(s, 0.1, {0.7, 1.2});
  std::mt19937_64 rng(1);
  for (int q = 0; q < 200; ++q) {
    int i0 = static_cast<int>(rng() % g.nx), i1 = static_cast<int>(rng() % g.nx);
    int j0 = static_cast<int>(rng() % g.ny), j1 = static_cast<int>(rng() % g.ny);
    if (i0 > i1) std::swap(i0, i1);
    if (j0 > j1) std::swap(j0, j1);
    long brute = 0;
    for (int j = j0; j <= j1; ++j)
      for (int i = i0; i <= i1; ++i) brute += g.occupied(i, j);
    EXPECT_EQ(g.occupied_in(i0, j0, i1, j1), brute);
  }
}

TEST(BuildOccupancy, PgmLayout) {
  const auto s = single_box_scene(0);
  const auto g = build_occupancy(s, 0.1, {0.0, 1.0});
  std::ostringstream os;
  write_pgm(g, os);
  const std::string data = os.str();
  const std::string header = "P5\n20 20\n255\n";
  ASSERT_EQ(data.size(), header.size() + 400);
  EXPECT_EQ(data.substr(0, header.size()), header);
  EXPECT_EQ(static_cast<unsigned char>(data[header.size()]), 255);
  EXPECT_EQ(static_cast<unsigned char>(data[header.size() + 10 * 20 + 10]), 0);
}

TEST(OccupancyProperties, RandomScenesMatchExactAreaOracle) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto s = spatialqa::testing::random_scene(seed, {.objects = 10, .tables = 2, .views = 1, .room = 2.0});
    const auto g = build_occupancy(s, 0.1, {0.75, 1.15});
    EXPECT_EQ(g.cells, clipping_oracle(s, g)) << "seed " << seed;
  }
}

TEST(OccupancyProperties, AddingABoxNeverFreesACell) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1, 1), h(0.05, 0.4), a(-3, 3);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto s = spatialqa::testing::random_scene(seed, {.objects = 6, .tables = 1, .views = 1, .room = 2.0});
    const auto before = build_occupancy(s, 0.05, {0.0, 1.0});
    // Keep the new box inside the old bounds so both grids share a lattice.
    s.objects.push_back(make_object("extra", "extra", {u(rng), u(rng), 0.5}, {h(rng), h(rng), 0.3}, a(rng)));
    const auto after = build_occupancy(s, 0.05, {0.0, 1.0});
    ASSERT_EQ(before.origin, after.origin);
    ASSERT_EQ(before.nx, after.nx);
    for (std::size_t k = 0; k < before.cells.size(); ++k)
      if (before.cells[k]) EXPECT_TRUE(after.cells[k]);
  }
}

TEST(SupportSurfaces, FixtureS1) {
  const auto s = fixture_s1();
  const auto sup = support_surfaces(s, default_surface_allowlist());
  ASSERT_EQ(sup.size(), 1u);
  EXPECT_EQ(sup[0].object.id, "table_1");
  EXPECT_NEAR(sup[0].z_top, 0.8, 1e-12);
  EXPECT_TRUE(support_surfaces(s, {}).empty());
  EXPECT_TRUE(support_surfaces(s, {"chair"}).empty());
}

TEST(SupportSurfaces, FindSupportOfRestingObject) {
  const auto s = fixture_s1();
  const auto sup = support_surfaces(s, default_surface_allowlist());
  const auto found = find_support(*s.find_object("mug_1"), sup);
  ASSERT_TRUE(found);
  EXPECT_EQ(found->object.id, "table_1");
  EXPECT_FALSE(find_support(*s.find_object("table_1"), sup));
  // Hovering well above the surface is not resting.
  auto lifted = *s.find_object("mug_1");
  lifted.box.center.z() += 0.2;
  EXPECT_FALSE(find_support(lifted, sup));
}

TEST(DirectionalRegion, TableFrontObjectFrame) {
  const auto s = fixture_s1();
  const auto r = directional_region(*s.find_object("table_1"), RelationKind::front,
                                    FrameKind::object, s.views[0]);
  const auto poly = r.polygon();
  const std::array<Vec2, 4> want{Vec2(0.5, -0.5), Vec2(1.5, -0.5), Vec2(1.5, 0.5), Vec2(0.5, 0.5)};
  for (int k = 0; k < 4; ++k) EXPECT_LT((poly[k] - want[k]).norm(), 1e-12) << k;
  EXPECT_GT(polygon_area(poly), 0.0);
}

TEST(DirectionalRegion, VerticalRelationsUnsupported) {
  const auto s = fixture_s1();
  for (auto rel : {RelationKind::above, RelationKind::below})
    EXPECT_THROW(directional_region(s.objects[0], rel, FrameKind::ego, s.views[0]), UnsupportedRelation);
}

TEST(DirectionalRegion, EgoAxesFollowCamera) {
  // S1 camera looks along +y with +x to the right, so ego left is -x and ego
  // front (nearer the camera) is -y.
  const auto s = fixture_s1();
  const auto& table = *s.find_object("table_1");
  const auto left = directional_region(table, RelationKind::left, FrameKind::ego, s.views[0]);
  EXPECT_LT((left.axis - Vec2(-1, 0)).norm(), 1e-12);
  const auto front = directional_region(table, RelationKind::front, FrameKind::world, s.views[0]);
  EXPECT_LT((front.axis - Vec2(0, -1)).norm(), 1e-12);
  EXPECT_NEAR(front.near, 0.5, 1e-12);
}

TEST(DirectionalRegion, RotatesWithAnchorHeading) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> a(-kPi, kPi), u(-2, 2), h(0.1, 0.8);
  const auto v = look_at("v", {0, -4, 2}, {0, 0, 0});
  for (int trial = 0; trial < 100; ++trial) {
    const double y0 = a(rng);
    const Vec3 c(u(rng), u(rng), 0.5);
    const Vec3 half(h(rng), h(rng), 0.3);
    const auto anchor = make_object("a", "a", c, half, y0);
    const auto turned = make_object("a", "a", c, half, y0 + kPi / 2);
    const Eigen::Rotation2Dd rot(kPi / 2);
    for (auto rel : kHorizontalRelations) {
      const auto p0 = directional_region(anchor, rel, FrameKind::object, v).polygon();
      const auto p1 = directional_region(turned, rel, FrameKind::object, v).polygon();
      for (int k = 0; k < 4; ++k) {
        const Vec2 expected = c.head<2>() + rot * (p0[k] - c.head<2>());
        EXPECT_LT((p1[k] - expected).norm(), 1e-9);
      }
    }
  }
}

TEST(SampleContext, FixtureS1MugLeftEgo) {
  const auto s = fixture_s1();
  const auto& v = s.views[0];
  const auto& mug = *s.find_object("mug_1");
  const auto grid = build_support_grid(s, table_support(s), 0.05, 1.5);
  const auto out = sample_context(s, v, mug, RelationKind::left, FrameKind::ego, grid, 5, 42);
  ASSERT_TRUE(std::holds_alternative<ContextSample>(out));
  const auto& cs = std::get<ContextSample>(out);
  ASSERT_EQ(cs.points_3d.size(), 5u);
  ASSERT_EQ(cs.points_2d.size(), 5u);
  const auto region = directional_region(mug, RelationKind::left, FrameKind::ego, v);
  const auto fresh = build_support_grid(s, table_support(s), 0.05, 1.5);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_LT(cs.points_3d[i].x(), mug.box.center.x());
    EXPECT_NEAR(cs.points_3d[i].z(), 0.82, 1e-12);
    expect_sound_point(s, v, region, fresh, cs.points_3d[i], cs.points_2d[i]);
  }
}

TEST(SampleContext, Deterministic) {
  const auto s = fixture_s1();
  const auto grid = build_support_grid(s, table_support(s), 0.05);
  const auto& mug = *s.find_object("mug_1");
  const auto a = std::get<ContextSample>(
      sample_context(s, s.views[0], mug, RelationKind::front, FrameKind::object, grid, 5, 7));
  const auto b = std::get<ContextSample>(
      sample_context(s, s.views[0], mug, RelationKind::front, FrameKind::object, grid, 5, 7));
  EXPECT_EQ(a.points_3d, b.points_3d);
  EXPECT_EQ(a.points_2d, b.points_2d);
  const auto c = std::get<ContextSample>(
      sample_context(s, s.views[0], mug, RelationKind::front, FrameKind::object, grid, 5, 8));
  EXPECT_NE(a.points_3d, c.points_3d);
}

TEST(SampleContext, BoxedInAnchorHasNoFreeSpace) {
  auto s = fixture_s1();
  const Vec3 mc = s.find_object("mug_1")->box.center;
  // Four blocks flush against the mug's faces, each deeper than the region.
  s.objects.push_back(make_object("w_l", "block_l", mc + Vec3(-0.64, 0, 0), {0.6, 0.64, 0.05}));
  s.objects.push_back(make_object("w_r", "block_r", mc + Vec3(0.64, 0, 0), {0.6, 0.64, 0.05}));
  s.objects.push_back(make_object("w_f", "block_f", mc + Vec3(0, -0.64, 0), {0.04, 0.6, 0.05}));
  s.objects.push_back(make_object("w_b", "block_b", mc + Vec3(0, 0.64, 0), {0.04, 0.6, 0.05}));
  const auto grid = build_support_grid(s, table_support(s), 0.05);
  for (auto rel : kHorizontalRelations) {
    const auto out = sample_context(s, s.views[0], *s.find_object("mug_1"), rel, FrameKind::ego,
                                    grid, 5, 1);
    ASSERT_TRUE(std::holds_alternative<NoFreeSpace>(out)) << to_string(rel);
    EXPECT_EQ(std::get<NoFreeSpace>(out).reason, "region fully occupied");
  }
}

TEST(SampleContext, OccludedRegionIsRejected) {
  auto s = fixture_s1();
  // A tall screen between the camera and everything in front of the mug.
  s.objects.push_back(make_object("screen_1", "screen", {0.2, -0.3, 1.3}, {1.5, 0.02, 1.3}));
  const auto grid = build_support_grid(s, table_support(s), 0.05);
  const auto out = sample_context(s, s.views[0], *s.find_object("mug_1"), RelationKind::behind,
                                  FrameKind::ego, grid, 5, 1);
  ASSERT_TRUE(std::holds_alternative<NoFreeSpace>(out));
  EXPECT_EQ(std::get<NoFreeSpace>(out).reason, "region occluded");
}

TEST(SampleContext, RequiresPositiveK) {
  const auto s = fixture_s1();
  const auto grid = build_support_grid(s, table_support(s), 0.05);
  EXPECT_THROW(sample_context(s, s.views[0], s.objects[1], RelationKind::left, FrameKind::ego, grid, 0, 1),
               std::invalid_argument);
}

TEST(SamplerProperties, NoFalseAcceptsOnRandomScenes) {
  int checked = 0;
  for (std::uint64_t seed = 100; seed < 110; ++seed) {
    const auto s = spatialqa::testing::random_scene(seed, {.objects = 10, .tables = 2, .views = 2, .room = 2.5});
    const auto supports = support_surfaces(s, default_surface_allowlist());
    for (const auto& v : s.views)
      for (const auto& anchor : s.objects) {
        const auto sup = find_support(anchor, supports);
        if (!sup) continue;
        const auto grid = build_support_grid(s, *sup, 0.05, 1.5);
        const auto fresh = build_support_grid(s, *sup, 0.05, 1.5);
        for (auto rel : kHorizontalRelations) {
          const auto out = sample_context(s, v, anchor, rel, FrameKind::ego, grid, 3, seed);
          if (!std::holds_alternative<ContextSample>(out)) continue;
          const auto& cs = std::get<ContextSample>(out);
          const auto region = directional_region(anchor, rel, FrameKind::ego, v);
          for (std::size_t i = 0; i < cs.points_3d.size(); ++i, ++checked)
            expect_sound_point(s, v, region, fresh, cs.points_3d[i], cs.points_2d[i]);
        }
      }
  }
  EXPECT_GT(checked, 50);
}
