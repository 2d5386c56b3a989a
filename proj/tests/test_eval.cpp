#include <gtest/gtest.h>

#include "mvp/mvp.hpp"
#include "oracles.hpp"
#include "scenes.hpp"

using namespace mvp;

namespace {

std::vector<Vec3> random_points(CounterRng& rng, std::size_t n, double scale) {
  std::vector<Vec3> out;
  for (std::size_t i = 0; i < n; ++i)
    out.emplace_back(scale * (rng.uniform() - 0.5), scale * (rng.uniform() - 0.5), scale * (rng.uniform() - 0.5));
  return out;
}

GenerationConfig gen_config() {
  GenerationConfig g;
  g.num_classes = 10;
  return g;
}

/// Three spheres and a box in front of the car with a wall behind them.
sim::SceneSpec curved_scene() {
  auto s = scenes::base_spec();
  s.lidar.beams = 64;
  s.lidar.fov_low_deg = -15;
  s.lidar.fov_high_deg = 10;
  s.lidar.azimuth_steps = 2048;
  s.camera.intrinsics = {640, 640, 320, 180, 640, 360};
  s.objects.push_back(scenes::sphere(Vec3(12, -3, 0), 1.5));
  s.objects.push_back(scenes::sphere(Vec3(18, 3, 0.5), 2.0));
  s.objects.push_back(scenes::sphere(Vec3(25, -1, 0), 2.5));
  s.objects.push_back(scenes::box(Vec3(15, 1, -0.5), Vec3(4, 2, 1.8), 0.6));
  auto wall = scenes::plane(45, 100, 30);
  wall.detect = false;
  s.objects.push_back(wall);
  return s;
}

}  // namespace

TEST(Chamfer, SelfDistanceIsZero) {
  CounterRng rng(1);
  const auto a = random_points(rng, 100, 10);
  const auto r = chamfer(a, a);
  EXPECT_EQ(r.bidirectional, 0.0);
  EXPECT_EQ(r.count_a, 100u);
}

TEST(Chamfer, HandWorkedExample) {
  const std::vector<Vec3> a{Vec3(0, 0, 0)};
  const std::vector<Vec3> b{Vec3(1, 0, 0), Vec3(3, 0, 0)};
  const auto r = chamfer(a, b);
  EXPECT_EQ(r.a_to_b, 1.0);
  EXPECT_EQ(r.b_to_a, 2.0);
  EXPECT_EQ(r.bidirectional, 1.5);
}

TEST(Chamfer, EmptySetIsAnError) {
  const std::vector<Vec3> a{Vec3(0, 0, 0)}, none;
  EXPECT_THROW(chamfer(a, none), InputError);
  EXPECT_THROW(chamfer(none, a), InputError);
}

TEST(Chamfer, BitExactAgainstBruteForce) {
  CounterRng rng(2);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto a = random_points(rng, 1 + rng.below(60), 20);
    const auto b = random_points(rng, 1 + rng.below(60), 20);
    const auto got = chamfer(a, b);
    const auto want = oracle::chamfer(a, b);
    ASSERT_EQ(got.a_to_b, want.a_to_b) << trial;
    ASSERT_EQ(got.b_to_a, want.b_to_a) << trial;
    ASSERT_EQ(got.bidirectional, want.bidirectional) << trial;
  }
}

TEST(Chamfer, KdTreeHandlesDuplicatesAndLargeSets) {
  CounterRng rng(3);
  auto a = random_points(rng, 5000, 50);
  a.insert(a.end(), a.begin(), a.begin() + 100);
  const auto b = random_points(rng, 3000, 50);
  const auto got = chamfer(a, b);
  const auto want = oracle::chamfer(a, b);
  EXPECT_EQ(got.a_to_b, want.a_to_b);
  EXPECT_EQ(got.b_to_a, want.b_to_a);
}

TEST(Chamfer, SymmetricExactly) {
  CounterRng rng(4);
  const auto a = random_points(rng, 300, 10);
  const auto b = random_points(rng, 200, 10);
  EXPECT_EQ(chamfer(a, b).bidirectional, chamfer(b, a).bidirectional);
}

TEST(Chamfer, RigidInvariance) {
  CounterRng rng(5);
  const auto a = random_points(rng, 300, 10);
  const auto b = random_points(rng, 200, 10);
  const auto t = RigidTransform::from_rpy(0.3, -0.7, 2.1, Vec3(40, -12, 3));
  std::vector<Vec3> ta, tb;
  for (const auto& p : a) ta.push_back(transform_point(t, p));
  for (const auto& p : b) tb.push_back(transform_point(t, p));
  EXPECT_NEAR(chamfer(a, b).bidirectional, chamfer(ta, tb).bidirectional, 1e-9);
}

TEST(Masked, RemovalCountUsesFloor) {
  const MaskedExperimentConfig c;
  EXPECT_EQ(c.removal_count(15), 12u);
  EXPECT_EQ(15u - c.removal_count(15), 3u);
  EXPECT_EQ(c.removal_count(10), 8u);
  EXPECT_EQ(c.removal_count(1), 0u);
  MaskedExperimentConfig half;
  half.mask_fraction = 0.5;
  EXPECT_EQ(half.removal_count(7), 3u);
  MaskedExperimentConfig bad;
  bad.mask_fraction = 1.0;
  EXPECT_THROW(bad.validate(), InputError);
}

TEST(Masked, PlanarObjectIsRecoveredExactly) {
  const auto f = sim::simulate(scenes::planar_scene());
  const auto r = masked_experiment(f.scan.cloud, f.scan.object_ids, f.masks, f.calib, gen_config(), {});
  ASSERT_EQ(r.evaluated, 1u);
  EXPECT_LT(r.aggregate.bidirectional, 1e-6);
  const auto& row = r.rows[0];
  EXPECT_EQ(row.removed, MaskedExperimentConfig{}.removal_count(row.object_points));
  EXPECT_EQ(row.removed + row.kept, row.object_points);
}

TEST(Masked, SmallObjectsAreSkippedAndLargeOnesKeepThreePoints) {
  // 15 returns on one object inside a square mask.
  const CameraIntrinsics k{1000, 1000, 50, 50, 100, 100};
  std::vector<std::uint16_t> ids(100 * 100, 0);
  for (int y = 20; y < 80; ++y)
    for (int x = 20; x < 80; ++x) ids[static_cast<std::size_t>(y * 100 + x)] = 1;
  const InstanceMaskSet masks(100, 100, ids, {{1, 0, 0.9, 0}});
  CalibrationChain calib;
  calib.intrinsics = k;
  PointCloud cloud;
  std::vector<std::uint32_t> gt;
  for (int i = 0; i < 15; ++i) {
    const Vec3 p = unproject(Vec2(25 + 3.5 * i, 30 + 2.0 * i), 10.0, k);
    cloud.points.push_back({p.x(), p.y(), p.z(), 0.5, 0});
    gt.push_back(1);
  }
  auto r = masked_experiment(cloud, gt, masks, calib, gen_config(), {});
  ASSERT_EQ(r.rows.size(), 1u);
  EXPECT_TRUE(r.rows[0].eligible);
  EXPECT_EQ(r.rows[0].removed, 12u);
  EXPECT_EQ(r.rows[0].kept, 3u);
  EXPECT_EQ(r.rows[0].chamfer.count_a, 12u);
  EXPECT_LT(r.aggregate.bidirectional, 1e-9);

  cloud.points.pop_back();
  gt.pop_back();
  r = masked_experiment(cloud, gt, masks, calib, gen_config(), {});
  EXPECT_FALSE(r.rows[0].eligible);
  EXPECT_EQ(r.evaluated, 0u);

  gt.pop_back();
  EXPECT_THROW(masked_experiment(cloud, gt, masks, calib, gen_config(), {}), InputError);
}

TEST(Masked, DeterministicUnderSeed) {
  const auto f = sim::simulate(curved_scene());
  MaskedExperimentConfig e;
  e.seed = 9;
  const auto a = masked_experiment(f.scan.cloud, f.scan.object_ids, f.masks, f.calib, gen_config(), e);
  auto g = gen_config();
  g.threads = 4;
  const auto b = masked_experiment(f.scan.cloud, f.scan.object_ids, f.masks, f.calib, g, e);
  EXPECT_GT(a.evaluated, 2u);
  EXPECT_EQ(a.aggregate.bidirectional, b.aggregate.bidirectional);
  EXPECT_EQ(masked_report_json(a, e, g)["objects"], masked_report_json(b, e, g)["objects"]);
}

TEST(Masked, MoreMaskingNeverHelpsOnAverage) {
  const auto f = sim::simulate(curved_scene());
  double low = 0, high = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    MaskedExperimentConfig e;
    e.seed = seed;
    e.mask_fraction = 0.5;
    low += masked_experiment(f.scan.cloud, f.scan.object_ids, f.masks, f.calib, gen_config(), e).aggregate.bidirectional;
    e.mask_fraction = 0.9;
    high += masked_experiment(f.scan.cloud, f.scan.object_ids, f.masks, f.calib, gen_config(), e).aggregate.bidirectional;
  }
  EXPECT_LE(low / 20, high / 20);
}

TEST(Density, SparseFarObjectStillGetsTauPoints) {
  // Object 40 m away with two lidar hits and a 500-pixel mask.
  const CameraIntrinsics k{1000, 1000, 50, 50, 100, 100};
  std::vector<std::uint16_t> ids(100 * 100, 0);
  for (int i = 0; i < 500; ++i) ids[static_cast<std::size_t>(i)] = 1;
  const InstanceMaskSet masks(100, 100, ids, {{1, 3, 0.9, 0}});
  CalibrationChain calib;
  calib.intrinsics = k;
  PointCloud cloud;
  for (const Vec2 px : {Vec2(10.5, 1.5), Vec2(60.5, 3.5)}) {
    const Vec3 p = unproject(px, 40.0, k);
    cloud.points.push_back({p.x(), p.y(), p.z(), 0.5, 0});
  }
  const std::vector<std::uint32_t> gt{1, 1};
  const auto virt = generate(cloud, masks, calib, gen_config()).points;
  const auto r = density_report(cloud, virt, gt, &masks, 50);
  ASSERT_EQ(r.rows.size(), 1u);
  EXPECT_EQ(r.rows[0].real_count, 2u);
  EXPECT_EQ(r.rows[0].virtual_count, 50u);
  EXPECT_EQ(r.rows[0].expected_virtual, 50u);
}

TEST(Density, EmptyFrustumReportsZeroVirtualPoints) {
  const CameraIntrinsics k{1000, 1000, 50, 50, 100, 100};
  std::vector<std::uint16_t> ids(100 * 100, 0);
  ids[0] = 1;
  const InstanceMaskSet masks(100, 100, ids, {{1, 0, 0.9, 0}});
  CalibrationChain calib;
  calib.intrinsics = k;
  PointCloud cloud;
  const auto virt = generate(cloud, masks, calib, gen_config()).points;
  const std::vector<std::uint32_t> gt;
  const auto r = density_report(cloud, virt, gt, &masks);
  ASSERT_EQ(r.rows.size(), 1u);
  EXPECT_EQ(r.rows[0].virtual_count, 0u);
}

TEST(Density, RangeBins) {
  EXPECT_EQ(range_bin(0), 0u);
  EXPECT_EQ(range_bin(14.99), 0u);
  EXPECT_EQ(range_bin(15), 1u);
  EXPECT_EQ(range_bin(30), 2u);
  EXPECT_EQ(range_bin(49.9), 2u);
  EXPECT_EQ(range_bin(50), 3u);
}

TEST(Density, NearAndFarTwinsGetEqualVirtualCounts) {
  const auto s = scenes::density_scene();
  const auto f = sim::simulate(s);
  const auto virt = generate(f.scan.cloud, f.masks, f.calib, gen_config()).points;
  const auto r = density_report(f.scan.cloud, virt, f.scan.object_ids, &f.masks);
  ASSERT_EQ(r.rows.size(), 2u);
  const auto& near = r.rows[0];
  const auto& far = r.rows[1];
  EXPECT_EQ(near.bin, 0u);
  EXPECT_EQ(far.bin, 2u);
  EXPECT_EQ(near.virtual_count, 50u);
  EXPECT_EQ(far.virtual_count, 50u);
  EXPECT_GE(near.real_count, 4 * far.real_count);
  const auto j = density_report_json(r);
  EXPECT_EQ(j["range_bins"].size(), 4u);
}
