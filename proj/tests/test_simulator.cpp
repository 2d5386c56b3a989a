#include <gtest/gtest.h>

#include <numbers>

#include "mvp/mvp.hpp"
#include "oracles.hpp"
#include "scenes.hpp"

using namespace mvp;
using namespace mvp::sim;

namespace {

SceneSpec camera_only(const CameraIntrinsics& k) {
  SceneSpec s = scenes::base_spec();
  s.camera.intrinsics = k;
  return s;
}

std::size_t pixels_of_object(const InstanceMaskSet& m, std::uint32_t id) {
  const auto* meta = m.find(id);
  return meta ? meta->pixel_count : 0;
}

}  // namespace

TEST(Raycast, EmptySceneGivesEmptyCloud) {
  const auto scan = raycast_lidar(scenes::base_spec());
  EXPECT_TRUE(scan.cloud.points.empty());
  EXPECT_TRUE(scan.object_ids.empty());
}

TEST(Raycast, SphereHitAlongX) {
  SceneSpec s = scenes::base_spec();
  s.objects.push_back(scenes::sphere(Vec3(10, 0, 0), 1.0));
  const auto hit = cast(s.objects, {Vec3::Zero(), Vec3::UnitX()});
  ASSERT_TRUE(hit);
  EXPECT_DOUBLE_EQ(hit->t, 9.0);
  EXPECT_EQ(hit->object_id, 1u);

  // Beam at elevation 0, azimuth step 0 is the +x ray.
  s.lidar.beams = 1;
  s.lidar.fov_low_deg = 0;
  s.lidar.fov_high_deg = 0;
  const auto scan = raycast_lidar(s);
  ASSERT_FALSE(scan.cloud.points.empty());
  const auto& p = scan.cloud.points[0];
  EXPECT_DOUBLE_EQ(p.x, 9.0);
  EXPECT_EQ(p.y, 0.0);
  EXPECT_EQ(p.r, 0.5);
  EXPECT_EQ(p.t, 0.0);
}

TEST(Raycast, ReturnsLieOnSurfaces) {
  const SceneSpec s = scenes::street_scene(11);
  const auto scan = raycast_lidar(s);
  ASSERT_GT(scan.cloud.points.size(), 1000u);
  double worst = 0;
  for (std::size_t i = 0; i < scan.cloud.points.size(); ++i) {
    const Vec3 world = transform_point(s.lidar.car_from_lidar, scan.cloud.points[i].position());
    worst = std::max(worst, oracle::surface_residual(s.objects[scan.object_ids[i] - 1], world));
  }
  EXPECT_LE(worst, 1e-9);
}

TEST(Raycast, MaxRangeDropsFarHits) {
  SceneSpec s = scenes::base_spec();
  s.objects.push_back(scenes::plane(50, 40, 40));
  s.lidar.max_range = 40;
  EXPECT_TRUE(raycast_lidar(s).cloud.points.empty());
}

TEST(Raycast, ThreadsDoNotChangeOutput) {
  SceneSpec s = scenes::street_scene(12);
  s.lidar.range_noise = 0.02;
  const auto a = raycast_lidar(s, 1);
  const auto b = raycast_lidar(s, 6);
  EXPECT_EQ(encode_cloud(a.cloud), encode_cloud(b.cloud));
  EXPECT_EQ(a.object_ids, b.object_ids);
}

TEST(Render, ObjectBehindCameraHasNoPixels) {
  SceneSpec s = scenes::base_spec();
  s.objects.push_back(scenes::box(Vec3(-10, 0, 0), Vec3(2, 2, 2)));
  const auto m = render_masks(s);
  EXPECT_TRUE(m.instances().empty());
}

TEST(Render, UnitSquareAtTenMetres) {
  const SceneSpec base = camera_only({1000, 1000, 800, 450, 1600, 900});
  SceneSpec s = base;
  s.objects.push_back(scenes::plane(10, 1, 1));
  const auto m = render_masks(s);
  ASSERT_EQ(m.instances().size(), 1u);
  const auto px = m.pixels_of(1);
  int x0 = 1 << 30, x1 = -1, y0 = 1 << 30, y1 = -1;
  for (const auto& p : px) {
    x0 = std::min(x0, p.x), x1 = std::max(x1, p.x);
    y0 = std::min(y0, p.y), y1 = std::max(y1, p.y);
  }
  EXPECT_NEAR(x1 - x0 + 1, 100, 1);
  EXPECT_NEAR(y1 - y0 + 1, 100, 1);
  EXPECT_EQ(px.size(), static_cast<std::size_t>((x1 - x0 + 1) * (y1 - y0 + 1)));
  EXPECT_EQ(m.instances()[0].class_id, 0);
  EXPECT_DOUBLE_EQ(m.instances()[0].score, 0.9);
}

TEST(Render, AreaFallsWithSquareOfDepth) {
  const SceneSpec base = camera_only({1000, 1000, 800, 450, 1600, 900});
  SceneSpec near = base, far = base;
  near.objects.push_back(scenes::plane(10, 2, 2));
  far.objects.push_back(scenes::plane(20, 2, 2));
  const double a = static_cast<double>(pixels_of_object(render_masks(near), 1));
  const double b = static_cast<double>(pixels_of_object(render_masks(far), 1));
  ASSERT_GT(b, 0);
  EXPECT_LT(b, a);
  EXPECT_NEAR(a / b, 4.0, 0.05 * 4.0);
}

TEST(Render, UndetectedObjectsOccludeButStayBackground) {
  SceneSpec s = camera_only({1000, 1000, 800, 450, 1600, 900});
  auto wall = scenes::plane(10, 4, 4);
  wall.detect = false;
  s.objects.push_back(wall);
  s.objects.push_back(scenes::plane(20, 2, 2));
  EXPECT_TRUE(render_masks(s).instances().empty());
}

TEST(Render, MaskAgreesWithUnoccludedLidarReturns) {
  const SceneSpec s = scenes::street_scene(13);
  const auto f = simulate(s);
  const RigidTransform cam_from_lidar = f.calib.camera_from_lidar();
  const RigidTransform cam_pose = world_from_camera(s);
  std::size_t checked = 0, mislabels = 0;
  for (std::size_t i = 0; i < f.scan.cloud.points.size(); ++i) {
    const std::uint32_t k = f.scan.object_ids[i];
    if (!s.objects[k - 1].detect) continue;
    const auto pd = project(transform_point(cam_from_lidar, f.scan.cloud.points[i].position()), f.calib.intrinsics);
    if (!pd) continue;
    // Occlusion test: the camera ray to the return must reach it first.
    const Vec3 world = transform_point(s.lidar.car_from_lidar, f.scan.cloud.points[i].position());
    const Vec3 to = world - cam_pose.translation();
    const auto hit = cast(s.objects, {cam_pose.translation(), to.normalized()});
    if (!hit || std::abs(hit->t - to.norm()) > 1e-6) continue;
    // Compare only where the 3×3 neighbourhood has a single label, so the
    // pixel-centre ray and the return see the same surface.
    const Pixel px = pixel_of(pd->p);
    if (px.x < 1 || px.y < 1 || px.x + 1 >= f.masks.width() || px.y + 1 >= f.masks.height()) continue;
    const auto id = f.masks.at(px.x, px.y);
    bool uniform = true;
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) uniform = uniform && f.masks.at(px.x + dx, px.y + dy) == id;
    if (!uniform) continue;
    ++checked;
    mislabels += id != k;
  }
  EXPECT_GT(checked, 500u);
  EXPECT_EQ(mislabels, 0u);
}

TEST(Ego, ZeroIntervalIsIdentity) {
  SceneSpec s;
  s.ego = {10, 2, 0, 0.3};
  s.t_lidar = s.t_camera = 4.2;
  EXPECT_EQ(ego_transform(s).matrix(), Eigen::Matrix4d::Identity());
}

TEST(Ego, StraightMotionTranslates) {
  SceneSpec s;
  s.ego = {10, 0, 0, 0};
  s.t_camera = 0.05;
  const auto t = ego_transform(s);
  EXPECT_NEAR((t.translation() - Vec3(0.5, 0, 0)).norm(), 0, 1e-15);
  EXPECT_EQ(t.rotation(), Eigen::Matrix3d::Identity());
}

TEST(Ego, ScrewMotionMatchesNumericIntegration) {
  SceneSpec s;
  s.ego = {10, 1, 0.2, 0.2};
  s.t_camera = 0.05;
  const auto t = ego_transform(s);
  const Eigen::Matrix3d r = t.rotation();
  EXPECT_NEAR(std::atan2(r(1, 0), r(0, 0)), 0.01, 1e-12);
  EXPECT_LE((r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff(), 1e-9);

  // Midpoint rule over body-frame velocity.
  const int steps = 20000;
  const double h = 0.05 / steps;
  Vec3 pos = Vec3::Zero();
  for (int i = 0; i < steps; ++i) {
    const double yaw = 0.2 * (i + 0.5) * h;
    pos += h * Vec3(10 * std::cos(yaw) - 1 * std::sin(yaw), 10 * std::sin(yaw) + 1 * std::cos(yaw), 0.2);
  }
  EXPECT_LE((t.translation() - pos).norm(), 1e-9);
}

TEST(Ego, RejectsLongIntervals) {
  SceneSpec s;
  s.t_camera = 1.5;
  EXPECT_THROW(ego_transform(s), InputError);
}

TEST(Degrade, IdentitySettingsLeaveMasksUnchanged) {
  const auto f = simulate(scenes::street_scene(14));
  for (const Degradation d : {Degradation{Downscale{1.0}}, Degradation{Erode{0}}, Degradation{ScoreNoise{0.0}}}) {
    const auto out = degrade_masks(f.masks, d, 3);
    EXPECT_EQ(out.ids(), f.masks.ids());
    EXPECT_EQ(out.instances(), f.masks.instances());
  }
}

TEST(Degrade, ErosionRemovesSinglePixelInstance) {
  std::vector<std::uint16_t> ids(25, 0);
  ids[12] = 5;
  const InstanceMaskSet m(5, 5, ids, {{5, 0, 0.9, 0}});
  const auto out = erode_masks(m, 1);
  EXPECT_TRUE(out.instances().empty());
  EXPECT_EQ(std::count(out.ids().begin(), out.ids().end(), 0), 25);
}

TEST(Degrade, ErosionShrinksSquareByOnePixelPerSide) {
  std::vector<std::uint16_t> ids(100, 0);
  for (int y = 2; y < 8; ++y)
    for (int x = 2; x < 8; ++x) ids[static_cast<std::size_t>(y * 10 + x)] = 1;
  const InstanceMaskSet m(10, 10, ids, {{1, 0, 0.9, 0}});
  EXPECT_EQ(erode_masks(m, 1).instances()[0].pixel_count, 16u);
  EXPECT_EQ(erode_masks(m, 2).instances()[0].pixel_count, 4u);
}

TEST(Degrade, DownscaleKeepsConvexAreaWithinBounds) {
  const auto f = simulate(scenes::street_scene(15));
  const auto out = downscale_masks(f.masks, 2.0);
  for (const auto& meta : f.masks.instances()) {
    const auto* after = out.find(meta.instance_id);
    if (meta.pixel_count < 16) continue;
    ASSERT_NE(after, nullptr);
    const double ratio = static_cast<double>(after->pixel_count) / static_cast<double>(meta.pixel_count);
    EXPECT_GE(ratio, 0.25);
    EXPECT_LE(ratio, 4.0);
  }
  EXPECT_NE(out.ids(), f.masks.ids());
}

TEST(Degrade, ScoreNoiseStaysInUnitIntervalAndIsSeeded) {
  const auto f = simulate(scenes::street_scene(16));
  const auto a = perturb_scores(f.masks, 5.0, 1);
  const auto b = perturb_scores(f.masks, 5.0, 1);
  for (std::size_t i = 0; i < a.instances().size(); ++i) {
    EXPECT_GE(a.instances()[i].score, 0.0);
    EXPECT_LE(a.instances()[i].score, 1.0);
    EXPECT_EQ(a.instances()[i].score, b.instances()[i].score);
  }
  EXPECT_EQ(a.ids(), f.masks.ids());
}

TEST(SceneJson, ParsesAndReportsKeyPaths) {
  const json j = json::parse(R"({
    "seed": 4, "t_camera": 0.05, "ego_velocity": [10, 0, 0, 0],
    "lidar": {"beams": 8, "vertical_fov": [-5, 5], "azimuth_steps": 360, "max_range": 80, "position": [0, 0, 1.8]},
    "camera": {"fx": 1000, "fy": 1000, "cx": 320, "cy": 240, "width": 640, "height": 480},
    "objects": [{"shape": "sphere", "position": [10, 0, 1.8], "dimensions": [1], "class_id": 2, "score": 0.6}]
  })");
  const auto s = scene_from_json(j);
  EXPECT_EQ(s.seed, 4u);
  EXPECT_EQ(s.lidar.beams, 8);
  EXPECT_EQ(s.lidar.car_from_lidar.translation(), Vec3(0, 0, 1.8));
  EXPECT_EQ(s.camera.intrinsics.width, 640);
  EXPECT_EQ(s.camera.car_from_camera.rotation(), forward_camera_rotation());
  ASSERT_EQ(s.objects.size(), 1u);
  EXPECT_EQ(s.objects[0].shape, Shape::sphere);
  EXPECT_EQ(s.objects[0].class_id, 2);
  EXPECT_NEAR((ego_transform(s).translation() - Vec3(0.5, 0, 0)).norm(), 0, 1e-15);

  json bad = j;
  bad["objects"][0]["shape"] = "cone";
  try {
    scene_from_json(bad);
    FAIL();
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("objects[0]"), std::string::npos);
  }
  bad = j;
  bad["objects"][0]["dimensions"] = json::array({-1});
  EXPECT_THROW(scene_from_json(bad), InputError);
  bad = j;
  bad["lidar"]["beams"] = "many";
  EXPECT_THROW(scene_from_json(bad), InputError);
}

TEST(Simulate, GroundTruthSidecarListsEveryPoint) {
  const auto s = scenes::street_scene(17);
  const auto f = simulate(s);
  const auto gt = ground_truth_json(s, f.scan);
  EXPECT_EQ(gt["point_object_ids"].size(), f.scan.cloud.points.size());
  EXPECT_EQ(gt["objects"].size(), s.objects.size());
}
