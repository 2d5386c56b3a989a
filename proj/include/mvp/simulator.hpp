#pragma once

// Synthetic frames with exact ground truth: analytic boxes, spheres and
// rectangles, a spinning lidar ray-caster, a pinhole instance-mask renderer
// and constant-velocity ego motion between lidar and camera capture.
//
// The world frame is the car frame at lidar capture time. Objects are static.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "mvp/geometry.hpp"
#include "mvp/parallel.hpp"
#include "mvp/rng.hpp"
#include "mvp/scene.hpp"

namespace mvp::sim {

enum class Shape { box, sphere, plane };

inline const char* shape_name(Shape s) {
  switch (s) {
    case Shape::box: return "box";
    case Shape::sphere: return "sphere";
    case Shape::plane: return "plane";
  }
  return "?";
}

/// Local frames: a box is centred with full extents `dimensions`; a sphere
/// has radius dimensions[0]; a plane is the rectangle x = 0, |y| <= w/2,
/// |z| <= h/2 with (w, h) = dimensions[0..1] and normal +x.
struct SceneObject {
  Shape shape = Shape::box;
  RigidTransform pose;  // world ← local
  Vec3 dimensions = Vec3::Ones();
  int class_id = 0;
  double score = 1.0;
  bool detect = true;  // false: occludes and reflects, but has no mask instance
};

struct LidarSpec {
  int beams = 32;
  double fov_low_deg = -30, fov_high_deg = 10;
  int azimuth_steps = 1024;
  double max_range = 100;
  RigidTransform car_from_lidar;
  double range_noise = 0;  // Gaussian σ in metres, off by default
};

struct CameraSpec {
  CameraIntrinsics intrinsics{1266.0, 1266.0, 800.0, 450.0, 1600, 900};
  RigidTransform car_from_camera;
};

struct EgoMotion {
  double vx = 0, vy = 0, vz = 0;
  double yaw_rate = 0;  // rad/s
};

struct SceneSpec {
  std::vector<SceneObject> objects;
  LidarSpec lidar;
  CameraSpec camera;
  EgoMotion ego;
  double t_lidar = 0, t_camera = 0;
  std::uint64_t seed = 0;
  std::uint64_t frame_id = 0;

  void validate() const {
    if (lidar.beams < 1) throw InputError("lidar.beams must be >= 1");
    if (lidar.azimuth_steps < 1) throw InputError("lidar.azimuth_steps must be >= 1");
    if (!(lidar.max_range > 0)) throw InputError("lidar.max_range must be positive");
    if (!(lidar.range_noise >= 0)) throw InputError("lidar.range_noise must be non-negative");
    camera.intrinsics.validate();
    if (std::abs(t_camera - t_lidar) > 1.0) throw InputError("|t_camera - t_lidar| must not exceed 1 s");
    if (objects.size() > 65535) throw InputError("at most 65535 objects");
    for (std::size_t i = 0; i < objects.size(); ++i) {
      const auto& o = objects[i];
      const int used = o.shape == Shape::sphere ? 1 : (o.shape == Shape::plane ? 2 : 3);
      for (int k = 0; k < used; ++k)
        if (!(o.dimensions[k] > 0)) throw InputError("objects[" + std::to_string(i) + "].dimensions must be positive");
      if (!(o.score >= 0 && o.score <= 1)) throw InputError("objects[" + std::to_string(i) + "].score outside [0,1]");
      if (o.class_id < 0) throw InputError("objects[" + std::to_string(i) + "].class_id must be >= 0");
    }
  }
};

/// Camera mount looking along car +x: camera z = car x, camera x = car −y,
/// camera y = car −z.
inline Eigen::Matrix3d forward_camera_rotation() {
  Eigen::Matrix3d r;
  r << 0, 0, 1, -1, 0, 0, 0, -1, 0;
  return r;
}

inline RigidTransform forward_camera_pose(const Vec3& position = Vec3::Zero()) {
  return RigidTransform::from_parts(forward_camera_rotation(), position);
}

// ---------------------------------------------------------------------------
// Ray intersection

struct Ray {
  Vec3 origin;
  Vec3 dir;  // unit length
};

inline constexpr double kRayEpsilon = 1e-9;

/// Smallest ray parameter t > kRayEpsilon hitting the object, if any.
inline std::optional<double> intersect(const SceneObject& obj, const Ray& ray) {
  switch (obj.shape) {
    case Shape::sphere: {
      const Vec3 oc = ray.origin - obj.pose.translation();
      const double r = obj.dimensions[0];
      const double b = oc.dot(ray.dir);
      const double c = oc.squaredNorm() - r * r;
      const double disc = b * b - c;
      if (disc < 0) return std::nullopt;
      const double sq = std::sqrt(disc);
      // Stable root pair.
      const double q = b > 0 ? -(b + sq) : -(b - sq);
      double t0 = q, t1 = (q != 0) ? c / q : -b;
      if (t0 > t1) std::swap(t0, t1);
      if (t0 > kRayEpsilon) return t0;
      if (t1 > kRayEpsilon) return t1;
      return std::nullopt;
    }
    case Shape::box: {
      const Eigen::Matrix3d rt = obj.pose.rotation().transpose();
      const Vec3 o = rt * (ray.origin - obj.pose.translation());
      const Vec3 d = rt * ray.dir;
      const Vec3 half = obj.dimensions / 2;
      double t_near = -std::numeric_limits<double>::infinity();
      double t_far = std::numeric_limits<double>::infinity();
      for (int a = 0; a < 3; ++a) {
        if (d[a] == 0) {
          if (o[a] < -half[a] || o[a] > half[a]) return std::nullopt;
          continue;
        }
        double t0 = (-half[a] - o[a]) / d[a];
        double t1 = (half[a] - o[a]) / d[a];
        if (t0 > t1) std::swap(t0, t1);
        t_near = std::max(t_near, t0);
        t_far = std::min(t_far, t1);
        if (t_near > t_far) return std::nullopt;
      }
      if (t_near > kRayEpsilon) return t_near;
      if (t_far > kRayEpsilon) return t_far;
      return std::nullopt;
    }
    case Shape::plane: {
      const Eigen::Matrix3d rt = obj.pose.rotation().transpose();
      const Vec3 o = rt * (ray.origin - obj.pose.translation());
      const Vec3 d = rt * ray.dir;
      if (d.x() == 0) return std::nullopt;
      const double t = -o.x() / d.x();
      if (!(t > kRayEpsilon)) return std::nullopt;
      const Vec3 p = o + t * d;
      if (std::abs(p.y()) > obj.dimensions[0] / 2 || std::abs(p.z()) > obj.dimensions[1] / 2) return std::nullopt;
      return t;
    }
  }
  return std::nullopt;
}

struct Hit {
  double t = 0;
  std::uint32_t object_id = 0;  // 1-based object index
};

/// Closest hit over all objects; ties keep the lower object index.
inline std::optional<Hit> cast(const std::vector<SceneObject>& objects, const Ray& ray) {
  std::optional<Hit> best;
  for (std::size_t i = 0; i < objects.size(); ++i) {
    if (auto t = intersect(objects[i], ray); t && (!best || *t < best->t))
      best = Hit{*t, static_cast<std::uint32_t>(i + 1)};
  }
  return best;
}

// ---------------------------------------------------------------------------
// Sensors

/// Pose of the car at camera time expressed in the car frame at lidar time
/// (maps t2 coordinates into t1), integrated as a constant-velocity screw
/// motion over Δt = t_camera − t_lidar.
inline RigidTransform ego_transform(const SceneSpec& spec) {
  const double dt = spec.t_camera - spec.t_lidar;
  if (std::abs(dt) > 1.0) throw InputError("|t_camera - t_lidar| must not exceed 1 s");
  if (dt == 0) return {};
  const auto& v = spec.ego;
  const double theta = v.yaw_rate * dt;
  // ∫0^dt R(ω s) ds in closed form; series near ω = 0.
  double s_int, c_int;  // ∫cos(ωs)ds, ∫sin(ωs)ds
  if (std::abs(theta) < 1e-8) {
    s_int = dt;
    c_int = dt * theta / 2;
  } else {
    s_int = std::sin(theta) / v.yaw_rate;
    c_int = (1 - std::cos(theta)) / v.yaw_rate;
  }
  const Vec3 t(v.vx * s_int - v.vy * c_int, v.vx * c_int + v.vy * s_int, v.vz * dt);
  return RigidTransform::from_parts(Eigen::AngleAxisd(theta, Vec3::UnitZ()).toRotationMatrix(), t);
}

inline CalibrationChain calibration(const SceneSpec& spec) {
  CalibrationChain c;
  c.car_from_lidar = spec.lidar.car_from_lidar;
  c.rgb_from_car = invert(spec.camera.car_from_camera);
  c.t1_from_t2 = invert(ego_transform(spec));
  c.intrinsics = spec.camera.intrinsics;
  c.t_lidar = spec.t_lidar;
  c.t_camera = spec.t_camera;
  return c;
}

/// Unit direction of lidar ray (beam, step) in the lidar frame. Beams are
/// spread evenly over the vertical field of view (inclusive); azimuth step 0
/// points along +x.
inline Vec3 lidar_direction(const LidarSpec& l, int beam, int step) {
  const double lo = l.fov_low_deg * std::numbers::pi / 180;
  const double hi = l.fov_high_deg * std::numbers::pi / 180;
  const double elev = l.beams == 1 ? lo : lo + (hi - lo) * beam / (l.beams - 1);
  const double az = 2 * std::numbers::pi * step / l.azimuth_steps;
  return {std::cos(elev) * std::cos(az), std::cos(elev) * std::sin(az), std::sin(elev)};
}

struct LidarScan {
  PointCloud cloud;
  std::vector<std::uint32_t> object_ids;  // ground truth per point, 1-based
};

/// One ray per (beam, azimuth step), beam-major. The closest hit within
/// max_range becomes a point with reflectance 0.5; misses produce nothing.
inline LidarScan raycast_lidar(const SceneSpec& spec, unsigned threads = 1) {
  spec.validate();
  const auto& l = spec.lidar;
  const std::size_t rays = static_cast<std::size_t>(l.beams) * static_cast<std::size_t>(l.azimuth_steps);
  std::vector<std::optional<Hit>> hits(rays);
  std::vector<Vec3> dirs(rays);
  const Eigen::Matrix3d rot = l.car_from_lidar.rotation();
  const Vec3 origin = l.car_from_lidar.translation();

  parallel_for(rays, threads, [&](std::size_t i) {
    const int beam = static_cast<int>(i / static_cast<std::size_t>(l.azimuth_steps));
    const int step = static_cast<int>(i % static_cast<std::size_t>(l.azimuth_steps));
    dirs[i] = lidar_direction(l, beam, step);
    auto hit = cast(spec.objects, {origin, rot * dirs[i]});
    if (hit && l.range_noise > 0) {
      CounterRng rng(spec.seed, spec.frame_id, i);
      std::normal_distribution<double> noise(0.0, l.range_noise);
      hit->t = std::max(hit->t + noise(rng), kRayEpsilon);
    }
    if (hit && hit->t <= l.max_range) hits[i] = hit;
  });

  LidarScan scan;
  scan.cloud.timestamp = spec.t_lidar;
  for (std::size_t i = 0; i < rays; ++i) {
    if (!hits[i]) continue;
    const Vec3 p = hits[i]->t * dirs[i];
    scan.cloud.points.push_back({p.x(), p.y(), p.z(), 0.5, 0.0});
    scan.object_ids.push_back(hits[i]->object_id);
  }
  return scan;
}

/// Camera ray through the centre of pixel (x, y) in the world frame.
inline Ray camera_ray(const RigidTransform& world_from_camera, const CameraIntrinsics& k, int x, int y) {
  const Vec2 c = pixel_center(x, y);
  const Vec3 d_cam((c.x() - k.cx) / k.fx, (c.y() - k.cy) / k.fy, 1.0);
  return {world_from_camera.translation(), (world_from_camera.rotation() * d_cam).normalized()};
}

inline RigidTransform world_from_camera(const SceneSpec& spec) {
  return compose(ego_transform(spec), spec.camera.car_from_camera);
}

/// Labels each pixel with the instance ID of the closest object hit by the
/// ray through its centre. Objects with `detect == false` occlude but stay
/// background; instances without pixels are omitted.
inline InstanceMaskSet render_masks(const SceneSpec& spec, unsigned threads = 1) {
  spec.validate();
  const auto& k = spec.camera.intrinsics;
  const RigidTransform pose = world_from_camera(spec);
  std::vector<std::uint16_t> ids(static_cast<std::size_t>(k.width) * static_cast<std::size_t>(k.height), 0);

  parallel_for(static_cast<std::size_t>(k.height), threads, [&](std::size_t row) {
    const int y = static_cast<int>(row);
    for (int x = 0; x < k.width; ++x) {
      if (auto hit = cast(spec.objects, camera_ray(pose, k, x, y)); hit && spec.objects[hit->object_id - 1].detect)
        ids[row * static_cast<std::size_t>(k.width) + static_cast<std::size_t>(x)] =
            static_cast<std::uint16_t>(hit->object_id);
    }
  });

  std::vector<bool> present(spec.objects.size() + 1, false);
  for (const auto id : ids) present[id] = true;
  std::vector<InstanceMeta> metas;
  for (std::size_t i = 0; i < spec.objects.size(); ++i) {
    if (!present[i + 1]) continue;
    metas.push_back({static_cast<std::uint32_t>(i + 1), spec.objects[i].class_id, spec.objects[i].score, 0});
  }
  return {k.width, k.height, std::move(ids), std::move(metas)};
}

struct Frame {
  LidarScan scan;
  InstanceMaskSet masks;
  CalibrationChain calib;
};

inline Frame simulate(const SceneSpec& spec, unsigned threads = 1) {
  return {raycast_lidar(spec, threads), render_masks(spec, threads), calibration(spec)};
}

// ---------------------------------------------------------------------------
// Mask degradation

struct Downscale {
  double factor = 1;
};
struct Erode {
  int steps = 0;
};
struct ScoreNoise {
  double sigma = 0;
};
using Degradation = std::variant<Downscale, Erode, ScoreNoise>;

namespace detail {

inline InstanceMaskSet rebuild(const InstanceMaskSet& src, std::vector<std::uint16_t> ids) {
  std::vector<bool> present(65536, false);
  for (const auto id : ids) present[id] = true;
  std::vector<InstanceMeta> metas;
  for (const auto& m : src.instances())
    if (present[m.instance_id]) metas.push_back(m);
  return {src.width(), src.height(), std::move(ids), std::move(metas)};
}

}  // namespace detail

/// Nearest-neighbour resample to round(W/f)×round(H/f) and back, giving the
/// staircase masks of a lower-resolution segmenter.
inline InstanceMaskSet downscale_masks(const InstanceMaskSet& m, double factor) {
  if (!(factor >= 1)) throw InputError("downscale factor must be >= 1");
  const int w = m.width(), h = m.height();
  const int lw = std::max(1, static_cast<int>(std::lround(w / factor)));
  const int lh = std::max(1, static_cast<int>(std::lround(h / factor)));
  if (lw == w && lh == h) return m;
  std::vector<std::uint16_t> low(static_cast<std::size_t>(lw) * static_cast<std::size_t>(lh));
  for (int y = 0; y < lh; ++y)
    for (int x = 0; x < lw; ++x) {
      const int sx = std::min(w - 1, static_cast<int>((x + 0.5) * w / lw));
      const int sy = std::min(h - 1, static_cast<int>((y + 0.5) * h / lh));
      low[static_cast<std::size_t>(y) * lw + x] = m.at(sx, sy);
    }
  std::vector<std::uint16_t> ids(static_cast<std::size_t>(w) * static_cast<std::size_t>(h));
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int lx = std::min(lw - 1, static_cast<int>((x + 0.5) * lw / w));
      const int ly = std::min(lh - 1, static_cast<int>((y + 0.5) * lh / h));
      ids[static_cast<std::size_t>(y) * w + x] = low[static_cast<std::size_t>(ly) * lw + lx];
    }
  return detail::rebuild(m, std::move(ids));
}

/// k steps of 3×3 erosion: a pixel keeps its ID only if all eight
/// neighbours share it (outside the image counts as background).
inline InstanceMaskSet erode_masks(const InstanceMaskSet& m, int steps) {
  if (steps < 0) throw InputError("erosion steps must be >= 0");
  if (steps == 0) return m;
  const int w = m.width(), h = m.height();
  std::vector<std::uint16_t> cur = m.ids();
  for (int s = 0; s < steps; ++s) {
    std::vector<std::uint16_t> next(cur.size(), 0);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const std::uint16_t id = cur[static_cast<std::size_t>(y) * w + x];
        if (id == 0) continue;
        bool keep = true;
        for (int dy = -1; dy <= 1 && keep; ++dy)
          for (int dx = -1; dx <= 1 && keep; ++dx) {
            const int nx = x + dx, ny = y + dy;
            keep = nx >= 0 && ny >= 0 && nx < w && ny < h && cur[static_cast<std::size_t>(ny) * w + nx] == id;
          }
        if (keep) next[static_cast<std::size_t>(y) * w + x] = id;
      }
    cur = std::move(next);
  }
  return detail::rebuild(m, std::move(cur));
}

/// score ← clamp(score + N(0, σ), 0, 1), one independent stream per instance.
inline InstanceMaskSet perturb_scores(const InstanceMaskSet& m, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0)) throw InputError("score noise sigma must be >= 0");
  if (sigma == 0) return m;
  std::vector<InstanceMeta> metas = m.instances();
  for (auto& meta : metas) {
    CounterRng rng(seed, 0x5C0E, meta.instance_id);
    std::normal_distribution<double> noise(0.0, sigma);
    meta.score = std::clamp(meta.score + noise(rng), 0.0, 1.0);
  }
  return {m.width(), m.height(), m.ids(), std::move(metas)};
}

inline InstanceMaskSet degrade_masks(const InstanceMaskSet& m, const Degradation& mode, std::uint64_t seed = 0) {
  return std::visit(
      [&](const auto& d) -> InstanceMaskSet {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, Downscale>)
          return downscale_masks(m, d.factor);
        else if constexpr (std::is_same_v<T, Erode>)
          return erode_masks(m, d.steps);
        else
          return perturb_scores(m, d.sigma, seed);
      },
      mode);
}

// ---------------------------------------------------------------------------
// JSON

namespace detail {

inline RigidTransform pose_from_json(const json& j, const std::string& where, const RigidTransform& mount) {
  if (j.contains("pose")) return RigidTransform::from_row_major(j.at("pose").get<std::vector<double>>());
  Vec3 position = Vec3::Zero();
  if (j.contains("position")) {
    const auto p = j.at("position").get<std::vector<double>>();
    if (p.size() != 3) throw InputError(where + ".position must have 3 entries");
    position = Vec3(p[0], p[1], p[2]);
  }
  RigidTransform r;
  if (j.contains("rpy")) {
    const auto a = j.at("rpy").get<std::vector<double>>();
    if (a.size() != 3) throw InputError(where + ".rpy must have 3 entries");
    r = RigidTransform::from_rpy(a[0], a[1], a[2]);
  }
  return compose(RigidTransform::translation(position.x(), position.y(), position.z()), compose(r, mount));
}

}  // namespace detail

/// Parses a scene description. Errors name the offending key path.
inline SceneSpec scene_from_json(const json& j) {
  SceneSpec s;
  std::string where = "scene";
  try {
    s.seed = j.value("seed", std::uint64_t{0});
    s.frame_id = j.value("frame_id", std::uint64_t{0});
    s.t_lidar = j.value("t_lidar", 0.0);
    s.t_camera = j.value("t_camera", 0.0);
    if (j.contains("ego_velocity")) {
      where = "ego_velocity";
      const auto v = j.at("ego_velocity").get<std::vector<double>>();
      if (v.size() != 4) throw InputError("ego_velocity must be [vx, vy, vz, yaw_rate]");
      s.ego = {v[0], v[1], v[2], v[3]};
    }
    if (j.contains("lidar")) {
      where = "lidar";
      const auto& l = j.at("lidar");
      s.lidar.beams = l.value("beams", s.lidar.beams);
      if (l.contains("vertical_fov")) {
        const auto f = l.at("vertical_fov").get<std::vector<double>>();
        if (f.size() != 2) throw InputError("lidar.vertical_fov must be [low, high] degrees");
        s.lidar.fov_low_deg = f[0];
        s.lidar.fov_high_deg = f[1];
      }
      s.lidar.azimuth_steps = l.value("azimuth_steps", s.lidar.azimuth_steps);
      s.lidar.max_range = l.value("max_range", s.lidar.max_range);
      s.lidar.range_noise = l.value("range_noise", 0.0);
      s.lidar.car_from_lidar = detail::pose_from_json(l, "lidar", RigidTransform());
    }
    if (j.contains("camera")) {
      where = "camera";
      const auto& c = j.at("camera");
      auto& k = s.camera.intrinsics;
      k.fx = c.value("fx", k.fx);
      k.fy = c.value("fy", k.fy);
      k.cx = c.value("cx", k.cx);
      k.cy = c.value("cy", k.cy);
      k.width = c.value("width", k.width);
      k.height = c.value("height", k.height);
      s.camera.car_from_camera = detail::pose_from_json(c, "camera", forward_camera_pose());
    } else {
      s.camera.car_from_camera = forward_camera_pose();
    }
    const json objects = j.value("objects", json::array());
    for (std::size_t i = 0; i < objects.size(); ++i) {
      where = "objects[" + std::to_string(i) + "]";
      const auto& o = objects[i];
      SceneObject obj;
      const auto shape = o.at("shape").get<std::string>();
      if (shape == "box")
        obj.shape = Shape::box;
      else if (shape == "sphere")
        obj.shape = Shape::sphere;
      else if (shape == "plane")
        obj.shape = Shape::plane;
      else
        throw InputError(where + ".shape must be box, sphere or plane");
      obj.pose = detail::pose_from_json(o, where, RigidTransform());
      const auto dims = o.at("dimensions").get<std::vector<double>>();
      const std::size_t need = obj.shape == Shape::sphere ? 1 : (obj.shape == Shape::plane ? 2 : 3);
      if (dims.size() != need) throw InputError(where + ".dimensions needs " + std::to_string(need) + " entries");
      obj.dimensions = Vec3(dims[0], need > 1 ? dims[1] : 0, need > 2 ? dims[2] : 0);
      obj.class_id = o.value("class_id", 0);
      obj.score = o.value("score", 1.0);
      obj.detect = o.value("detect", true);
      s.objects.push_back(obj);
    }
  } catch (const json::exception& e) {
    throw InputError(where + ": " + e.what());
  } catch (const CalibrationError& e) {
    throw InputError(where + ": " + e.what());
  }
  s.validate();
  return s;
}

inline json ground_truth_json(const SceneSpec& spec, const LidarScan& scan) {
  json objects = json::array();
  for (std::size_t i = 0; i < spec.objects.size(); ++i) {
    const auto& o = spec.objects[i];
    const auto pose = o.pose.row_major();
    objects.push_back({{"instance_id", i + 1},
                       {"shape", shape_name(o.shape)},
                       {"pose", std::vector<double>(pose.begin(), pose.end())},
                       {"dimensions", {o.dimensions.x(), o.dimensions.y(), o.dimensions.z()}},
                       {"class_id", o.class_id},
                       {"score", o.score},
                       {"detect", o.detect}});
  }
  return {{"point_object_ids", scan.object_ids}, {"objects", objects}};
}

}  // namespace mvp::sim
