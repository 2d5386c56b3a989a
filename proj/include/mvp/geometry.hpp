#pragma once

// Rigid transforms, pinhole projection and the lidar→camera calibration chain.

#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <string>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "mvp/errors.hpp"

namespace mvp {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;

/// Points with camera-frame z at or below this are rejected before division.
inline constexpr double kDepthEpsilon = 1e-6;

/// Orthonormality and determinant tolerance for RigidTransform.
inline constexpr double kRigidTolerance = 1e-9;

/// Homogeneous SE(3) transform mapping column vectors source → target.
/// Construction validates the rotation block and the bottom row.
class RigidTransform {
 public:
  RigidTransform() : m_(Eigen::Matrix4d::Identity()) {}

  explicit RigidTransform(const Eigen::Matrix4d& m) : m_(m) {
    if (auto why = violation(m)) throw CalibrationError("invalid rigid transform: " + *why);
  }

  static RigidTransform from_parts(const Eigen::Matrix3d& r, const Vec3& t) {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.topLeftCorner<3, 3>() = r;
    m.topRightCorner<3, 1>() = t;
    return RigidTransform(m);
  }

  static RigidTransform from_row_major(std::span<const double> v) {
    if (v.size() != 16) throw CalibrationError("rigid transform needs 16 values, got " + std::to_string(v.size()));
    Eigen::Matrix4d m;
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) m(r, c) = v[static_cast<std::size_t>(4 * r + c)];
    return RigidTransform(m);
  }

  static RigidTransform translation(double x, double y, double z) {
    return from_parts(Eigen::Matrix3d::Identity(), Vec3(x, y, z));
  }

  static RigidTransform rotation_z(double radians) {
    return from_parts(Eigen::AngleAxisd(radians, Vec3::UnitZ()).toRotationMatrix(), Vec3::Zero());
  }

  /// Intrinsic roll (x), pitch (y), yaw (z): R = Rz(yaw)·Ry(pitch)·Rx(roll).
  static RigidTransform from_rpy(double roll, double pitch, double yaw, const Vec3& t = Vec3::Zero()) {
    const Eigen::Matrix3d r = (Eigen::AngleAxisd(yaw, Vec3::UnitZ()) * Eigen::AngleAxisd(pitch, Vec3::UnitY()) *
                               Eigen::AngleAxisd(roll, Vec3::UnitX()))
                                  .toRotationMatrix();
    return from_parts(r, t);
  }

  const Eigen::Matrix4d& matrix() const { return m_; }
  Eigen::Matrix3d rotation() const { return m_.topLeftCorner<3, 3>(); }
  Vec3 translation() const { return m_.topRightCorner<3, 1>(); }

  std::array<double, 16> row_major() const {
    std::array<double, 16> out{};
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) out[static_cast<std::size_t>(4 * r + c)] = m_(r, c);
    return out;
  }

  /// Reason the matrix is not a proper rigid transform, if any.
  static std::optional<std::string> violation(const Eigen::Matrix4d& m) {
    if (!m.allFinite()) return "non-finite entry";
    if (m(3, 0) != 0.0 || m(3, 1) != 0.0 || m(3, 2) != 0.0 || m(3, 3) != 1.0) return "bottom row is not (0,0,0,1)";
    const Eigen::Matrix3d r = m.topLeftCorner<3, 3>();
    const double ortho = (r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
    if (ortho > kRigidTolerance) return "rotation block not orthonormal (deviation " + std::to_string(ortho) + ")";
    if (std::abs(r.determinant() - 1.0) > kRigidTolerance) return "rotation block determinant is not +1";
    return std::nullopt;
  }

 private:
  Eigen::Matrix4d m_;
};

/// Maps x to a(b(x)).
inline RigidTransform compose(const RigidTransform& a, const RigidTransform& b) {
  return RigidTransform(a.matrix() * b.matrix());
}

/// Closed-form inverse (Rᵀ, -Rᵀt).
inline RigidTransform invert(const RigidTransform& t) {
  const Eigen::Matrix3d rt = t.rotation().transpose();
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = rt;
  m.topRightCorner<3, 1>() = -rt * t.translation();
  return RigidTransform(m);
}

inline Vec3 transform_point(const RigidTransform& t, const Vec3& p) {
  const Eigen::Matrix4d& m = t.matrix();
  return m.topLeftCorner<3, 3>() * p + m.topRightCorner<3, 1>();
}

struct CameraIntrinsics {
  double fx = 0, fy = 0;
  double cx = 0, cy = 0;
  int width = 0, height = 0;

  void validate() const {
    if (!(fx > 0 && fy > 0)) throw CalibrationError("focal lengths must be positive");
    if (width <= 0 || height <= 0) throw CalibrationError("image size must be positive");
    if (!(cx >= 0 && cx < width && cy >= 0 && cy < height))
      throw CalibrationError("principal point outside the image");
  }
};

/// Continuous pixel position plus camera-frame depth.
struct PixelDepth {
  Vec2 p;
  double d = 0;
};

/// Pinhole projection of a camera-frame point. Rejects points with
/// z <= kDepthEpsilon and pixels outside [0,width)×[0,height).
inline std::optional<PixelDepth> project(const Vec3& q, const CameraIntrinsics& k) {
  if (!(q.z() > kDepthEpsilon)) return std::nullopt;
  const double u = k.fx * q.x() / q.z() + k.cx;
  const double v = k.fy * q.y() / q.z() + k.cy;
  if (!(u >= 0 && u < k.width && v >= 0 && v < k.height)) return std::nullopt;
  return PixelDepth{Vec2(u, v), q.z()};
}

inline Vec3 unproject(const Vec2& p, double d, const CameraIntrinsics& k) {
  if (!(d > 0)) throw InputError("unproject requires positive depth");
  return {d * (p.x() - k.cx) / k.fx, d * (p.y() - k.cy) / k.fy, d};
}

/// Integer pixel containing a continuous coordinate (pixel (i,j) spans [i,i+1)×[j,j+1)).
struct Pixel {
  int x = 0, y = 0;
  friend bool operator==(const Pixel&, const Pixel&) = default;
};

inline Pixel pixel_of(const Vec2& p) {
  return {static_cast<int>(std::floor(p.x())), static_cast<int>(std::floor(p.y()))};
}

inline Vec2 pixel_center(int x, int y) { return {x + 0.5, y + 0.5}; }

/// Binds one lidar sweep to one camera image:
/// camera ← rgb_from_car · t1_from_t2 · car_from_lidar ← lidar.
/// `t1_from_t2` is the middle factor of that product, i.e. it takes car-frame
/// coordinates at lidar capture time into the car frame at camera capture time.
struct CalibrationChain {
  RigidTransform car_from_lidar;
  RigidTransform rgb_from_car;
  RigidTransform t1_from_t2;
  CameraIntrinsics intrinsics;
  double t_lidar = 0;
  double t_camera = 0;

  RigidTransform camera_from_lidar() const { return compose(rgb_from_car, compose(t1_from_t2, car_from_lidar)); }
};

}  // namespace mvp
