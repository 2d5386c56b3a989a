#pragma once

// Detector-input voxel encodings for mixed real/virtual clouds.
//
// Split encoding keeps two averages per voxel: real points (x,y,z,r,t) and
// virtual points (x,y,z,t,e...), concatenated. Padded encoding pools both
// kinds into one zero-padded (x,y,z,t,r,e...,is_virtual) average and is kept
// as the comparison baseline.
//
// MVVX1 layout (little-endian):
//   "MVVX1" u32 mode(0 split, 1 padded) f64[9] range+size u32 D u32 width_a u32 width_b
//   u64 count {i32 ix iy iz, u32 real_count, u32 virtual_count, f32[width_a+width_b]}*

#include <algorithm>
#include <array>
#include <cmath>
#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mvp/binary_io.hpp"
#include "mvp/errors.hpp"
#include "mvp/geometry.hpp"
#include "mvp/scene.hpp"

namespace mvp {

struct VoxelGridSpec {
  double x_min = -54, x_max = 54;
  double y_min = -54, y_max = 54;
  double z_min = -5, z_max = 3;
  double dx = 0.075, dy = 0.075, dz = 0.2;

  std::array<double, 9> values() const { return {x_min, x_max, y_min, y_max, z_min, z_max, dx, dy, dz}; }

  /// Cells along one axis; throws unless the extent is a positive multiple of the size.
  static std::int64_t cells(double lo, double hi, double size, const char* axis) {
    if (!(size > 0) || !std::isfinite(size)) throw InputError(std::string("voxel size along ") + axis + " must be positive");
    const double extent = hi - lo;
    if (!(extent > 0) || !std::isfinite(extent)) throw InputError(std::string("empty range along ") + axis);
    const double n = std::round(extent / size);
    if (n < 1 || std::abs(n * size - extent) > 1e-9)
      throw InputError(std::string("range along ") + axis + " is not a multiple of the voxel size");
    return static_cast<std::int64_t>(n);
  }

  std::int64_t nx() const { return cells(x_min, x_max, dx, "x"); }
  std::int64_t ny() const { return cells(y_min, y_max, dy, "y"); }
  std::int64_t nz() const { return cells(z_min, z_max, dz, "z"); }

  void validate() const {
    nx();
    ny();
    nz();
  }
};

struct VoxelCoord {
  std::int32_t x = 0, y = 0, z = 0;
  friend auto operator<=>(const VoxelCoord&, const VoxelCoord&) = default;
};

namespace detail {
inline std::optional<std::int32_t> axis_cell(double v, double lo, double hi, double size, std::int64_t n) {
  if (!(v >= lo && v < hi)) return std::nullopt;
  const auto c = static_cast<std::int64_t>(std::floor((v - lo) / size));
  return static_cast<std::int32_t>(std::clamp<std::int64_t>(c, 0, n - 1));
}
}  // namespace detail

/// Half-open voxel [lo, hi) per axis; nullopt outside the range.
inline std::optional<VoxelCoord> assign(const Vec3& p, const VoxelGridSpec& spec) {
  const auto ix = detail::axis_cell(p.x(), spec.x_min, spec.x_max, spec.dx, spec.nx());
  const auto iy = detail::axis_cell(p.y(), spec.y_min, spec.y_max, spec.dy, spec.ny());
  const auto iz = detail::axis_cell(p.z(), spec.z_min, spec.z_max, spec.dz, spec.nz());
  if (!ix || !iy || !iz) return std::nullopt;
  return VoxelCoord{*ix, *iy, *iz};
}

enum class EncodeMode : std::uint32_t { split = 0, padded = 1 };

inline constexpr std::uint32_t kRealFeatureWidth = 5;

struct EncodedVoxel {
  VoxelCoord coord;
  std::uint32_t real_count = 0;
  std::uint32_t virtual_count = 0;
  std::vector<double> features;
};

struct VoxelEncoding {
  EncodeMode mode = EncodeMode::split;
  VoxelGridSpec spec;
  std::uint32_t feature_dim = 0;  // D
  std::uint32_t width_a = 0;      // split: real block (5); padded: pooled width (6+D)
  std::uint32_t width_b = 0;      // split: virtual block (4+D); padded: 0
  std::vector<EncodedVoxel> voxels;
  std::size_t dropped_real = 0;
  std::size_t dropped_virtual = 0;

  std::uint32_t width() const { return width_a + width_b; }
};

namespace detail {

struct Keyed {
  std::int64_t key;
  std::size_t index;
  VoxelCoord coord;
};

inline std::int64_t linear_key(const VoxelCoord& c, std::int64_t ny, std::int64_t nz) {
  return (static_cast<std::int64_t>(c.x) * ny + c.y) * nz + c.z;
}

struct Binned {
  std::vector<Keyed> real, virt;
  std::vector<const VirtualPoint*> virtual_points;  // (instance, sample) order
  std::size_t dropped_real = 0, dropped_virtual = 0;
};

inline Binned bin_points(const PointCloud& real, const VirtualPointSet& virt, const VoxelGridSpec& spec) {
  spec.validate();
  const std::int64_t ny = spec.ny(), nz = spec.nz();
  Binned b;
  for (std::size_t i = 0; i < real.points.size(); ++i) {
    if (auto c = assign(real.points[i].position(), spec))
      b.real.push_back({linear_key(*c, ny, nz), i, *c});
    else
      ++b.dropped_real;
  }
  for (const auto& g : virt.groups) {
    for (const auto& p : g.points) {
      if (p.feature.size() != virt.feature_dim)
        throw FormatError("virtual point feature width " + std::to_string(p.feature.size()) +
                          " differs from D=" + std::to_string(virt.feature_dim));
      const std::size_t i = b.virtual_points.size();
      b.virtual_points.push_back(&p);
      if (auto c = assign(p.position, spec))
        b.virt.push_back({linear_key(*c, ny, nz), i, *c});
      else
        ++b.dropped_virtual;
    }
  }
  auto by_key = [](const Keyed& a, const Keyed& b) { return a.key < b.key || (a.key == b.key && a.index < b.index); };
  std::sort(b.real.begin(), b.real.end(), by_key);
  std::sort(b.virt.begin(), b.virt.end(), by_key);
  return b;
}

/// Walks both sorted lists voxel by voxel in key order, calling
/// visit(coord, real_range, virtual_range).
template <typename Visit>
void for_each_voxel(const Binned& b, Visit&& visit) {
  std::size_t i = 0, j = 0;
  while (i < b.real.size() || j < b.virt.size()) {
    const std::int64_t key = std::min(i < b.real.size() ? b.real[i].key : INT64_MAX,
                                      j < b.virt.size() ? b.virt[j].key : INT64_MAX);
    const VoxelCoord coord = (i < b.real.size() && b.real[i].key == key) ? b.real[i].coord : b.virt[j].coord;
    const std::size_t i0 = i, j0 = j;
    while (i < b.real.size() && b.real[i].key == key) ++i;
    while (j < b.virt.size() && b.virt[j].key == key) ++j;
    visit(coord, i0, i, j0, j);
  }
}

}  // namespace detail

/// Per occupied voxel: mean real feature (x,y,z,r,t) ++ mean virtual feature
/// (x,y,z,t,e...). A missing modality contributes zeros and a zero count.
/// Sums run in ascending input order; output is sorted by voxel coordinate.
inline VoxelEncoding encode_split(const PointCloud& real, const VirtualPointSet& virt, const VoxelGridSpec& spec) {
  const auto b = detail::bin_points(real, virt, spec);
  VoxelEncoding out;
  out.mode = EncodeMode::split;
  out.spec = spec;
  out.feature_dim = virt.feature_dim;
  out.width_a = kRealFeatureWidth;
  out.width_b = 4 + virt.feature_dim;
  out.dropped_real = b.dropped_real;
  out.dropped_virtual = b.dropped_virtual;
  const std::size_t dim = virt.feature_dim;

  detail::for_each_voxel(b, [&](VoxelCoord coord, std::size_t i0, std::size_t i1, std::size_t j0, std::size_t j1) {
    EncodedVoxel v;
    v.coord = coord;
    v.real_count = static_cast<std::uint32_t>(i1 - i0);
    v.virtual_count = static_cast<std::uint32_t>(j1 - j0);
    v.features.assign(out.width(), 0.0);
    double* rf = v.features.data();
    double* vf = v.features.data() + kRealFeatureWidth;
    for (std::size_t k = i0; k < i1; ++k) {
      const auto& p = real.points[b.real[k].index];
      rf[0] += p.x;
      rf[1] += p.y;
      rf[2] += p.z;
      rf[3] += p.r;
      rf[4] += p.t;
    }
    for (std::size_t k = j0; k < j1; ++k) {
      const auto& p = *b.virtual_points[b.virt[k].index];
      vf[0] += p.position.x();
      vf[1] += p.position.y();
      vf[2] += p.position.z();
      vf[3] += p.t;
      for (std::size_t e = 0; e < dim; ++e) vf[4 + e] += p.feature[e];
    }
    if (v.real_count)
      for (std::size_t c = 0; c < kRealFeatureWidth; ++c) rf[c] /= v.real_count;
    if (v.virtual_count)
      for (std::size_t c = 0; c < 4 + dim; ++c) vf[c] /= v.virtual_count;
    out.voxels.push_back(std::move(v));
  });
  return out;
}

/// Joint mean of zero-padded (x,y,z,t,r,e...,is_virtual) features. Real
/// points are summed first (cloud order), then virtual points.
inline VoxelEncoding encode_padded(const PointCloud& real, const VirtualPointSet& virt, const VoxelGridSpec& spec) {
  const auto b = detail::bin_points(real, virt, spec);
  VoxelEncoding out;
  out.mode = EncodeMode::padded;
  out.spec = spec;
  out.feature_dim = virt.feature_dim;
  out.width_a = 6 + virt.feature_dim;
  out.width_b = 0;
  out.dropped_real = b.dropped_real;
  out.dropped_virtual = b.dropped_virtual;
  const std::size_t dim = virt.feature_dim;

  detail::for_each_voxel(b, [&](VoxelCoord coord, std::size_t i0, std::size_t i1, std::size_t j0, std::size_t j1) {
    EncodedVoxel v;
    v.coord = coord;
    v.real_count = static_cast<std::uint32_t>(i1 - i0);
    v.virtual_count = static_cast<std::uint32_t>(j1 - j0);
    v.features.assign(out.width(), 0.0);
    double* f = v.features.data();
    for (std::size_t k = i0; k < i1; ++k) {
      const auto& p = real.points[b.real[k].index];
      f[0] += p.x;
      f[1] += p.y;
      f[2] += p.z;
      f[3] += p.t;
      f[4] += p.r;
    }
    for (std::size_t k = j0; k < j1; ++k) {
      const auto& p = *b.virtual_points[b.virt[k].index];
      f[0] += p.position.x();
      f[1] += p.position.y();
      f[2] += p.position.z();
      f[3] += p.t;
      for (std::size_t e = 0; e < dim; ++e) f[5 + e] += p.feature[e];
      f[5 + dim] += 1.0;
    }
    const double n = static_cast<double>(v.real_count + v.virtual_count);
    for (auto& c : v.features) c /= n;
    out.voxels.push_back(std::move(v));
  });
  return out;
}

inline std::vector<char> encode_voxels(const VoxelEncoding& enc) {
  io::ByteWriter w;
  w.bytes("MVVX1");
  w.u32(static_cast<std::uint32_t>(enc.mode));
  for (double v : enc.spec.values()) w.f64(v);
  w.u32(enc.feature_dim);
  w.u32(enc.width_a);
  w.u32(enc.width_b);
  w.u64(enc.voxels.size());
  for (const auto& v : enc.voxels) {
    if (v.features.size() != enc.width()) throw FormatError("voxel feature width mismatch");
    w.i32(v.coord.x);
    w.i32(v.coord.y);
    w.i32(v.coord.z);
    w.u32(v.real_count);
    w.u32(v.virtual_count);
    for (double f : v.features) w.f32(static_cast<float>(f));
  }
  return w.data();
}

inline VoxelEncoding decode_voxels(std::vector<char> bytes) {
  io::ByteReader r(std::move(bytes));
  r.expect_magic("MVVX1");
  VoxelEncoding enc;
  const auto mode_at = r.offset();
  const std::uint32_t mode = r.u32("mode");
  if (mode > 1) throw ParseError("unknown encoding mode", mode_at);
  enc.mode = static_cast<EncodeMode>(mode);
  enc.spec = {r.f64("x_min"), r.f64("x_max"), r.f64("y_min"), r.f64("y_max"), r.f64("z_min"),
              r.f64("z_max"), r.f64("dx"),    r.f64("dy"),    r.f64("dz")};
  enc.feature_dim = r.u32("D");
  enc.width_a = r.u32("width_a");
  enc.width_b = r.u32("width_b");
  const std::uint64_t n = r.u64("voxel count");
  const std::uint64_t record = 20ULL + 4ULL * enc.width();
  if (n > r.remaining() / record) throw ParseError("voxel count exceeds payload", r.offset());
  enc.voxels.resize(n);
  for (auto& v : enc.voxels) {
    v.coord = {r.i32("ix"), r.i32("iy"), r.i32("iz")};
    v.real_count = r.u32("real_count");
    v.virtual_count = r.u32("virtual_count");
    v.features.resize(enc.width());
    for (auto& f : v.features) f = r.finite_f32("feature");
  }
  r.expect_end();
  return enc;
}

inline void save_voxels(const VoxelEncoding& enc, const std::string& path) { io::write_file(path, encode_voxels(enc)); }
inline VoxelEncoding load_voxels(const std::string& path) { return decode_voxels(io::read_file(path)); }

inline std::string voxels_csv(const VoxelEncoding& enc) {
  std::string out = "ix,iy,iz,real_count,virtual_count";
  for (std::uint32_t i = 0; i < enc.width(); ++i) out += ",f" + std::to_string(i);
  out += "\n";
  for (const auto& v : enc.voxels) {
    out += std::to_string(v.coord.x) + "," + std::to_string(v.coord.y) + "," + std::to_string(v.coord.z) + "," +
           std::to_string(v.real_count) + "," + std::to_string(v.virtual_count);
    for (double f : v.features) out += "," + csv_number(f);
    out += "\n";
  }
  return out;
}

}  // namespace mvp
