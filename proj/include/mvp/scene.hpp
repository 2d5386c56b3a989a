#pragma once

// Frame data model and its file formats:
//   MVPC1  lidar sweep        "MVPC1" u64 count {f32 x y z r t}*
//   MVVP1  virtual points     "MVVP1" u64 groups u32 D {u32 id u64 n {f32 x y z t e[D]}*}*
//   16-bit P5 PGM instance map + JSON sidecar for instance metadata
//   calibration JSON
// All binary formats are little-endian. Values are computed in double and
// stored as float32.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "mvp/binary_io.hpp"
#include "mvp/errors.hpp"
#include "mvp/geometry.hpp"

namespace mvp {

using json = nlohmann::json;

inline constexpr double kDefaultScoreThreshold = 0.05;

struct LidarPoint {
  double x = 0, y = 0, z = 0;
  double r = 0;  // reflectance in [0,1]
  double t = 0;  // offset from the sweep timestamp, seconds
  Vec3 position() const { return {x, y, z}; }
  friend bool operator==(const LidarPoint&, const LidarPoint&) = default;
};

struct PointCloud {
  std::vector<LidarPoint> points;
  double timestamp = 0;
};

struct InstanceMeta {
  std::uint32_t instance_id = 0;
  int class_id = 0;
  double score = 0;
  std::size_t pixel_count = 0;
  friend bool operator==(const InstanceMeta&, const InstanceMeta&) = default;
};

/// Flat instance-ID image: 0 is background, j ≥ 1 belongs to instance j.
class InstanceMaskSet {
 public:
  InstanceMaskSet() = default;

  /// Builds the set, recomputing pixel counts from the map. Throws InputError
  /// when an ID in the map has no metadata or an instance owns no pixel.
  InstanceMaskSet(int width, int height, std::vector<std::uint16_t> ids, std::vector<InstanceMeta> instances)
      : width_(width), height_(height), ids_(std::move(ids)), instances_(std::move(instances)) {
    if (width_ <= 0 || height_ <= 0) throw InputError("mask dimensions must be positive");
    if (ids_.size() != static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_))
      throw InputError("instance map size does not match width×height");
    std::sort(instances_.begin(), instances_.end(),
              [](const InstanceMeta& a, const InstanceMeta& b) { return a.instance_id < b.instance_id; });
    slot_.assign(65536, -1);
    for (std::size_t i = 0; i < instances_.size(); ++i) {
      const auto id = instances_[i].instance_id;
      if (id == 0 || id > 65535) throw InputError("instance IDs must be in [1, 65535]");
      if (slot_[id] != -1) throw InputError("duplicate instance ID " + std::to_string(id));
      slot_[id] = static_cast<int>(i);
      instances_[i].pixel_count = 0;
    }
    for (const auto id : ids_) {
      if (id == 0) continue;
      if (slot_[id] < 0) throw InputError("instance ID " + std::to_string(id) + " in map has no metadata");
      ++instances_[static_cast<std::size_t>(slot_[id])].pixel_count;
    }
    for (const auto& m : instances_)
      if (m.pixel_count == 0) throw InputError("instance " + std::to_string(m.instance_id) + " has no pixels");
  }

  int width() const { return width_; }
  int height() const { return height_; }
  const std::vector<std::uint16_t>& ids() const { return ids_; }
  const std::vector<InstanceMeta>& instances() const { return instances_; }

  std::uint16_t at(int x, int y) const {
    return ids_[static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x)];
  }

  /// Index into instances() for an ID, or -1.
  int slot(std::uint32_t id) const { return id < slot_.size() ? slot_[id] : -1; }

  const InstanceMeta* find(std::uint32_t id) const {
    const int s = slot(id);
    return s < 0 ? nullptr : &instances_[static_cast<std::size_t>(s)];
  }

  /// Row-major pixel lists of every instance in one pass, aligned with instances().
  std::vector<std::vector<Pixel>> pixel_lists() const {
    std::vector<std::vector<Pixel>> out(instances_.size());
    for (std::size_t i = 0; i < instances_.size(); ++i) out[i].reserve(instances_[i].pixel_count);
    for (int y = 0; y < height_; ++y)
      for (int x = 0; x < width_; ++x)
        if (const auto id = at(x, y); id != 0) out[static_cast<std::size_t>(slot_[id])].push_back({x, y});
    return out;
  }

  /// Pixels of one instance in row-major order.
  std::vector<Pixel> pixels_of(std::uint32_t id) const {
    std::vector<Pixel> out;
    if (const auto* m = find(id)) out.reserve(m->pixel_count);
    for (int y = 0; y < height_; ++y)
      for (int x = 0; x < width_; ++x)
        if (at(x, y) == id) out.push_back({x, y});
    return out;
  }

 private:
  int width_ = 0, height_ = 0;
  std::vector<std::uint16_t> ids_;
  std::vector<InstanceMeta> instances_;
  std::vector<int> slot_ = std::vector<int>(65536, -1);
};

/// Removes instances scoring below `threshold`; their pixels become background.
/// Surviving IDs are kept as-is.
inline InstanceMaskSet apply_score_threshold(const InstanceMaskSet& masks, double threshold) {
  std::vector<InstanceMeta> kept;
  std::vector<bool> drop(65536, false);
  for (const auto& m : masks.instances()) {
    if (m.score < threshold)
      drop[m.instance_id] = true;
    else
      kept.push_back(m);
  }
  std::vector<std::uint16_t> ids = masks.ids();
  for (auto& id : ids)
    if (drop[id]) id = 0;
  return {masks.width(), masks.height(), std::move(ids), std::move(kept)};
}

/// One-hot class (C entries) followed by the detection score: D = C + 1.
inline std::vector<double> semantic_feature(const InstanceMeta& meta, int num_classes) {
  if (num_classes < 1) throw InputError("num_classes must be >= 1");
  if (meta.class_id < 0 || meta.class_id >= num_classes)
    throw InputError("class_id " + std::to_string(meta.class_id) + " outside [0, " + std::to_string(num_classes) + ")");
  std::vector<double> e(static_cast<std::size_t>(num_classes) + 1, 0.0);
  e[static_cast<std::size_t>(meta.class_id)] = 1.0;
  e.back() = meta.score;
  return e;
}

struct VirtualPoint {
  Vec3 position = Vec3::Zero();  // lidar frame
  double t = 0;                  // offset from the sweep timestamp
  std::vector<double> feature;
};

struct VirtualGroup {
  std::uint32_t instance_id = 0;
  std::vector<VirtualPoint> points;
};

struct VirtualPointSet {
  std::uint32_t feature_dim = 0;  // D
  std::vector<VirtualGroup> groups;

  std::size_t total_points() const {
    std::size_t n = 0;
    for (const auto& g : groups) n += g.points.size();
    return n;
  }
};

// ---------------------------------------------------------------------------
// MVPC1

inline std::vector<char> encode_cloud(const PointCloud& cloud) {
  io::ByteWriter w;
  w.bytes("MVPC1");
  w.u64(cloud.points.size());
  for (const auto& p : cloud.points) {
    for (double v : {p.x, p.y, p.z, p.r, p.t}) {
      if (!std::isfinite(v)) throw FormatError("cannot store non-finite point coordinate");
      w.f32(static_cast<float>(v));
    }
  }
  return w.data();
}

inline PointCloud decode_cloud(std::vector<char> bytes) {
  io::ByteReader r(std::move(bytes));
  r.expect_magic("MVPC1");
  const std::uint64_t count = r.u64("record count");
  if (count > r.remaining() / 20) throw ParseError("record count " + std::to_string(count) + " exceeds payload", r.offset());
  PointCloud cloud;
  cloud.points.resize(count);
  for (auto& p : cloud.points) {
    p.x = r.finite_f32("x");
    p.y = r.finite_f32("y");
    p.z = r.finite_f32("z");
    const std::uint64_t at = r.offset();
    p.r = r.finite_f32("reflectance");
    if (p.r < 0 || p.r > 1) throw ParseError("reflectance outside [0,1]", at);
    p.t = r.finite_f32("t");
  }
  r.expect_end();
  return cloud;
}

inline void save_cloud(const PointCloud& cloud, const std::string& path) { io::write_file(path, encode_cloud(cloud)); }
inline PointCloud load_cloud(const std::string& path) { return decode_cloud(io::read_file(path)); }

// ---------------------------------------------------------------------------
// MVVP1

inline std::vector<char> encode_virtual(const VirtualPointSet& set) {
  io::ByteWriter w;
  w.bytes("MVVP1");
  w.u64(set.groups.size());
  w.u32(set.feature_dim);
  for (const auto& g : set.groups) {
    w.u32(g.instance_id);
    w.u64(g.points.size());
    for (const auto& p : g.points) {
      if (p.feature.size() != set.feature_dim)
        throw FormatError("feature width " + std::to_string(p.feature.size()) + " in group " +
                          std::to_string(g.instance_id) + " differs from D=" + std::to_string(set.feature_dim));
      w.f32(static_cast<float>(p.position.x()));
      w.f32(static_cast<float>(p.position.y()));
      w.f32(static_cast<float>(p.position.z()));
      w.f32(static_cast<float>(p.t));
      for (double e : p.feature) w.f32(static_cast<float>(e));
    }
  }
  return w.data();
}

inline VirtualPointSet decode_virtual(std::vector<char> bytes) {
  io::ByteReader r(std::move(bytes));
  r.expect_magic("MVVP1");
  const std::uint64_t groups = r.u64("group count");
  VirtualPointSet set;
  set.feature_dim = r.u32("feature dimension");
  const std::uint64_t record = 4ULL * (4 + set.feature_dim);
  if (groups > r.remaining() / 12) throw ParseError("group count exceeds payload", r.offset());
  set.groups.resize(groups);
  for (auto& g : set.groups) {
    g.instance_id = r.u32("instance id");
    const std::uint64_t n = r.u64("point count");
    if (n > r.remaining() / record) throw ParseError("point count " + std::to_string(n) + " exceeds payload", r.offset());
    g.points.resize(n);
    for (auto& p : g.points) {
      const double x = r.finite_f32("x");
      const double y = r.finite_f32("y");
      const double z = r.finite_f32("z");
      p.position = Vec3(x, y, z);
      p.t = r.finite_f32("t");
      p.feature.resize(set.feature_dim);
      for (auto& e : p.feature) e = r.finite_f32("feature");
    }
  }
  r.expect_end();
  return set;
}

inline void save_virtual(const VirtualPointSet& set, const std::string& path) {
  io::write_file(path, encode_virtual(set));
}
inline VirtualPointSet load_virtual(const std::string& path) { return decode_virtual(io::read_file(path)); }

// ---------------------------------------------------------------------------
// Masks: 16-bit P5 PGM (big-endian samples, maxval 65535) + JSON metadata.

inline std::vector<char> encode_pgm16(int width, int height, const std::vector<std::uint16_t>& ids) {
  const std::string header = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n65535\n";
  std::vector<char> out(header.begin(), header.end());
  out.reserve(out.size() + 2 * ids.size());
  for (const auto v : ids) {
    out.push_back(static_cast<char>(v >> 8));
    out.push_back(static_cast<char>(v & 0xFF));
  }
  return out;
}

struct Pgm16 {
  int width = 0, height = 0;
  std::vector<std::uint16_t> ids;
};

inline Pgm16 decode_pgm16(const std::vector<char>& bytes) {
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto number = [&](const char* what) {
    skip_space();
    const std::size_t start = pos;
    long long v = 0;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos])) && pos - start < 9)
      v = v * 10 + (bytes[pos++] - '0');
    if (pos == start) throw ParseError(std::string("expected ") + what + " in PGM header", start);
    return v;
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') throw ParseError("bad magic, expected P5 PGM", 0);
  pos = 2;
  Pgm16 pgm;
  pgm.width = static_cast<int>(number("width"));
  pgm.height = static_cast<int>(number("height"));
  const std::size_t maxval_at = pos;
  const long long maxval = number("maxval");
  if (maxval != 65535) throw ParseError("instance map must be 16-bit (maxval 65535)", maxval_at);
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos])))
    throw ParseError("missing whitespace after PGM header", pos);
  ++pos;
  if (pgm.width <= 0 || pgm.height <= 0) throw ParseError("PGM dimensions must be positive", 2);
  const std::size_t n = static_cast<std::size_t>(pgm.width) * static_cast<std::size_t>(pgm.height);
  if (bytes.size() - pos < 2 * n) throw ParseError("truncated PGM raster", bytes.size());
  if (bytes.size() - pos > 2 * n) throw ParseError("trailing bytes after PGM raster", pos + 2 * n);
  pgm.ids.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto hi = static_cast<unsigned char>(bytes[pos + 2 * i]);
    const auto lo = static_cast<unsigned char>(bytes[pos + 2 * i + 1]);
    pgm.ids[i] = static_cast<std::uint16_t>((hi << 8) | lo);
  }
  return pgm;
}

inline json mask_meta_json(const InstanceMaskSet& masks) {
  json j;
  j["width"] = masks.width();
  j["height"] = masks.height();
  j["instances"] = json::array();
  for (const auto& m : masks.instances())
    j["instances"].push_back(
        {{"instance_id", m.instance_id}, {"class_id", m.class_id}, {"score", m.score}, {"pixel_count", m.pixel_count}});
  return j;
}

inline json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(what + ": " + e.what(), e.byte);
  }
}

inline json load_json(const std::string& path) {
  const auto bytes = io::read_file(path);
  return parse_json(std::string(bytes.begin(), bytes.end()), path);
}

/// Reads a map + metadata pair and drops instances below `score_threshold`.
inline InstanceMaskSet load_masks(const std::string& map_path, const std::string& meta_path,
                                  double score_threshold = kDefaultScoreThreshold) {
  Pgm16 pgm = decode_pgm16(io::read_file(map_path));
  const json meta = load_json(meta_path);
  std::vector<InstanceMeta> instances;
  std::map<std::uint32_t, std::size_t> declared_counts;
  try {
    if (meta.contains("width") && meta.at("width").get<int>() != pgm.width)
      throw InputError("mask metadata width disagrees with instance map");
    if (meta.contains("height") && meta.at("height").get<int>() != pgm.height)
      throw InputError("mask metadata height disagrees with instance map");
    for (const auto& item : meta.at("instances")) {
      InstanceMeta m;
      m.instance_id = item.at("instance_id").get<std::uint32_t>();
      m.class_id = item.at("class_id").get<int>();
      m.score = item.at("score").get<double>();
      if (!(m.score >= 0 && m.score <= 1)) throw InputError("score outside [0,1] for instance " + std::to_string(m.instance_id));
      if (item.contains("pixel_count")) declared_counts[m.instance_id] = item.at("pixel_count").get<std::size_t>();
      instances.push_back(m);
    }
  } catch (const json::exception& e) {
    throw InputError(meta_path + ": malformed mask metadata: " + e.what());
  }
  InstanceMaskSet all(pgm.width, pgm.height, std::move(pgm.ids), std::move(instances));
  for (const auto& m : all.instances()) {
    auto it = declared_counts.find(m.instance_id);
    if (it != declared_counts.end() && it->second != m.pixel_count)
      throw InputError("pixel_count for instance " + std::to_string(m.instance_id) + " disagrees with the map");
  }
  return apply_score_threshold(all, score_threshold);
}

inline void save_masks(const InstanceMaskSet& masks, const std::string& map_path, const std::string& meta_path) {
  io::write_file(map_path, encode_pgm16(masks.width(), masks.height(), masks.ids()));
  io::write_text(meta_path, mask_meta_json(masks).dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Calibration JSON

inline json transform_json(const RigidTransform& t) {
  const auto v = t.row_major();
  return json(std::vector<double>(v.begin(), v.end()));
}

inline json calibration_json(const CalibrationChain& c) {
  return {{"T_car_from_lidar", transform_json(c.car_from_lidar)},
          {"T_rgb_from_car", transform_json(c.rgb_from_car)},
          {"T_t1_from_t2", transform_json(c.t1_from_t2)},
          {"intrinsics",
           {{"fx", c.intrinsics.fx},
            {"fy", c.intrinsics.fy},
            {"cx", c.intrinsics.cx},
            {"cy", c.intrinsics.cy},
            {"width", c.intrinsics.width},
            {"height", c.intrinsics.height}}},
          {"t_lidar", c.t_lidar},
          {"t_camera", c.t_camera}};
}

inline CalibrationChain calibration_from_json(const json& j) {
  CalibrationChain c;
  try {
    c.car_from_lidar = RigidTransform::from_row_major(j.at("T_car_from_lidar").get<std::vector<double>>());
    c.rgb_from_car = RigidTransform::from_row_major(j.at("T_rgb_from_car").get<std::vector<double>>());
    c.t1_from_t2 = RigidTransform::from_row_major(j.at("T_t1_from_t2").get<std::vector<double>>());
    const auto& k = j.at("intrinsics");
    c.intrinsics.fx = k.at("fx").get<double>();
    c.intrinsics.fy = k.at("fy").get<double>();
    c.intrinsics.cx = k.at("cx").get<double>();
    c.intrinsics.cy = k.at("cy").get<double>();
    c.intrinsics.width = k.at("width").get<int>();
    c.intrinsics.height = k.at("height").get<int>();
    c.t_lidar = j.at("t_lidar").get<double>();
    c.t_camera = j.at("t_camera").get<double>();
  } catch (const json::exception& e) {
    throw CalibrationError(std::string("malformed calibration: ") + e.what());
  }
  c.intrinsics.validate();
  return c;
}

inline CalibrationChain load_calibration(const std::string& path) { return calibration_from_json(load_json(path)); }

inline void save_calibration(const CalibrationChain& c, const std::string& path) {
  io::write_text(path, calibration_json(c).dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// CSV debug exports (9 significant digits)

inline std::string csv_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

inline std::string cloud_csv(const PointCloud& cloud) {
  std::string out = "x,y,z,r,t\n";
  for (const auto& p : cloud.points) {
    out += csv_number(p.x) + "," + csv_number(p.y) + "," + csv_number(p.z) + "," + csv_number(p.r) + "," +
           csv_number(p.t) + "\n";
  }
  return out;
}

inline std::string virtual_csv(const VirtualPointSet& set) {
  std::string out = "instance_id,x,y,z,t";
  for (std::uint32_t i = 0; i < set.feature_dim; ++i) out += ",e" + std::to_string(i);
  out += "\n";
  for (const auto& g : set.groups) {
    for (const auto& p : g.points) {
      out += std::to_string(g.instance_id) + "," + csv_number(p.position.x()) + "," + csv_number(p.position.y()) + "," +
             csv_number(p.position.z()) + "," + csv_number(p.t);
      for (double e : p.feature) out += "," + csv_number(e);
      out += "\n";
    }
  }
  return out;
}

}  // namespace mvp
