#pragma once

// Depth-completion evaluation: chamfer distance, the masked-lidar protocol
// and per-range density statistics.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mvp/geometry.hpp"
#include "mvp/kdtree.hpp"
#include "mvp/parallel.hpp"
#include "mvp/pixel_index.hpp"
#include "mvp/rng.hpp"
#include "mvp/scene.hpp"
#include "mvp/virtual_points.hpp"

namespace mvp {

inline constexpr const char* kChamferDefinition =
    "bidirectional = (mean_a min_b |a-b| + mean_b min_a |a-b|) / 2, Euclidean metres";

struct ChamferResult {
  double a_to_b = 0;
  double b_to_a = 0;
  double bidirectional = 0;
  std::size_t count_a = 0;
  std::size_t count_b = 0;
};

/// Mean nearest-neighbour distance from each point of `from` to `to`.
inline double directed_chamfer(std::span<const Vec3> from, std::span<const Vec3> to) {
  const KdTree3 tree(to);
  double sum = 0;
  for (const auto& q : from) sum += std::sqrt(tree.nearest(q).d2);
  return sum / static_cast<double>(from.size());
}

inline ChamferResult chamfer(std::span<const Vec3> a, std::span<const Vec3> b) {
  if (a.empty() || b.empty()) throw InputError("chamfer distance is undefined for an empty point set");
  ChamferResult r;
  r.a_to_b = directed_chamfer(a, b);
  r.b_to_a = directed_chamfer(b, a);
  r.bidirectional = (r.a_to_b + r.b_to_a) / 2;
  r.count_a = a.size();
  r.count_b = b.size();
  return r;
}

inline json chamfer_json(const ChamferResult& r) {
  return {{"a_to_b", r.a_to_b},
          {"b_to_a", r.b_to_a},
          {"bidirectional", r.bidirectional},
          {"count_a", r.count_a},
          {"count_b", r.count_b}};
}

// ---------------------------------------------------------------------------
// Masked-lidar experiment

struct MaskedExperimentConfig {
  std::size_t min_points = 15;
  double mask_fraction = 0.8;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(mask_fraction > 0 && mask_fraction < 1)) throw InputError("mask_fraction must lie in (0, 1)");
    if (min_points < 1) throw InputError("min_points must be >= 1");
  }

  /// floor(fraction·n); the tiny slack keeps e.g. 0.8·15 at 12 despite rounding.
  std::size_t removal_count(std::size_t n) const {
    return static_cast<std::size_t>(std::floor(mask_fraction * static_cast<double>(n) + 1e-9));
  }
};

struct MaskedObjectRow {
  std::uint32_t instance_id = 0;
  std::size_t object_points = 0;  // returns of this object inside its mask
  std::size_t removed = 0;
  std::size_t kept = 0;  // frustum entries left as depth donors
  bool eligible = false;
  bool excluded = false;
  std::string note;
  ChamferResult chamfer;  // a = virtual points, b = removed real points
};

struct MaskedReport {
  std::vector<MaskedObjectRow> rows;
  ChamferResult aggregate;  // mean over evaluated objects
  std::size_t evaluated = 0;
};

/// For every instance with at least `min_points` of its own returns inside
/// its mask: hide floor(fraction·n) of them at random, lift virtual points at
/// the exact projected positions of the hidden returns using depths from the
/// remaining frustum entries, and compare against the hidden returns in the
/// lidar frame.
inline MaskedReport masked_experiment(const PointCloud& cloud, std::span<const std::uint32_t> gt_ids,
                                      const InstanceMaskSet& masks, const CalibrationChain& calib,
                                      const GenerationConfig& gen, const MaskedExperimentConfig& exp) {
  gen.validate();
  exp.validate();
  if (gt_ids.size() != cloud.points.size())
    throw InputError("ground-truth object IDs (" + std::to_string(gt_ids.size()) + ") do not match cloud size (" +
                     std::to_string(cloud.points.size()) + ")");
  const auto frustums = build_frustums(cloud, masks, calib);
  const RigidTransform lidar_from_camera = invert(calib.camera_from_lidar());
  const auto& instances = masks.instances();

  MaskedReport report;
  report.rows.resize(instances.size());
  parallel_for(instances.size(), gen.threads, [&](std::size_t i) {
    const std::uint32_t id = instances[i].instance_id;
    const Frustum& frustum = frustums[i];
    MaskedObjectRow& row = report.rows[i];
    row.instance_id = id;

    std::vector<std::size_t> own;  // entry indices belonging to this object
    for (std::size_t e = 0; e < frustum.entries.size(); ++e)
      if (gt_ids[frustum.entries[e].source_index] == id) own.push_back(e);
    row.object_points = own.size();
    if (own.size() < exp.min_points) {
      row.note = "fewer than min_points returns";
      return;
    }
    row.eligible = true;

    CounterRng rng(exp.seed, gen.frame_id, id);
    const auto picks = sample_without_replacement(own.size(), exp.removal_count(own.size()), rng);
    std::vector<bool> hidden(frustum.entries.size(), false);
    for (const auto p : picks) hidden[own[p]] = true;

    Frustum kept{id, {}};
    std::vector<Vec2> samples;
    std::vector<Vec3> removed_points;
    for (std::size_t e = 0; e < frustum.entries.size(); ++e) {
      if (hidden[e]) {
        samples.push_back(frustum.entries[e].p);
        removed_points.push_back(cloud.points[frustum.entries[e].source_index].position());
      } else {
        kept.entries.push_back(frustum.entries[e]);
      }
    }
    row.removed = samples.size();
    row.kept = kept.entries.size();
    if (kept.entries.empty() || samples.empty()) {
      row.excluded = true;
      row.note = kept.entries.empty() ? "no returns left after masking" : "nothing masked";
      return;
    }

    const PixelIndex index(kept.entries, calib.intrinsics.width, calib.intrinsics.height, gen.nn_cell_size);
    std::vector<VirtualPoint> virt;
    lift_samples(samples, kept, index, calib.intrinsics, lidar_from_camera, {}, virt);
    std::vector<Vec3> virtual_points;
    virtual_points.reserve(virt.size());
    for (const auto& v : virt) virtual_points.push_back(v.position);
    row.chamfer = chamfer(virtual_points, removed_points);
  });

  for (const auto& row : report.rows) {
    if (!row.eligible || row.excluded) continue;
    ++report.evaluated;
    report.aggregate.a_to_b += row.chamfer.a_to_b;
    report.aggregate.b_to_a += row.chamfer.b_to_a;
    report.aggregate.count_a += row.chamfer.count_a;
    report.aggregate.count_b += row.chamfer.count_b;
  }
  if (report.evaluated > 0) {
    report.aggregate.a_to_b /= static_cast<double>(report.evaluated);
    report.aggregate.b_to_a /= static_cast<double>(report.evaluated);
    report.aggregate.bidirectional = (report.aggregate.a_to_b + report.aggregate.b_to_a) / 2;
  }
  return report;
}

inline json masked_report_json(const MaskedReport& r, const MaskedExperimentConfig& exp, const GenerationConfig& gen) {
  json rows = json::array();
  for (const auto& row : r.rows) {
    json j = {{"instance_id", row.instance_id}, {"object_points", row.object_points}, {"removed", row.removed},
              {"kept", row.kept},               {"eligible", row.eligible},           {"excluded", row.excluded}};
    if (!row.note.empty()) j["note"] = row.note;
    if (row.eligible && !row.excluded) j["chamfer"] = chamfer_json(row.chamfer);
    rows.push_back(j);
  }
  return {{"chamfer_definition", kChamferDefinition},
          {"config",
           {{"min_points", exp.min_points},
            {"mask_fraction", exp.mask_fraction},
            {"seed", exp.seed},
            {"nn_cell_size", gen.nn_cell_size},
            {"frame_id", gen.frame_id}}},
          {"objects", rows},
          {"evaluated_objects", r.evaluated},
          {"aggregate", chamfer_json(r.aggregate)}};
}

inline std::string masked_report_csv(const MaskedReport& r) {
  std::string out = "instance_id,object_points,removed,kept,eligible,excluded,a_to_b,b_to_a,bidirectional\n";
  for (const auto& row : r.rows) {
    const bool ok = row.eligible && !row.excluded;
    out += std::to_string(row.instance_id) + "," + std::to_string(row.object_points) + "," +
           std::to_string(row.removed) + "," + std::to_string(row.kept) + "," + (row.eligible ? "1" : "0") + "," +
           (row.excluded ? "1" : "0") + "," + (ok ? csv_number(row.chamfer.a_to_b) : "") + "," +
           (ok ? csv_number(row.chamfer.b_to_a) : "") + "," + (ok ? csv_number(row.chamfer.bidirectional) : "") + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Density report

inline constexpr std::array<double, 4> kRangeBinEdges{0, 15, 30, 50};
inline constexpr std::array<const char*, 4> kRangeBinNames{"0-15m", "15-30m", "30-50m", "50m+"};

inline std::size_t range_bin(double range) {
  if (range < kRangeBinEdges[1]) return 0;
  if (range < kRangeBinEdges[2]) return 1;
  if (range < kRangeBinEdges[3]) return 2;
  return 3;
}

struct DensityRow {
  std::uint32_t instance_id = 0;
  std::size_t real_count = 0;
  std::size_t virtual_count = 0;
  std::optional<std::size_t> expected_virtual;  // min(tau, pixels) when masks are known
  double range = 0;                             // bird's-eye distance of the object centroid
  std::size_t bin = 0;
};

struct DensityBin {
  std::size_t objects = 0;
  std::size_t real_points = 0;
  std::size_t virtual_points = 0;
};

struct DensityReport {
  std::vector<DensityRow> rows;  // ascending instance_id
  std::array<DensityBin, 4> bins{};
};

/// Per-object real and virtual point counts with a range-bin table. Object
/// range is the bird's-eye norm of the centroid of its real returns (virtual
/// points when it has none). Passing masks adds the target count
/// min(tau, pixel_count); an instance skipped for an empty frustum reports 0
/// virtual points against that target.
inline DensityReport density_report(const PointCloud& cloud, const VirtualPointSet& virt,
                                    std::span<const std::uint32_t> gt_ids, const InstanceMaskSet* masks = nullptr,
                                    std::size_t tau = kDefaultTau) {
  if (gt_ids.size() != cloud.points.size()) throw InputError("ground-truth object IDs do not match cloud size");
  struct Acc {
    std::size_t real = 0, virt = 0;
    Vec3 real_sum = Vec3::Zero(), virt_sum = Vec3::Zero();
  };
  std::map<std::uint32_t, Acc> acc;
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    if (gt_ids[i] == 0) continue;
    auto& a = acc[gt_ids[i]];
    ++a.real;
    a.real_sum += cloud.points[i].position();
  }
  for (const auto& g : virt.groups) {
    auto& a = acc[g.instance_id];
    for (const auto& p : g.points) {
      ++a.virt;
      a.virt_sum += p.position;
    }
  }
  DensityReport report;
  for (const auto& [id, a] : acc) {
    DensityRow row;
    row.instance_id = id;
    row.real_count = a.real;
    row.virtual_count = a.virt;
    const Vec3 c = a.real ? Vec3(a.real_sum / static_cast<double>(a.real))
                          : (a.virt ? Vec3(a.virt_sum / static_cast<double>(a.virt)) : Vec3::Zero());
    row.range = std::hypot(c.x(), c.y());
    row.bin = range_bin(row.range);
    if (masks)
      if (const auto* meta = masks->find(id)) row.expected_virtual = std::min(tau, meta->pixel_count);
    auto& bin = report.bins[row.bin];
    ++bin.objects;
    bin.real_points += row.real_count;
    bin.virtual_points += row.virtual_count;
    report.rows.push_back(row);
  }
  return report;
}

inline json density_report_json(const DensityReport& r) {
  json rows = json::array();
  for (const auto& row : r.rows) {
    json j = {{"instance_id", row.instance_id},
              {"real_count", row.real_count},
              {"virtual_count", row.virtual_count},
              {"range_m", row.range},
              {"range_bin", kRangeBinNames[row.bin]}};
    if (row.expected_virtual) j["expected_virtual"] = *row.expected_virtual;
    rows.push_back(j);
  }
  json bins = json::array();
  for (std::size_t b = 0; b < r.bins.size(); ++b) {
    const auto& bin = r.bins[b];
    const double n = bin.objects ? static_cast<double>(bin.objects) : 1.0;
    bins.push_back({{"range_bin", kRangeBinNames[b]},
                    {"objects", bin.objects},
                    {"real_points", bin.real_points},
                    {"virtual_points", bin.virtual_points},
                    {"mean_real_per_object", bin.objects ? bin.real_points / n : 0.0},
                    {"mean_virtual_per_object", bin.objects ? bin.virtual_points / n : 0.0}});
  }
  return {{"objects", rows}, {"range_bins", bins}};
}

inline std::string density_report_csv(const DensityReport& r) {
  std::string out = "instance_id,real_count,virtual_count,range_m,range_bin\n";
  for (const auto& row : r.rows)
    out += std::to_string(row.instance_id) + "," + std::to_string(row.real_count) + "," +
           std::to_string(row.virtual_count) + "," + csv_number(row.range) + "," + kRangeBinNames[row.bin] + "\n";
  return out;
}

}  // namespace mvp
