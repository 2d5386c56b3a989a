#pragma once

// Virtual point generation: lidar returns are projected into the image and
// collected per instance mask (the instance frustum), mask pixels are sampled,
// each sample borrows the depth of its nearest projected return, and the
// sample is lifted back into the lidar frame carrying the instance's
// semantic feature.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mvp/geometry.hpp"
#include "mvp/parallel.hpp"
#include "mvp/pixel_index.hpp"
#include "mvp/rng.hpp"
#include "mvp/scene.hpp"

namespace mvp {

inline constexpr std::size_t kDefaultTau = 50;
inline constexpr int kDefaultCellSize = 8;
inline constexpr int kDefaultNumClasses = 10;

struct Frustum {
  std::uint32_t instance_id = 0;
  std::vector<FrustumEntry> entries;  // in cloud order
};

struct GenerationConfig {
  std::size_t tau = kDefaultTau;
  std::uint64_t seed = 0;
  std::uint64_t frame_id = 0;
  int nn_cell_size = kDefaultCellSize;
  int num_classes = kDefaultNumClasses;
  unsigned threads = 1;

  void validate() const {
    if (tau < 1) throw InputError("tau must be >= 1");
    if (nn_cell_size < 1) throw InputError("nn_cell_size must be >= 1");
    if (num_classes < 1) throw InputError("num_classes must be >= 1");
  }
};

inline void check_mask_dimensions(const InstanceMaskSet& masks, const CameraIntrinsics& k) {
  if (masks.width() != k.width || masks.height() != k.height)
    throw InputError("mask size " + std::to_string(masks.width()) + "x" + std::to_string(masks.height()) +
                     " does not match camera " + std::to_string(k.width) + "x" + std::to_string(k.height));
}

/// One frustum per instance, aligned with masks.instances(). A return joins
/// the frustum of the instance owning the pixel it projects into; returns on
/// background or rejected by the projection are discarded.
inline std::vector<Frustum> build_frustums(const PointCloud& cloud, const InstanceMaskSet& masks,
                                           const CalibrationChain& calib) {
  calib.intrinsics.validate();
  check_mask_dimensions(masks, calib.intrinsics);
  const RigidTransform camera_from_lidar = calib.camera_from_lidar();

  std::vector<Frustum> frustums(masks.instances().size());
  for (std::size_t i = 0; i < frustums.size(); ++i) frustums[i].instance_id = masks.instances()[i].instance_id;

  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    const auto pd = project(transform_point(camera_from_lidar, cloud.points[i].position()), calib.intrinsics);
    if (!pd) continue;
    const Pixel px = pixel_of(pd->p);
    const std::uint16_t id = masks.at(px.x, px.y);
    if (id == 0) continue;
    frustums[static_cast<std::size_t>(masks.slot(id))].entries.push_back({pd->p, pd->d, i});
  }
  return frustums;
}

/// min(tau, |pixels|) distinct pixels drawn uniformly without replacement,
/// returned as pixel centres. `pixels` is the instance's row-major pixel list.
inline std::vector<Vec2> sample_mask(std::span<const Pixel> pixels, std::size_t tau, CounterRng& rng) {
  const auto picks = sample_without_replacement(pixels.size(), tau, rng);
  std::vector<Vec2> samples;
  samples.reserve(picks.size());
  for (const auto i : picks) samples.push_back(pixel_center(pixels[i].x, pixels[i].y));
  return samples;
}

struct NearestDepth {
  double depth = 0;
  std::size_t entry = 0;  // index into the frustum's entries
};

/// Depth of the frustum entry nearest to s; nullopt for an empty frustum,
/// which means the instance gets no virtual points.
inline std::optional<NearestDepth> nearest_depth(const Vec2& s, const Frustum& frustum, const PixelIndex& index) {
  const auto hit = index.nearest(s);
  if (!hit) return std::nullopt;
  return NearestDepth{frustum.entries[*hit].d, *hit};
}

/// Per-sample provenance, kept for diagnostics and tests.
struct SampleTrace {
  Vec2 sample;
  std::size_t neighbor_source = 0;  // lidar index of the depth donor
  double depth = 0;
  Vec3 camera_point = Vec3::Zero();
};

struct InstanceDiagnostics {
  std::uint32_t instance_id = 0;
  std::size_t frustum_size = 0;
  std::size_t emitted = 0;
  bool skipped_empty_frustum = false;
};

struct GenerationResult {
  VirtualPointSet points;
  std::vector<InstanceDiagnostics> diagnostics;
  std::vector<std::vector<SampleTrace>> traces;  // aligned with points.groups

  std::size_t skipped_instances() const {
    std::size_t n = 0;
    for (const auto& d : diagnostics) n += d.skipped_empty_frustum ? 1 : 0;
    return n;
  }
};

/// Lifts samples to lidar-frame virtual points using nearest-neighbour depth
/// from `entries`. Each camera-frame point takes its donor's depth unchanged.
inline void lift_samples(std::span<const Vec2> samples, const Frustum& frustum, const PixelIndex& index,
                         const CameraIntrinsics& k, const RigidTransform& lidar_from_camera,
                         const std::vector<double>& feature, std::vector<VirtualPoint>& out,
                         std::vector<SampleTrace>* trace = nullptr) {
  out.reserve(out.size() + samples.size());
  for (const Vec2& s : samples) {
    const auto nn = nearest_depth(s, frustum, index);
    if (!nn) return;
    const Vec3 cam = unproject(s, nn->depth, k);
    out.push_back({transform_point(lidar_from_camera, cam), 0.0, feature});
    if (trace) trace->push_back({s, frustum.entries[nn->entry].source_index, nn->depth, cam});
  }
}

/// Full generation for one frame. Groups follow masks.instances() order;
/// instances whose frustum is empty produce an empty group and are flagged
/// in the diagnostics. Per-instance random streams are keyed by
/// (seed, frame_id, instance_id), so the result is independent of `threads`.
inline GenerationResult generate(const PointCloud& cloud, const InstanceMaskSet& masks, const CalibrationChain& calib,
                                 const GenerationConfig& config) {
  config.validate();
  const auto frustums = build_frustums(cloud, masks, calib);
  const RigidTransform lidar_from_camera = invert(calib.camera_from_lidar());
  const auto& instances = masks.instances();

  GenerationResult result;
  result.points.feature_dim = static_cast<std::uint32_t>(config.num_classes + 1);
  result.points.groups.resize(instances.size());
  result.diagnostics.resize(instances.size());
  result.traces.resize(instances.size());

  // Validate every class id before doing any work.
  std::vector<std::vector<double>> features;
  features.reserve(instances.size());
  for (const auto& meta : instances) features.push_back(semantic_feature(meta, config.num_classes));

  const auto pixel_lists = masks.pixel_lists();

  parallel_for(instances.size(), config.threads, [&](std::size_t i) {
    const auto& meta = instances[i];
    const Frustum& frustum = frustums[i];
    auto& group = result.points.groups[i];
    auto& diag = result.diagnostics[i];
    group.instance_id = meta.instance_id;
    diag.instance_id = meta.instance_id;
    diag.frustum_size = frustum.entries.size();
    if (frustum.entries.empty()) {
      diag.skipped_empty_frustum = true;
      return;
    }
    CounterRng rng(config.seed, config.frame_id, meta.instance_id);
    const auto samples = sample_mask(pixel_lists[i], config.tau, rng);
    const PixelIndex index(frustum.entries, calib.intrinsics.width, calib.intrinsics.height, config.nn_cell_size);
    lift_samples(samples, frustum, index, calib.intrinsics, lidar_from_camera, features[i], group.points,
                 &result.traces[i]);
    diag.emitted = group.points.size();
  });
  return result;
}

inline json diagnostics_json(const GenerationResult& r) {
  json rows = json::array();
  for (const auto& d : r.diagnostics)
    rows.push_back({{"instance_id", d.instance_id},
                    {"frustum_size", d.frustum_size},
                    {"emitted", d.emitted},
                    {"skipped_empty_frustum", d.skipped_empty_frustum}});
  return {{"instances", rows},
          {"total_emitted", r.points.total_points()},
          {"skipped_empty_frustum", r.skipped_instances()}};
}

}  // namespace mvp
