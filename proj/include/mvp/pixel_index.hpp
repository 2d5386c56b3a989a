#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "mvp/errors.hpp"
#include "mvp/geometry.hpp"

namespace mvp {

/// One lidar return that projected inside an instance mask.
struct FrustumEntry {
  Vec2 p;                        // continuous pixel position
  double d = 0;                  // camera-frame depth
  std::size_t source_index = 0;  // index into the lidar cloud
};

/// Uniform grid over image space for exact 2D nearest-neighbour queries.
///
/// Entries are bucketed into square cells of `cell_size` pixels. A query
/// scans Chebyshev rings of cells around its own cell and stops once the
/// best squared distance is strictly below the squared gap to the unscanned
/// region. Ties are broken by the smallest source_index, so the answer is
/// the same as a linear scan.
class PixelIndex {
 public:
  PixelIndex(std::span<const FrustumEntry> entries, int width, int height, int cell_size)
      : entries_(entries), cell_(cell_size) {
    if (cell_size < 1) throw InputError("nn cell size must be >= 1");
    if (width <= 0 || height <= 0) throw InputError("pixel index needs a positive image size");
    gx_ = (width + cell_size - 1) / cell_size;
    gy_ = (height + cell_size - 1) / cell_size;
    const std::size_t cells = static_cast<std::size_t>(gx_) * static_cast<std::size_t>(gy_);
    start_.assign(cells + 1, 0);
    std::vector<std::size_t> cell_of(entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i) {
      cell_of[i] = linear(cell_x(entries[i].p.x()), cell_y(entries[i].p.y()));
      ++start_[cell_of[i] + 1];
    }
    for (std::size_t c = 0; c < cells; ++c) start_[c + 1] += start_[c];
    members_.resize(entries.size());
    std::vector<std::size_t> fill(start_.begin(), start_.end() - 1);
    for (std::size_t i = 0; i < entries.size(); ++i) members_[fill[cell_of[i]]++] = i;
  }

  std::size_t size() const { return entries_.size(); }

  /// Index (into the entries span) of the entry closest to q, or nullopt when empty.
  std::optional<std::size_t> nearest(const Vec2& q) const {
    if (entries_.empty()) return std::nullopt;
    const int cx = cell_x(q.x());
    const int cy = cell_y(q.y());
    std::size_t best = 0;
    double best_d2 = std::numeric_limits<double>::infinity();
    bool found = false;

    for (int r = 0;; ++r) {
      const int x0 = cx - r, x1 = cx + r, y0 = cy - r, y1 = cy + r;
      for (int y = std::max(y0, 0); y <= std::min(y1, gy_ - 1); ++y) {
        const bool edge_row = (y == y0 || y == y1);
        const int step = edge_row ? 1 : (x1 - x0);
        for (int x = x0; x <= x1; x += (step == 0 ? 1 : step)) {
          if (x < 0 || x >= gx_) continue;
          const std::size_t c = linear(x, y);
          for (std::size_t k = start_[c]; k < start_[c + 1]; ++k) {
            const std::size_t i = members_[k];
            const double dx = entries_[i].p.x() - q.x();
            const double dy = entries_[i].p.y() - q.y();
            const double d2 = dx * dx + dy * dy;
            if (!found || d2 < best_d2 || (d2 == best_d2 && entries_[i].source_index < entries_[best].source_index)) {
              best = i;
              best_d2 = d2;
              found = true;
            }
          }
        }
      }
      if (x0 <= 0 && y0 <= 0 && x1 >= gx_ - 1 && y1 >= gy_ - 1) break;
      if (found) {
        const double gap = scanned_gap(q, x0, x1, y0, y1);
        if (best_d2 < gap * gap) break;
      }
    }
    return best;
  }

 private:
  int cell_x(double u) const { return clamp_cell(u, gx_); }
  int cell_y(double v) const { return clamp_cell(v, gy_); }

  // Cell c satisfies c·cell <= coord < (c+1)·cell exactly (before clamping).
  int clamp_cell(double coord, int n) const {
    double c = std::floor(coord / cell_);
    if (c * cell_ > coord) c -= 1;
    if ((c + 1) * cell_ <= coord) c += 1;
    if (!(c >= 0)) return 0;
    if (c >= n - 1) return n - 1;
    return static_cast<int>(c);
  }

  std::size_t linear(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(gx_) + static_cast<std::size_t>(x);
  }

  /// Lower bound on the distance from q to any entry outside the scanned block
  /// of cells [x0,x1]×[y0,y1]. Sides that touch the grid border bound nothing.
  double scanned_gap(const Vec2& q, int x0, int x1, int y0, int y1) const {
    double gap = std::numeric_limits<double>::infinity();
    auto side = [&](bool open, double distance) {
      if (open) gap = std::min(gap, distance > 0 ? distance : 0.0);
    };
    side(x0 > 0, q.x() - static_cast<double>(x0) * cell_);
    side(x1 < gx_ - 1, static_cast<double>(x1 + 1) * cell_ - q.x());
    side(y0 > 0, q.y() - static_cast<double>(y0) * cell_);
    side(y1 < gy_ - 1, static_cast<double>(y1 + 1) * cell_ - q.y());
    return gap;
  }

  std::span<const FrustumEntry> entries_;
  int cell_;
  int gx_ = 0, gy_ = 0;
  std::vector<std::size_t> start_;
  std::vector<std::size_t> members_;
};

}  // namespace mvp
