#pragma once

#include <algorithm>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "mvp/geometry.hpp"

namespace mvp {

/// Static 3D kd-tree for exact nearest-neighbour queries. Squared distances
/// are computed as dx²+dy²+dz², the same expression a linear scan uses, and
/// a subtree is skipped only when its splitting-plane gap is strictly larger
/// than the best distance, so results match brute force bit for bit.
class KdTree3 {
 public:
  explicit KdTree3(std::span<const Vec3> points) : points_(points), order_(points.size()) {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    if (!order_.empty()) root_ = build(0, order_.size(), 0);
  }

  struct Result {
    std::size_t index = 0;
    double d2 = std::numeric_limits<double>::infinity();
  };

  /// Nearest point to q; ties keep the smallest point index. Requires a non-empty tree.
  Result nearest(const Vec3& q) const {
    Result best;
    if (!nodes_.empty()) search(root_, q, best);
    return best;
  }

 private:
  struct Node {
    std::size_t point;
    int axis;
    int left = -1, right = -1;
  };

  int build(std::size_t lo, std::size_t hi, int depth) {
    if (lo >= hi) return -1;
    const int axis = depth % 3;
    const std::size_t mid = lo + (hi - lo) / 2;
    std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(lo), order_.begin() + static_cast<std::ptrdiff_t>(mid),
                     order_.begin() + static_cast<std::ptrdiff_t>(hi), [&](std::size_t a, std::size_t b) {
                       return points_[a][axis] < points_[b][axis];
                     });
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back({order_[mid], axis});
    const int l = build(lo, mid, depth + 1);
    const int r = build(mid + 1, hi, depth + 1);
    nodes_[static_cast<std::size_t>(id)].left = l;
    nodes_[static_cast<std::size_t>(id)].right = r;
    return id;
  }

  void search(int id, const Vec3& q, Result& best) const {
    if (id < 0) return;
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    const Vec3& p = points_[n.point];
    const double dx = p.x() - q.x(), dy = p.y() - q.y(), dz = p.z() - q.z();
    const double d2 = dx * dx + dy * dy + dz * dz;
    if (d2 < best.d2 || (d2 == best.d2 && n.point < best.index)) best = {n.point, d2};
    const double diff = q[n.axis] - p[n.axis];
    const int near = diff < 0 ? n.left : n.right;
    const int far = diff < 0 ? n.right : n.left;
    search(near, q, best);
    if (diff * diff <= best.d2) search(far, q, best);
  }

  std::span<const Vec3> points_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

}  // namespace mvp
