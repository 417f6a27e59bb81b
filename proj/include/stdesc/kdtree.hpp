#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <queue>
#include <span>
#include <vector>

#include "stdesc/geometry.hpp"

namespace stdesc {

/// Static 3-D k-d tree over a point array. Built once, then read-only.
/// Equal distances are ordered by point index so queries are deterministic.
class KdTree3 {
 public:
  KdTree3() = default;
  explicit KdTree3(std::span<const Point3> points) : points_(points.begin(), points.end()) {
    index_.resize(points_.size());
    std::iota(index_.begin(), index_.end(), 0u);
    nodes_.reserve(points_.size());
    if (!points_.empty()) root_ = build(0, static_cast<std::uint32_t>(points_.size()), 0);
  }

  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }
  const Point3& point(std::size_t i) const { return points_[i]; }

  struct Neighbor {
    std::uint32_t index;
    double sq_dist;
  };

  /// Nearest point to q; returns false when the tree is empty.
  bool nearest(const Point3& q, Neighbor& out) const {
    auto res = knn(q, 1);
    if (res.empty()) return false;
    out = res.front();
    return true;
  }

  /// k nearest points sorted by (distance, index).
  std::vector<Neighbor> knn(const Point3& q, std::size_t k) const {
    std::vector<Neighbor> heap;
    if (k == 0 || root_ < 0) return heap;
    heap.reserve(k + 1);
    search(root_, q, k, heap);
    std::sort_heap(heap.begin(), heap.end(), less);
    return heap;
  }

 private:
  struct Node {
    std::uint32_t point;
    std::int32_t left = -1;
    std::int32_t right = -1;
    std::uint8_t axis = 0;
  };

  static bool less(const Neighbor& a, const Neighbor& b) {
    return a.sq_dist < b.sq_dist || (a.sq_dist == b.sq_dist && a.index < b.index);
  }

  std::int32_t build(std::uint32_t lo, std::uint32_t hi, int depth) {
    if (lo >= hi) return -1;
    Point3 mn = points_[index_[lo]], mx = mn;
    for (std::uint32_t i = lo + 1; i < hi; ++i) {
      mn = mn.cwiseMin(points_[index_[i]]);
      mx = mx.cwiseMax(points_[index_[i]]);
    }
    int axis = 0;
    (mx - mn).maxCoeff(&axis);
    std::uint32_t mid = lo + (hi - lo) / 2;
    std::nth_element(index_.begin() + lo, index_.begin() + mid, index_.begin() + hi,
                     [&](std::uint32_t a, std::uint32_t b) {
                       double va = points_[a][axis], vb = points_[b][axis];
                       return va < vb || (va == vb && a < b);
                     });
    auto id = static_cast<std::int32_t>(nodes_.size());
    nodes_.push_back({index_[mid], -1, -1, static_cast<std::uint8_t>(axis)});
    std::int32_t l = build(lo, mid, depth + 1);
    std::int32_t r = build(mid + 1, hi, depth + 1);
    nodes_[id].left = l;
    nodes_[id].right = r;
    return id;
  }

  void search(std::int32_t node_id, const Point3& q, std::size_t k, std::vector<Neighbor>& heap) const {
    const Node& node = nodes_[node_id];
    const Point3& p = points_[node.point];
    Neighbor cand{node.point, (p - q).squaredNorm()};
    if (heap.size() < k) {
      heap.push_back(cand);
      std::push_heap(heap.begin(), heap.end(), less);
    } else if (less(cand, heap.front())) {
      std::pop_heap(heap.begin(), heap.end(), less);
      heap.back() = cand;
      std::push_heap(heap.begin(), heap.end(), less);
    }
    double diff = q[node.axis] - p[node.axis];
    std::int32_t near = diff < 0 ? node.left : node.right;
    std::int32_t far = diff < 0 ? node.right : node.left;
    if (near >= 0) search(near, q, k, heap);
    // <= keeps equal-distance candidates with lower indices reachable.
    if (far >= 0 && (heap.size() < k || diff * diff <= heap.front().sq_dist)) search(far, q, k, heap);
  }

  std::vector<Point3> points_;
  std::vector<std::uint32_t> index_;
  std::vector<Node> nodes_;
  std::int32_t root_ = -1;
};

}  // namespace stdesc
