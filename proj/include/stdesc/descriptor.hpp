#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <unordered_set>
#include <vector>

#include "stdesc/geometry.hpp"
#include "stdesc/kdtree.hpp"
#include "stdesc/keypoints.hpp"

namespace stdesc {

/// Triangle of key points with vertices ordered so that l12 <= l23 <= l13.
struct TriangleDescriptor {
  Point3 p1 = Point3::Zero(), p2 = Point3::Zero(), p3 = Point3::Zero();
  Vec3 n1 = Vec3::UnitZ(), n2 = Vec3::UnitZ(), n3 = Vec3::UnitZ();
  double l12 = 0.0, l23 = 0.0, l13 = 0.0;
  Point3 centroid = Point3::Zero();
  std::int64_t frame_id = 0;

  std::array<Point3, 3> vertices() const { return {p1, p2, p3}; }
};

using Signature = std::array<double, 6>;

/// (l12, l23, l13, |n1.n2|, |n2.n3|, |n1.n3|).
inline Signature descriptor_signature(const TriangleDescriptor& d) {
  return {d.l12, d.l23, d.l13, std::abs(d.n1.dot(d.n2)), std::abs(d.n2.dot(d.n3)), std::abs(d.n1.dot(d.n3))};
}

struct DescriptorOptions {
  std::size_t k_neighbors = 20;
  double min_side = 0.5;
  double degenerate_eps = 0.1;  // required slack l12 + l23 - l13
  double dedup_resolution = 0.01;
};

namespace detail {

inline bool lex_less(const Point3& a, const Point3& b) {
  if (a.x() != b.x()) return a.x() < b.x();
  if (a.y() != b.y()) return a.y() < b.y();
  return a.z() < b.z();
}

inline bool lex_less(const std::array<Point3, 3>& a, const std::array<Point3, 3>& b) {
  for (int i = 0; i < 3; ++i) {
    if (lex_less(a[i], b[i])) return true;
    if (lex_less(b[i], a[i])) return false;
  }
  return false;
}

}  // namespace detail

/// Canonical labelling: the vertex pair realising the shortest side is
/// (p1, p2), the longest is (p1, p3). Ties go to the lexicographically
/// smallest vertex sequence.
inline TriangleDescriptor make_triangle(const KeyPoint& a, const KeyPoint& b, const KeyPoint& c,
                                        std::int64_t frame_id) {
  const KeyPoint* v[3] = {&a, &b, &c};
  static constexpr int kPerm[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
  TriangleDescriptor best;
  bool have = false;
  for (const auto& perm : kPerm) {
    const Point3& p1 = v[perm[0]]->position;
    const Point3& p2 = v[perm[1]]->position;
    const Point3& p3 = v[perm[2]]->position;
    double l12 = (p1 - p2).norm(), l23 = (p2 - p3).norm(), l13 = (p1 - p3).norm();
    if (!(l12 <= l23 && l23 <= l13)) continue;
    if (have && !detail::lex_less({p1, p2, p3}, best.vertices())) continue;
    best.p1 = p1;
    best.p2 = p2;
    best.p3 = p3;
    best.n1 = v[perm[0]]->normal;
    best.n2 = v[perm[1]]->normal;
    best.n3 = v[perm[2]]->normal;
    best.l12 = l12;
    best.l23 = l23;
    best.l13 = l13;
    have = true;
  }
  best.centroid = (best.p1 + best.p2 + best.p3) / 3.0;
  best.frame_id = frame_id;
  return best;
}

inline bool is_degenerate(const TriangleDescriptor& d, const DescriptorOptions& opt) {
  return d.l12 < opt.min_side || d.l12 + d.l23 - d.l13 < opt.degenerate_eps;
}

/// Strict weak order used for deterministic output: sides, then vertices.
inline bool descriptor_less(const TriangleDescriptor& a, const TriangleDescriptor& b) {
  if (a.l12 != b.l12) return a.l12 < b.l12;
  if (a.l23 != b.l23) return a.l23 < b.l23;
  if (a.l13 != b.l13) return a.l13 < b.l13;
  return detail::lex_less(a.vertices(), b.vertices());
}

/// Sorts and drops triangles whose side triple quantizes to one already kept.
inline std::vector<TriangleDescriptor> dedup_by_sides(std::vector<TriangleDescriptor> tris, double resolution) {
  std::sort(tris.begin(), tris.end(), descriptor_less);
  struct TripleHash {
    std::size_t operator()(const std::array<std::int64_t, 3>& t) const noexcept {
      std::uint64_t h = 1469598103934665603ULL;
      for (auto v : t) h = (h ^ static_cast<std::uint64_t>(v)) * 1099511628211ULL;
      return static_cast<std::size_t>(h);
    }
  };
  std::unordered_set<std::array<std::int64_t, 3>, TripleHash> seen;
  std::vector<TriangleDescriptor> out;
  out.reserve(tris.size());
  for (auto& t : tris) {
    std::array<std::int64_t, 3> key = {static_cast<std::int64_t>(std::floor(t.l12 / resolution)),
                                       static_cast<std::int64_t>(std::floor(t.l23 / resolution)),
                                       static_cast<std::int64_t>(std::floor(t.l13 / resolution))};
    if (seen.insert(key).second) out.push_back(std::move(t));
  }
  return out;
}

struct DescriptorSet {
  std::vector<TriangleDescriptor> descriptors;
  bool too_few_keypoints = false;
};

/// Triangles from every key point and each pair of its k nearest key points.
inline DescriptorSet build_descriptors(std::span<const KeyPoint> kps, const DescriptorOptions& opt,
                                       std::int64_t frame_id) {
  DescriptorSet result;
  if (kps.size() < 3) {
    result.too_few_keypoints = true;
    return result;
  }
  std::vector<Point3> pos;
  pos.reserve(kps.size());
  for (const auto& k : kps) pos.push_back(k.position);
  KdTree3 tree(pos);

  std::vector<TriangleDescriptor> cand;
  for (std::size_t a = 0; a < kps.size(); ++a) {
    auto nn = tree.knn(pos[a], opt.k_neighbors + 1);
    std::vector<std::uint32_t> nbrs;
    nbrs.reserve(nn.size());
    for (const auto& n : nn)
      if (n.index != a && nbrs.size() < opt.k_neighbors) nbrs.push_back(n.index);
    for (std::size_t i = 0; i < nbrs.size(); ++i) {
      for (std::size_t j = i + 1; j < nbrs.size(); ++j) {
        TriangleDescriptor t = make_triangle(kps[a], kps[nbrs[i]], kps[nbrs[j]], frame_id);
        if (!is_degenerate(t, opt)) cand.push_back(t);
      }
    }
  }
  result.descriptors = dedup_by_sides(std::move(cand), opt.dedup_resolution);
  return result;
}

}  // namespace stdesc
