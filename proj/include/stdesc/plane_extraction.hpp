#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <span>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <Eigen/Eigenvalues>

#include "stdesc/cell_index.hpp"
#include "stdesc/error.hpp"
#include "stdesc/geometry.hpp"

namespace stdesc {

/// Voxels with fewer points are never tested for planarity.
inline constexpr std::size_t kMinPlaneVoxelPoints = 10;

struct Voxel {
  CellIndex cell;
  std::vector<Point3> points;
  Point3 mean = Point3::Zero();
  Mat3 covariance = Mat3::Zero();
  Vec3 eigenvalues = Vec3::Zero();  // descending: lambda1 >= lambda2 >= lambda3
  Vec3 normal = Vec3::UnitZ();      // eigenvector of lambda3, sign-canonical
  bool has_eigen = false;
  bool is_plane = false;
};

struct Plane {
  int id = 0;
  Point3 center = Point3::Zero();
  Vec3 normal = Vec3::UnitZ();
  std::size_t point_count = 0;
  std::vector<CellIndex> members;   // ascending
  std::vector<CellIndex> boundary;  // ascending
};

/// Flip v so its component of largest magnitude is positive.
inline Vec3 canonical_sign(const Vec3& v) {
  int i = 0;
  v.cwiseAbs().maxCoeff(&i);
  return v[i] < 0 ? Vec3(-v) : v;
}

/// Population covariance of a point set plus its descending eigen-decomposition.
struct PointStats {
  Point3 mean = Point3::Zero();
  Mat3 covariance = Mat3::Zero();
  Vec3 eigenvalues = Vec3::Zero();
  Vec3 normal = Vec3::UnitZ();

  static PointStats compute(std::span<const Point3> pts) {
    PointStats s;
    if (pts.empty()) return s;
    const double n = static_cast<double>(pts.size());
    for (const auto& p : pts) s.mean += p;
    s.mean /= n;
    for (const auto& p : pts) {
      Vec3 d = p - s.mean;
      s.covariance.noalias() += d * d.transpose();
    }
    s.covariance /= n;
    s.decompose();
    return s;
  }

  void decompose() {
    Eigen::SelfAdjointEigenSolver<Mat3> es(covariance);
    // Eigen returns ascending order.
    eigenvalues = Vec3(es.eigenvalues()[2], es.eigenvalues()[1], es.eigenvalues()[0]);
    normal = canonical_sign(es.eigenvectors().col(0).normalized());
  }
};

class VoxelMap {
 public:
  VoxelMap() = default;
  explicit VoxelMap(double voxel_size) : voxel_size_(voxel_size) {}

  double voxel_size() const { return voxel_size_; }
  std::size_t size() const { return voxels_.size(); }
  bool empty() const { return voxels_.empty(); }

  const Voxel* find(const CellIndex& c) const {
    auto it = voxels_.find(c);
    return it == voxels_.end() ? nullptr : &it->second;
  }
  Voxel* find(const CellIndex& c) {
    auto it = voxels_.find(c);
    return it == voxels_.end() ? nullptr : &it->second;
  }
  const Voxel& at(const CellIndex& c) const { return voxels_.at(c); }

  /// Cell indices in ascending order.
  const std::vector<CellIndex>& cells() const { return ordered_; }

  auto begin() const { return voxels_.begin(); }
  auto end() const { return voxels_.end(); }

 private:
  friend VoxelMap build_voxel_map(std::span<const Point3>, double);
  double voxel_size_ = 1.0;
  std::unordered_map<CellIndex, Voxel, CellIndexHash> voxels_;
  std::vector<CellIndex> ordered_;
};

/// Bins the cloud and computes per-voxel mean, covariance and eigenvalues.
inline VoxelMap build_voxel_map(std::span<const Point3> cloud, double voxel_size) {
  if (!(voxel_size > 0.0)) throw Error(ErrorCode::InvalidArgument, "voxel_size must be positive");
  if (cloud.empty()) throw Error(ErrorCode::EmptyInput, "empty cloud");
  VoxelMap map(voxel_size);
  map.voxels_.reserve(cloud.size() / 8 + 1);
  for (const auto& p : cloud) {
    CellIndex c = CellIndex::of(p, voxel_size);
    auto [it, inserted] = map.voxels_.try_emplace(c);
    if (inserted) it->second.cell = c;
    it->second.points.push_back(p);
  }
  map.ordered_.reserve(map.voxels_.size());
  for (auto& [cell, v] : map.voxels_) {
    map.ordered_.push_back(cell);
    PointStats s;
    const double n = static_cast<double>(v.points.size());
    for (const auto& p : v.points) s.mean += p;
    s.mean /= n;
    for (const auto& p : v.points) s.covariance.noalias() += (p - s.mean) * (p - s.mean).transpose();
    s.covariance /= n;
    v.mean = s.mean;
    v.covariance = s.covariance;
    if (v.points.size() < kMinPlaneVoxelPoints) continue;
    s.decompose();
    v.eigenvalues = s.eigenvalues;
    v.normal = s.normal;
    v.has_eigen = true;
  }
  std::sort(map.ordered_.begin(), map.ordered_.end());
  return map;
}

/// lambda3 < sigma1 and lambda2 > sigma2, eigenvalues in descending order.
inline bool is_plane_voxel(const Vec3& eigenvalues, double sigma1, double sigma2) {
  return eigenvalues[2] < sigma1 && eigenvalues[1] > sigma2;
}

inline bool is_plane_voxel(const Voxel& v, double sigma1, double sigma2) {
  return v.has_eigen && is_plane_voxel(v.eigenvalues, sigma1, sigma2);
}

/// Sets Voxel::is_plane on every voxel; returns the number of plane voxels.
inline std::size_t classify_voxels(VoxelMap& map, double sigma1, double sigma2) {
  std::size_t n = 0;
  for (const auto& c : map.cells()) {
    Voxel* v = map.find(c);
    v->is_plane = is_plane_voxel(*v, sigma1, sigma2);
    n += v->is_plane;
  }
  return n;
}

struct PlaneGrowOptions {
  double normal_merge_tol = 0.02;
  double dist_merge_tol = 0.2;
  int connectivity = 6;  // 6 or 26
};

namespace detail {

inline const std::vector<std::array<int, 3>>& neighbor_offsets(int connectivity) {
  static const std::vector<std::array<int, 3>> six = {
      {{-1, 0, 0}}, {{1, 0, 0}}, {{0, -1, 0}}, {{0, 1, 0}}, {{0, 0, -1}}, {{0, 0, 1}}};
  static const std::vector<std::array<int, 3>> twenty_six = [] {
    std::vector<std::array<int, 3>> v;
    for (int dx = -1; dx <= 1; ++dx)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dz = -1; dz <= 1; ++dz)
          if (dx || dy || dz) v.push_back({dx, dy, dz});
    return v;
  }();
  return connectivity == 26 ? twenty_six : six;
}

}  // namespace detail

/// Breadth-first region growing over plane voxels, seeded in ascending cell
/// order. A plane neighbour joins when its normal agrees with the seed normal
/// and its mean lies within dist_merge_tol of the seed plane; every other
/// occupied neighbour is a boundary voxel of the growing plane.
inline std::vector<Plane> grow_planes(const VoxelMap& map, const PlaneGrowOptions& opt = {}) {
  if (opt.connectivity != 6 && opt.connectivity != 26)
    throw Error(ErrorCode::InvalidArgument, "connectivity must be 6 or 26");
  const auto& offsets = detail::neighbor_offsets(opt.connectivity);

  std::unordered_set<CellIndex, CellIndexHash> assigned;
  std::vector<Plane> planes;

  for (const auto& seed_cell : map.cells()) {
    const Voxel& seed = map.at(seed_cell);
    if (!seed.is_plane || assigned.count(seed_cell)) continue;

    Plane plane;
    plane.id = static_cast<int>(planes.size());
    std::unordered_set<CellIndex, CellIndexHash> member_set{seed_cell};
    std::unordered_set<CellIndex, CellIndexHash> boundary_set;
    std::deque<CellIndex> frontier{seed_cell};
    assigned.insert(seed_cell);

    while (!frontier.empty()) {
      CellIndex cur = frontier.front();
      frontier.pop_front();
      for (const auto& o : offsets) {
        CellIndex nb = cur.offset(o[0], o[1], o[2]);
        if (member_set.count(nb)) continue;
        const Voxel* v = map.find(nb);
        if (!v) continue;
        bool joins = false;
        if (v->is_plane && !assigned.count(nb)) {
          bool normal_ok = std::abs(seed.normal.dot(v->normal)) > 1.0 - opt.normal_merge_tol;
          bool dist_ok = std::abs(seed.normal.dot(v->mean - seed.mean)) < opt.dist_merge_tol;
          joins = normal_ok && dist_ok;
        }
        if (joins) {
          member_set.insert(nb);
          assigned.insert(nb);
          boundary_set.erase(nb);
          frontier.push_back(nb);
        } else {
          boundary_set.insert(nb);
        }
      }
    }

    plane.members.assign(member_set.begin(), member_set.end());
    std::sort(plane.members.begin(), plane.members.end());
    plane.boundary.assign(boundary_set.begin(), boundary_set.end());
    std::sort(plane.boundary.begin(), plane.boundary.end());

    // Pooled statistics over member voxels (count-weighted mean and scatter).
    std::size_t n = 0;
    Vec3 sum = Vec3::Zero();
    for (const auto& c : plane.members) {
      const Voxel& v = map.at(c);
      n += v.points.size();
      sum += v.mean * static_cast<double>(v.points.size());
    }
    plane.point_count = n;
    plane.center = sum / static_cast<double>(n);
    Mat3 scatter = Mat3::Zero();
    for (const auto& c : plane.members) {
      const Voxel& v = map.at(c);
      Vec3 d = v.mean - plane.center;
      scatter += static_cast<double>(v.points.size()) * (v.covariance + d * d.transpose());
    }
    PointStats pooled;
    pooled.covariance = scatter / static_cast<double>(n);
    pooled.decompose();
    plane.normal = pooled.normal;
    planes.push_back(std::move(plane));
  }
  return planes;
}

struct PlaneExtractionOptions {
  double voxel_size = 1.0;
  double sigma1 = 0.01;
  double sigma2 = 0.05;
  PlaneGrowOptions grow;
};

struct PlaneExtraction {
  VoxelMap voxels;
  std::vector<Plane> planes;
};

inline PlaneExtraction extract_planes(std::span<const Point3> cloud, const PlaneExtractionOptions& opt = {}) {
  PlaneExtraction out;
  out.voxels = build_voxel_map(cloud, opt.voxel_size);
  classify_voxels(out.voxels, opt.sigma1, opt.sigma2);
  out.planes = grow_planes(out.voxels, opt.grow);
  return out;
}

}  // namespace stdesc
