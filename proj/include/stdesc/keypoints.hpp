#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "stdesc/error.hpp"
#include "stdesc/geometry.hpp"
#include "stdesc/plane_extraction.hpp"

namespace stdesc {

struct Projection {
  Point3 point;  // original 3-D point
  double distance = 0.0;
  Eigen::Vector2d uv = Eigen::Vector2d::Zero();
};

struct KeyPoint {
  Point3 position = Point3::Zero();
  Vec3 normal = Vec3::UnitZ();
  double response = 0.0;  // pixel value that selected this point
  int plane_id = 0;
  std::int64_t frame_id = 0;
};

/// In-plane orthonormal axes: e1 from the global axis least aligned with the
/// normal, e2 = normal x e1.
inline std::pair<Vec3, Vec3> plane_axes(const Vec3& normal) {
  int axis = 0;
  normal.cwiseAbs().minCoeff(&axis);
  Vec3 g = Vec3::Unit(axis);
  Vec3 e1 = (g - normal * normal.dot(g)).normalized();
  Vec3 e2 = normal.cross(e1).normalized();
  return {e1, e2};
}

/// Projects every point of the plane's boundary voxels onto the plane.
inline std::vector<Projection> project_boundary(const Plane& plane, const VoxelMap& map) {
  if (plane.boundary.empty()) throw Error(ErrorCode::NoBoundary, "plane " + std::to_string(plane.id));
  auto [e1, e2] = plane_axes(plane.normal);
  std::vector<Projection> out;
  for (const auto& c : plane.boundary) {
    const Voxel* v = map.find(c);
    if (!v) continue;
    for (const auto& p : v->points) {
      Vec3 d = p - plane.center;
      out.push_back({p, std::abs(plane.normal.dot(d)), Eigen::Vector2d(d.dot(e1), d.dot(e2))});
    }
  }
  return out;
}

/// Per-plane raster of maximum point-to-plane distance.
struct PlaneImage {
  int plane_id = 0;
  Point3 origin = Point3::Zero();
  Vec3 normal = Vec3::UnitZ();
  Vec3 e1 = Vec3::UnitX();
  Vec3 e2 = Vec3::UnitY();
  double pixel_size = 0.5;
  std::int64_t min_col = 0;
  std::int64_t min_row = 0;
  int cols = 0;
  int rows = 0;
  std::vector<double> value;      // -inf when empty
  std::vector<std::int32_t> source;  // index into points, -1 when empty
  std::vector<Point3> points;

  static constexpr double kEmpty = -std::numeric_limits<double>::infinity();

  std::size_t linear(int row, int col) const { return static_cast<std::size_t>(row) * cols + col; }
  bool occupied(std::size_t i) const { return source[i] >= 0; }
};

/// Bins projections into pixel_size squares keeping the farthest point.
/// Equal distances keep the earlier point.
inline PlaneImage rasterize(const Plane& plane, std::span<const Projection> proj, double pixel_size) {
  if (!(pixel_size > 0.0)) throw Error(ErrorCode::InvalidArgument, "pixel_size must be positive");
  PlaneImage img;
  img.plane_id = plane.id;
  img.origin = plane.center;
  img.normal = plane.normal;
  std::tie(img.e1, img.e2) = plane_axes(plane.normal);
  img.pixel_size = pixel_size;
  if (proj.empty()) return img;

  std::vector<std::int64_t> cols(proj.size()), rows(proj.size());
  std::int64_t cmin = std::numeric_limits<std::int64_t>::max(), rmin = cmin;
  std::int64_t cmax = std::numeric_limits<std::int64_t>::min(), rmax = cmax;
  for (std::size_t i = 0; i < proj.size(); ++i) {
    cols[i] = static_cast<std::int64_t>(std::floor(proj[i].uv.x() / pixel_size));
    rows[i] = static_cast<std::int64_t>(std::floor(proj[i].uv.y() / pixel_size));
    cmin = std::min(cmin, cols[i]);
    cmax = std::max(cmax, cols[i]);
    rmin = std::min(rmin, rows[i]);
    rmax = std::max(rmax, rows[i]);
  }
  img.min_col = cmin;
  img.min_row = rmin;
  img.cols = static_cast<int>(cmax - cmin + 1);
  img.rows = static_cast<int>(rmax - rmin + 1);
  const std::size_t npix = static_cast<std::size_t>(img.cols) * img.rows;
  img.value.assign(npix, PlaneImage::kEmpty);
  img.source.assign(npix, -1);
  img.points.reserve(proj.size());
  for (std::size_t i = 0; i < proj.size(); ++i) {
    img.points.push_back(proj[i].point);
    std::size_t px = img.linear(static_cast<int>(rows[i] - rmin), static_cast<int>(cols[i] - cmin));
    if (proj[i].distance > img.value[px]) {
      img.value[px] = proj[i].distance;
      img.source[px] = static_cast<std::int32_t>(i);
    }
  }
  return img;
}

/// 5x5 non-maximum suppression. A pixel survives when its value is at least
/// min_dist and beats every other occupied pixel in the window; equal values
/// are won by the lower linear index.
inline std::vector<KeyPoint> extract_keypoints(const PlaneImage& img, double min_dist, std::int64_t frame_id = 0) {
  constexpr int kHalf = 2;
  std::vector<KeyPoint> out;
  for (int r = 0; r < img.rows; ++r) {
    for (int c = 0; c < img.cols; ++c) {
      const std::size_t i = img.linear(r, c);
      if (!img.occupied(i) || img.value[i] < min_dist) continue;
      const double v = img.value[i];
      bool is_max = true;
      for (int dr = -kHalf; dr <= kHalf && is_max; ++dr) {
        for (int dc = -kHalf; dc <= kHalf; ++dc) {
          int rr = r + dr, cc = c + dc;
          if ((dr == 0 && dc == 0) || rr < 0 || cc < 0 || rr >= img.rows || cc >= img.cols) continue;
          const std::size_t j = img.linear(rr, cc);
          if (!img.occupied(j)) continue;
          if (img.value[j] > v || (img.value[j] == v && j < i)) {
            is_max = false;
            break;
          }
        }
      }
      if (!is_max) continue;
      KeyPoint kp;
      kp.position = img.points[static_cast<std::size_t>(img.source[i])];
      kp.normal = img.normal;
      kp.response = v;
      kp.plane_id = img.plane_id;
      kp.frame_id = frame_id;
      out.push_back(kp);
    }
  }
  return out;
}

struct KeyPointOptions {
  double pixel_size = 0.5;
  double min_dist = 0.2;
  std::size_t max_keypoints = 200;
};

/// Key points over all planes of a frame, strongest first, capped.
inline std::vector<KeyPoint> extract_frame_keypoints(const PlaneExtraction& ex, const KeyPointOptions& opt,
                                                     std::int64_t frame_id) {
  std::vector<KeyPoint> all;
  for (const auto& plane : ex.planes) {
    if (plane.boundary.empty()) continue;
    auto proj = project_boundary(plane, ex.voxels);
    auto img = rasterize(plane, proj, opt.pixel_size);
    auto kps = extract_keypoints(img, opt.min_dist, frame_id);
    all.insert(all.end(), kps.begin(), kps.end());
  }
  std::sort(all.begin(), all.end(), [](const KeyPoint& a, const KeyPoint& b) {
    if (a.response != b.response) return a.response > b.response;
    const auto& p = a.position;
    const auto& q = b.position;
    if (p.x() != q.x()) return p.x() < q.x();
    if (p.y() != q.y()) return p.y() < q.y();
    if (p.z() != q.z()) return p.z() < q.z();
    return a.plane_id < b.plane_id;
  });
  if (all.size() > opt.max_keypoints) all.resize(opt.max_keypoints);
  return all;
}

}  // namespace stdesc
