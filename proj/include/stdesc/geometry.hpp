#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <Eigen/SVD>

#include "stdesc/error.hpp"

namespace stdesc {

using Point3 = Eigen::Vector3d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline bool is_finite(const Point3& p) { return p.allFinite(); }

/// Proper rigid motion x -> R x + t.
struct RigidTransform {
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();

  static RigidTransform identity() { return {}; }

  static RigidTransform from_axis_angle(const Vec3& axis, double angle, const Vec3& t = Vec3::Zero()) {
    RigidTransform T;
    T.R = Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
    T.t = t;
    return T;
  }

  Point3 apply(const Point3& p) const { return R * p + t; }
  Vec3 rotate(const Vec3& v) const { return R * v; }

  RigidTransform inverse() const {
    RigidTransform inv;
    inv.R = R.transpose();
    inv.t = -(inv.R * t);
    return inv;
  }

  /// (*this) after `rhs`: x -> this(rhs(x)).
  RigidTransform operator*(const RigidTransform& rhs) const {
    RigidTransform out;
    out.R = R * rhs.R;
    out.t = R * rhs.t + t;
    return out;
  }

  Eigen::Matrix4d matrix() const {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.topLeftCorner<3, 3>() = R;
    m.topRightCorner<3, 1>() = t;
    return m;
  }

  bool is_valid(double tol = 1e-9) const {
    if (!R.allFinite() || !t.allFinite()) return false;
    if ((R.transpose() * R - Mat3::Identity()).cwiseAbs().maxCoeff() > tol) return false;
    return std::abs(R.determinant() - 1.0) <= tol;
  }
};

inline Point3 apply_transform(const RigidTransform& T, const Point3& p) { return T.apply(p); }

/// Re-orthonormalize a nearly orthogonal matrix to the closest rotation.
/// Already orthonormal input is returned unchanged.
inline Mat3 project_to_rotation(const Mat3& M) {
  if ((M.transpose() * M - Mat3::Identity()).norm() < 1e-12 && M.determinant() > 0) return M;
  Eigen::JacobiSVD<Mat3> svd(M, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 U = svd.matrixU();
  Mat3 V = svd.matrixV();
  Mat3 D = Mat3::Identity();
  D(2, 2) = (U * V.transpose()).determinant() < 0 ? -1.0 : 1.0;
  return U * D * V.transpose();
}

/// Paired point lists with cached centroids.
class Correspondences3 {
 public:
  Correspondences3(std::vector<Point3> source, std::vector<Point3> target)
      : source_(std::move(source)), target_(std::move(target)) {
    if (source_.size() != target_.size())
      throw Error(ErrorCode::InvalidArgument, "source and target lengths differ");
    source_centroid_ = centroid(source_);
    target_centroid_ = centroid(target_);
  }

  const std::vector<Point3>& source() const { return source_; }
  const std::vector<Point3>& target() const { return target_; }
  const Point3& source_centroid() const { return source_centroid_; }
  const Point3& target_centroid() const { return target_centroid_; }
  std::size_t size() const { return source_.size(); }

  static Point3 centroid(std::span<const Point3> pts) {
    Point3 c = Point3::Zero();
    if (pts.empty()) return c;
    for (const auto& p : pts) c += p;
    return c / static_cast<double>(pts.size());
  }

 private:
  std::vector<Point3> source_;
  std::vector<Point3> target_;
  Point3 source_centroid_;
  Point3 target_centroid_;
};

/// True when all points lie on one line (normalized cross-product test).
inline bool points_collinear(std::span<const Point3> pts, double tol = 1e-9) {
  if (pts.size() < 3) return true;
  const Point3& origin = pts[0];
  std::size_t far = 0;
  double far_norm = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    double n = (pts[i] - origin).norm();
    if (n > far_norm) {
      far_norm = n;
      far = i;
    }
  }
  if (far_norm <= 0.0) return true;
  const Vec3 axis = (pts[far] - origin) / far_norm;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    Vec3 d = pts[i] - origin;
    double n = d.norm();
    if (n <= 0.0) continue;
    if (axis.cross(d / n).norm() > tol) return false;
  }
  return true;
}

/// Least-squares rigid transform mapping source onto target (Kabsch with
/// reflection guard). Throws DegenerateInput on < 3 points or collinear source.
inline RigidTransform solve_rigid_svd(const Correspondences3& c) {
  if (c.size() < 3) throw Error(ErrorCode::DegenerateInput, "need at least 3 correspondences");
  if (points_collinear(c.source())) throw Error(ErrorCode::DegenerateInput, "source points are collinear");

  const Point3& qa = c.source_centroid();
  const Point3& qb = c.target_centroid();
  Mat3 H = Mat3::Zero();
  for (std::size_t i = 0; i < c.size(); ++i)
    H += (c.source()[i] - qa) * (c.target()[i] - qb).transpose();

  Eigen::JacobiSVD<Mat3> svd(H, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Mat3& U = svd.matrixU();
  const Mat3& V = svd.matrixV();
  Mat3 D = Mat3::Identity();
  D(2, 2) = (V * U.transpose()).determinant() < 0 ? -1.0 : 1.0;

  RigidTransform T;
  T.R = V * D * U.transpose();
  T.t = -T.R * qa + qb;
  return T;
}

inline double rotation_angle(const Mat3& R) {
  double c = std::clamp((R.trace() - 1.0) * 0.5, -1.0, 1.0);
  // acos loses precision near zero; use the antisymmetric part there.
  Vec3 w(R(2, 1) - R(1, 2), R(0, 2) - R(2, 0), R(1, 0) - R(0, 1));
  return std::atan2(0.5 * w.norm(), c);
}

}  // namespace stdesc
