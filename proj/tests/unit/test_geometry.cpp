#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "stdesc/geometry.hpp"
#include "stdesc/kdtree.hpp"

using namespace stdesc;

namespace {

Mat3 random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
  q.normalize();
  return q.toRotationMatrix();
}

Point3 random_point(std::mt19937_64& rng, double s = 10.0) {
  std::uniform_real_distribution<double> u(-s, s);
  return {u(rng), u(rng), u(rng)};
}

double residual(const RigidTransform& T, const std::vector<Point3>& a, const std::vector<Point3>& b) {
  double r = 0;
  for (std::size_t i = 0; i < a.size(); ++i) r += (T.apply(a[i]) - b[i]).squaredNorm();
  return r;
}

}  // namespace

TEST(SolveRigidSvd, IdentityTriangle) {
  std::vector<Point3> s = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
  auto T = solve_rigid_svd(Correspondences3(s, s));
  EXPECT_LT((T.R - Mat3::Identity()).norm(), 1e-12);
  EXPECT_LT(T.t.norm(), 1e-12);
}

TEST(SolveRigidSvd, PureTranslation) {
  std::vector<Point3> s = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0.3, 0.2, 5}};
  std::vector<Point3> t;
  for (auto& p : s) t.push_back(p + Vec3(1, 2, 3));
  auto T = solve_rigid_svd(Correspondences3(s, t));
  EXPECT_LT((T.R - Mat3::Identity()).norm(), 1e-12);
  EXPECT_LT((T.t - Vec3(1, 2, 3)).norm(), 1e-12);
}

TEST(SolveRigidSvd, RecoversRandomTransforms) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    Mat3 R0 = random_rotation(rng);
    Vec3 t0 = random_point(rng, 50);
    std::vector<Point3> s = {random_point(rng), random_point(rng), random_point(rng)}, t;
    for (auto& p : s) t.push_back(R0 * p + t0);
    auto T = solve_rigid_svd(Correspondences3(s, t));
    EXPECT_LT((T.R - R0).norm(), 1e-9);
    EXPECT_LT((T.t - t0).norm(), 1e-9);
    EXPECT_NEAR(T.R.determinant(), 1.0, 1e-12);
  }
}

TEST(SolveRigidSvd, RejectsDegenerateInput) {
  std::vector<Point3> two = {{0, 0, 0}, {1, 0, 0}};
  EXPECT_THROW(solve_rigid_svd(Correspondences3(two, two)), Error);
  std::vector<Point3> line = {{0, 0, 0}, {1, 1, 1}, {2, 2, 2}, {-3, -3, -3}};
  try {
    solve_rigid_svd(Correspondences3(line, line));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DegenerateInput);
  }
}

TEST(SolveRigidSvd, LengthMismatch) {
  std::vector<Point3> a = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}}, b = {{0, 0, 0}};
  try {
    Correspondences3 c(a, b);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidArgument);
  }
}

TEST(SolveRigidSvd, CentroidsAreMeans) {
  std::mt19937_64 rng(5);
  std::vector<Point3> a, b;
  for (int i = 0; i < 17; ++i) {
    a.push_back(random_point(rng));
    b.push_back(random_point(rng));
  }
  Correspondences3 c(a, b);
  Vec3 ma = Vec3::Zero(), mb = Vec3::Zero();
  for (int i = 0; i < 17; ++i) {
    ma += a[i];
    mb += b[i];
  }
  EXPECT_LT((c.source_centroid() - ma / 17.0).norm(), 1e-12);
  EXPECT_LT((c.target_centroid() - mb / 17.0).norm(), 1e-12);
}

TEST(SolveRigidSvd, LocallyOptimalUnderNoise) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> noise(0.0, 0.05);
  Mat3 R0 = random_rotation(rng);
  Vec3 t0 = random_point(rng);
  std::vector<Point3> a, b;
  for (int i = 0; i < 20; ++i) {
    a.push_back(random_point(rng));
    b.push_back(R0 * a.back() + t0 + Vec3(noise(rng), noise(rng), noise(rng)));
  }
  auto T = solve_rigid_svd(Correspondences3(a, b));
  const double best = residual(T, a, b);
  std::normal_distribution<double> small(0.0, 1e-3);
  for (int k = 0; k < 1000; ++k) {
    RigidTransform P = T;
    P.R = Eigen::AngleAxisd(std::abs(small(rng)), Vec3(small(rng), small(rng), small(rng)).normalized()) * T.R;
    P.t += Vec3(small(rng), small(rng), small(rng));
    EXPECT_LE(best, residual(P, a, b) + 1e-12);
  }
}

TEST(SolveRigidSvd, ReflectionGuard) {
  std::mt19937_64 rng(13);
  std::normal_distribution<double> noise(0.0, 0.01);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Point3> a, b;
    for (int i = 0; i < 6; ++i) {
      a.push_back(random_point(rng));
      Point3 m = a.back();
      m.z() = -m.z();  // mirror image
      b.push_back(m + Vec3(noise(rng), noise(rng), noise(rng)));
    }
    auto T = solve_rigid_svd(Correspondences3(a, b));
    EXPECT_NEAR(T.R.determinant(), 1.0, 1e-9);
    EXPECT_TRUE(T.is_valid());
  }
}

TEST(ApplyTransform, Basics) {
  EXPECT_EQ(apply_transform(RigidTransform::identity(), Point3(1, 2, 3)), Point3(1, 2, 3));
  auto yaw = RigidTransform::from_axis_angle(Vec3::UnitZ(), std::numbers::pi / 2);
  EXPECT_LT((apply_transform(yaw, Point3(1, 0, 0)) - Point3(0, 1, 0)).norm(), 1e-15);

  std::mt19937_64 rng(1);
  for (int i = 0; i < 100; ++i) {
    RigidTransform T{random_rotation(rng), random_point(rng, 100)};
    Point3 p = random_point(rng, 100);
    EXPECT_LT((T.inverse().apply(T.apply(p)) - p).norm(), 1e-12);
    EXPECT_TRUE(T.is_valid());
  }
}

TEST(ApplyTransform, CompositionOrder) {
  std::mt19937_64 rng(2);
  RigidTransform A{random_rotation(rng), random_point(rng)}, B{random_rotation(rng), random_point(rng)};
  Point3 p = random_point(rng);
  EXPECT_LT(((A * B).apply(p) - A.apply(B.apply(p))).norm(), 1e-12);
}

TEST(RotationAngle, MatchesAxisAngle) {
  for (double a : {0.0, 1e-8, 0.3, 1.0, 3.0, std::numbers::pi}) {
    Mat3 R = Eigen::AngleAxisd(a, Vec3(1, 2, 3).normalized()).toRotationMatrix();
    EXPECT_NEAR(rotation_angle(R), a, 1e-9);
  }
}

TEST(KdTree, KnnMatchesBruteForce) {
  std::mt19937_64 rng(7);
  std::vector<Point3> pts;
  for (int i = 0; i < 500; ++i) pts.push_back(random_point(rng));
  KdTree3 tree(pts);
  for (int q = 0; q < 50; ++q) {
    Point3 c = random_point(rng);
    auto got = tree.knn(c, 12);
    std::vector<std::pair<double, std::uint32_t>> all;
    for (std::uint32_t i = 0; i < pts.size(); ++i) all.push_back({(pts[i] - c).squaredNorm(), i});
    std::sort(all.begin(), all.end());
    ASSERT_EQ(got.size(), 12u);
    for (int k = 0; k < 12; ++k) {
      EXPECT_EQ(got[k].index, all[k].second);
      EXPECT_DOUBLE_EQ(got[k].sq_dist, all[k].first);
    }
  }
}

TEST(KdTree, EmptyAndSmall) {
  KdTree3 empty(std::span<const Point3>{});
  KdTree3::Neighbor n{};
  EXPECT_FALSE(empty.nearest(Point3::Zero(), n));
  EXPECT_TRUE(empty.knn(Point3::Zero(), 3).empty());
  std::vector<Point3> two = {{0, 0, 0}, {1, 0, 0}};
  KdTree3 t(two);
  EXPECT_EQ(t.knn(Point3(5, 0, 0), 10).size(), 2u);
}
