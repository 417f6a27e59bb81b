#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "stdesc/descriptor_db.hpp"
#include "stdesc/error.hpp"
#include "stdesc/geometry.hpp"
#include "stdesc/kdtree.hpp"
#include "stdesc/plane_extraction.hpp"

namespace stdesc {

struct RansacOptions {
  std::size_t iterations = 100;
  double inlier_tol = 0.5;  // per vertex, meters
  std::size_t min_inliers = 4;
};

struct RansacResult {
  RigidTransform transform;
  std::vector<std::size_t> inliers;  // indices into the pair list
};

namespace detail {

inline bool pair_is_inlier(const RigidTransform& T, const MatchedPair& m, double tol) {
  const double tol2 = tol * tol;
  return (T.apply(m.query.p1) - m.stored.p1).squaredNorm() <= tol2 &&
         (T.apply(m.query.p2) - m.stored.p2).squaredNorm() <= tol2 &&
         (T.apply(m.query.p3) - m.stored.p3).squaredNorm() <= tol2;
}

inline Correspondences3 vertex_correspondences(std::span<const MatchedPair> pairs,
                                               std::span<const std::size_t> which) {
  std::vector<Point3> src, dst;
  src.reserve(which.size() * 3);
  dst.reserve(which.size() * 3);
  for (auto i : which) {
    const auto& m = pairs[i];
    src.insert(src.end(), {m.query.p1, m.query.p2, m.query.p3});
    dst.insert(dst.end(), {m.stored.p1, m.stored.p2, m.stored.p3});
  }
  return Correspondences3(std::move(src), std::move(dst));
}

}  // namespace detail

/// Transform mapping query-frame vertices onto stored-frame vertices. Each
/// iteration solves on one randomly drawn triangle pair, whose vertex order
/// is fixed by the canonical side ordering. The winner is re-solved on all
/// of its inlier vertices. Throws NoValidTransform below min_inliers.
template <typename Rng>
RansacResult ransac_transform(std::span<const MatchedPair> pairs, const RansacOptions& opt, Rng& rng) {
  if (pairs.empty()) throw Error(ErrorCode::NoValidTransform, "no matched pairs");
  std::uniform_int_distribution<std::size_t> pick(0, pairs.size() - 1);
  RansacResult best;
  bool have = false;
  std::vector<std::size_t> inliers;
  for (std::size_t it = 0; it < opt.iterations; ++it) {
    const std::size_t s = pick(rng);
    const std::size_t one[1] = {s};
    RigidTransform T;
    try {
      T = solve_rigid_svd(detail::vertex_correspondences(pairs, one));
    } catch (const Error&) {
      continue;
    }
    inliers.clear();
    for (std::size_t i = 0; i < pairs.size(); ++i)
      if (detail::pair_is_inlier(T, pairs[i], opt.inlier_tol)) inliers.push_back(i);
    if (!have || inliers.size() > best.inliers.size()) {
      best.transform = T;
      best.inliers = inliers;
      have = true;
    }
  }
  if (!have || best.inliers.size() < opt.min_inliers)
    throw Error(ErrorCode::NoValidTransform,
                "best inlier count " + std::to_string(have ? best.inliers.size() : 0) + " below " +
                    std::to_string(opt.min_inliers));
  best.transform = solve_rigid_svd(detail::vertex_correspondences(pairs, best.inliers));
  return best;
}

struct PlaneMatch {
  std::size_t current;
  std::size_t candidate;
};

/// Builds a center-point index over the candidate planes once.
class PlaneIndex {
 public:
  explicit PlaneIndex(std::span<const Plane> planes) : planes_(planes) {
    std::vector<Point3> centers;
    centers.reserve(planes.size());
    for (const auto& p : planes) centers.push_back(p.center);
    tree_ = KdTree3(centers);
  }

  std::span<const Plane> planes() const { return planes_; }

  /// Current planes whose nearest candidate (by transformed center) agrees in
  /// normal, up to sign, and point-to-plane distance.
  std::vector<PlaneMatch> coinciding(std::span<const Plane> current, const RigidTransform& T, double sigma_n,
                                     double sigma_d) const {
    std::vector<PlaneMatch> out;
    KdTree3::Neighbor nn{};
    for (std::size_t i = 0; i < current.size(); ++i) {
      const Point3 g = T.apply(current[i].center);
      if (!tree_.nearest(g, nn)) break;
      const Plane& c = planes_[nn.index];
      const Vec3 u = T.rotate(current[i].normal);
      const double dn = std::min((u - c.normal).norm(), (u + c.normal).norm());
      const double dd = std::abs(c.normal.dot(g - c.center));
      if (dn < sigma_n && dd < sigma_d) out.push_back({i, nn.index});
    }
    return out;
  }

 private:
  std::span<const Plane> planes_;
  KdTree3 tree_;
};

/// Fraction of current planes that coincide with a candidate plane under T.
inline double plane_overlap(std::span<const Plane> current, std::span<const Plane> candidate, const RigidTransform& T,
                            double sigma_n, double sigma_d) {
  if (current.empty() || candidate.empty()) throw Error(ErrorCode::EmptyPlaneList, "plane_overlap needs planes");
  PlaneIndex index(candidate);
  return static_cast<double>(index.coinciding(current, T, sigma_n, sigma_d).size()) /
         static_cast<double>(current.size());
}

struct IcpOptions {
  double sigma_n = 0.2;
  double sigma_d = 0.3;
  double weight_normal = 1.0;
  double weight_distance = 1.0;
  std::size_t min_pairs = 10;
  std::size_t max_iterations = 30;
  double step_tolerance = 1e-6;
};

struct IcpResult {
  RigidTransform transform;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  std::size_t iterations = 0;
  std::size_t pairs = 0;                // coinciding pairs at the result
  std::vector<double> accepted_costs;  // cost after each accepted step
};

namespace detail {

inline Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return m;
}

inline Mat3 so3_exp(const Vec3& w) {
  const double a = w.norm();
  if (a < 1e-12) return Mat3::Identity() + skew(w);
  return Eigen::AngleAxisd(a, w / a).toRotationMatrix();
}

/// Residual of one plane pair, normalized by the coincidence thresholds.
/// Non-coinciding current planes contribute the saturation value 2.
struct PlaneCost {
  const PlaneIndex& index;
  std::span<const Plane> current;
  const IcpOptions& opt;

  static constexpr double kSaturated = 2.0;

  double operator()(const RigidTransform& T, std::vector<PlaneMatch>* matches = nullptr) const {
    auto m = index.coinciding(current, T, opt.sigma_n, opt.sigma_d);
    double cost = kSaturated * static_cast<double>(current.size() - m.size());
    for (const auto& pm : m) cost += pair_cost(T, pm);
    if (matches) *matches = std::move(m);
    return cost;
  }

  double pair_cost(const RigidTransform& T, const PlaneMatch& pm) const {
    const Plane& b = current[pm.current];
    const Plane& c = index.planes()[pm.candidate];
    const Vec3 u = T.rotate(b.normal);
    const Vec3 rn = (u - c.normal).norm() <= (u + c.normal).norm() ? Vec3(u - c.normal) : Vec3(u + c.normal);
    const double rd = c.normal.dot(T.apply(b.center) - c.center);
    return opt.weight_normal * rn.squaredNorm() / (opt.sigma_n * opt.sigma_n) +
           opt.weight_distance * rd * rd / (opt.sigma_d * opt.sigma_d);
  }
};

}  // namespace detail

/// Plane-to-plane refinement of T0: re-associate by nearest center, then a
/// damped Gauss-Newton step on (rotation, translation). A step is kept only
/// when it does not raise the saturated cost, so the cost never increases.
inline IcpResult std_icp(std::span<const Plane> current, std::span<const Plane> candidate, const RigidTransform& T0,
                         const IcpOptions& opt = {}) {
  if (current.empty() || candidate.empty()) throw Error(ErrorCode::EmptyPlaneList, "std_icp needs planes");
  PlaneIndex index(candidate);
  detail::PlaneCost cost_of{index, current, opt};

  IcpResult res;
  res.transform = T0;
  std::vector<PlaneMatch> matches;
  double cost = cost_of(T0, &matches);
  res.initial_cost = cost;
  if (matches.size() < opt.min_pairs)
    throw Error(ErrorCode::InsufficientOverlap,
                std::to_string(matches.size()) + " coinciding planes, need " + std::to_string(opt.min_pairs));

  const double wn = std::sqrt(opt.weight_normal) / opt.sigma_n;
  const double wd = std::sqrt(opt.weight_distance) / opt.sigma_d;
  double lambda = 1e-4;
  RigidTransform T = T0;
  for (std::size_t iter = 0; iter < opt.max_iterations; ++iter) {
    res.iterations = iter + 1;
    Eigen::Matrix<double, 6, 6> H = Eigen::Matrix<double, 6, 6>::Zero();
    Eigen::Matrix<double, 6, 1> b = Eigen::Matrix<double, 6, 1>::Zero();
    for (const auto& pm : matches) {
      const Plane& pb = current[pm.current];
      const Plane& pc = index.planes()[pm.candidate];
      const Vec3 u = T.rotate(pb.normal);
      const bool same = (u - pc.normal).norm() <= (u + pc.normal).norm();
      const Vec3 rn = same ? Vec3(u - pc.normal) : Vec3(u + pc.normal);
      // d(exp(w) v)/dw = -[v]x for a left perturbation R <- exp(w) R.
      Eigen::Matrix<double, 3, 6> Jn = Eigen::Matrix<double, 3, 6>::Zero();
      Jn.leftCols<3>() = -detail::skew(u);
      const Vec3 v = T.R * pb.center;
      const double rd = pc.normal.dot(v + T.t - pc.center);
      Eigen::Matrix<double, 1, 6> Jd;
      Jd.leftCols<3>() = v.cross(pc.normal).transpose();
      Jd.rightCols<3>() = pc.normal.transpose();
      H += wn * wn * Jn.transpose() * Jn + wd * wd * Jd.transpose() * Jd;
      b += wn * wn * Jn.transpose() * rn + wd * wd * Jd.transpose() * rd;
    }
    Eigen::Matrix<double, 6, 6> A = H;
    A.diagonal() += lambda * (H.diagonal().array() + 1e-9).matrix();
    Eigen::Matrix<double, 6, 1> delta = A.ldlt().solve(-b);
    if (!delta.allFinite()) break;

    RigidTransform cand;
    cand.R = project_to_rotation(detail::so3_exp(delta.head<3>()) * T.R);
    cand.t = T.t + delta.tail<3>();
    std::vector<PlaneMatch> cand_matches;
    const double cand_cost = cost_of(cand, &cand_matches);
    const bool small = delta.norm() < opt.step_tolerance;
    if (cand_cost <= cost) {
      T = cand;
      cost = cand_cost;
      matches = std::move(cand_matches);
      res.accepted_costs.push_back(cost);
      lambda = std::max(lambda * 0.1, 1e-12);
    } else {
      lambda *= 10.0;
    }
    if (small || matches.empty()) break;
  }
  res.transform = T;
  res.final_cost = cost;
  res.pairs = matches.size();
  return res;
}

struct LoopResult {
  std::int64_t query_id = 0;
  std::int64_t match_id = 0;
  RigidTransform transform;  // query frame -> matched frame
  double overlap = 0.0;
  std::size_t inliers = 0;
  std::size_t votes = 0;
  std::optional<RigidTransform> refined;
};

/// Verification outcome of one candidate.
struct CandidateScore {
  std::int64_t frame_id = 0;
  std::size_t votes = 0;
  std::size_t inliers = 0;
  bool has_transform = false;
  RigidTransform transform;
  double overlap = 0.0;
};

struct VerifyOptions {
  RansacOptions ransac;
  double sigma_n = 0.2;
  double sigma_d = 0.3;
  double sigma_pc = 0.5;
  std::size_t min_votes = 5;
  bool best_of_candidates = false;  // false: first candidate in vote order that passes
  bool score_all = false;           // keep scoring after acceptance (evaluation re-scoring)
  bool refine = true;               // run std_icp on the accepted loop
  IcpOptions icp;
};

struct Verification {
  std::optional<LoopResult> loop;
  std::vector<CandidateScore> scores;  // vote order
};

using PlaneLookup = std::function<const std::vector<Plane>*(std::int64_t frame_id)>;

/// Picks among the accepted candidates by the configured rule.
inline std::optional<std::size_t> select_candidate(std::span<const CandidateScore> scores, double sigma_pc,
                                                   bool best_of) {
  std::optional<std::size_t> pick;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!scores[i].has_transform || scores[i].overlap < sigma_pc) continue;
    if (!best_of) return i;
    if (!pick || scores[i].overlap > scores[*pick].overlap) pick = i;
  }
  return pick;
}

template <typename Rng>
Verification verify_loop(std::int64_t query_id, const CandidateSet& candidates, std::span<const Plane> current_planes,
                         const PlaneLookup& planes_of, const VerifyOptions& opt, Rng& rng) {
  Verification out;
  for (const auto& cand : candidates) {
    if (cand.votes < opt.min_votes) continue;
    CandidateScore s;
    s.frame_id = cand.frame_id;
    s.votes = cand.votes;
    try {
      RansacResult r = ransac_transform(std::span<const MatchedPair>(cand.pairs), opt.ransac, rng);
      s.transform = r.transform;
      s.inliers = r.inliers.size();
      s.has_transform = true;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NoValidTransform && e.code() != ErrorCode::DegenerateInput) throw;
    }
    const std::vector<Plane>* cand_planes = planes_of(cand.frame_id);
    if (s.has_transform && cand_planes && !cand_planes->empty() && !current_planes.empty())
      s.overlap = plane_overlap(current_planes, *cand_planes, s.transform, opt.sigma_n, opt.sigma_d);
    out.scores.push_back(s);
    if (!opt.best_of_candidates && !opt.score_all && s.has_transform && s.overlap >= opt.sigma_pc) break;
  }

  auto pick = select_candidate(out.scores, opt.sigma_pc, opt.best_of_candidates);
  if (!pick) return out;
  const CandidateScore& s = out.scores[*pick];
  LoopResult loop;
  loop.query_id = query_id;
  loop.match_id = s.frame_id;
  loop.transform = s.transform;
  loop.overlap = s.overlap;
  loop.inliers = s.inliers;
  loop.votes = s.votes;
  if (opt.refine) {
    IcpOptions icp = opt.icp;
    icp.sigma_n = opt.sigma_n;
    icp.sigma_d = opt.sigma_d;
    try {
      loop.refined = std_icp(current_planes, *planes_of(s.frame_id), s.transform, icp).transform;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::InsufficientOverlap) throw;
    }
  }
  out.loop = loop;
  return out;
}

}  // namespace stdesc
