#pragma once

#include <chrono>
#include <cstdint>
#include <random>
#include <span>
#include <unordered_map>
#include <vector>

#include "stdesc/config.hpp"
#include "stdesc/descriptor.hpp"
#include "stdesc/descriptor_db.hpp"
#include "stdesc/ingest.hpp"
#include "stdesc/keypoints.hpp"
#include "stdesc/loop_detect.hpp"
#include "stdesc/plane_extraction.hpp"

namespace stdesc {

/// Everything a keyframe contributes to place recognition.
struct FrameFeatures {
  std::int64_t frame_id = 0;
  std::vector<Plane> planes;  // centers and normals only
  std::vector<KeyPoint> keypoints;
  std::vector<TriangleDescriptor> descriptors;
  bool too_few_keypoints = false;
};

inline PlaneExtractionOptions plane_options(const Config& c) {
  PlaneExtractionOptions o;
  o.voxel_size = c.voxel_size;
  o.sigma1 = c.sigma1;
  o.sigma2 = c.sigma2;
  o.grow.normal_merge_tol = c.normal_merge_tol;
  o.grow.dist_merge_tol = c.dist_merge_tol;
  o.grow.connectivity = c.connectivity;
  return o;
}

inline KeyPointOptions keypoint_options(const Config& c) {
  return {c.pixel_size, c.min_dist, c.max_keypoints};
}

inline DescriptorOptions descriptor_options(const Config& c) {
  return {c.k_neighbors, c.min_side, c.degenerate_eps, c.dedup_resolution};
}

inline VerifyOptions verify_options(const Config& c) {
  VerifyOptions o;
  o.ransac = {c.iterations, c.inlier_tol, c.min_inliers};
  o.sigma_n = c.sigma_n;
  o.sigma_d = c.sigma_d;
  o.sigma_pc = c.sigma_pc;
  o.min_votes = c.min_votes;
  o.best_of_candidates = c.best_of_candidates;
  o.refine = c.refine;
  o.icp.min_pairs = c.icp_min_pairs;
  return o;
}

/// Downsample (optional), planes, key points, triangle descriptors.
inline FrameFeatures extract_features(std::span<const Point3> cloud, const Config& cfg, std::int64_t frame_id) {
  FrameFeatures f;
  f.frame_id = frame_id;
  std::vector<Point3> reduced;
  if (cfg.downsample_leaf > 0.0) {
    reduced = voxel_downsample(cloud, cfg.downsample_leaf);
    cloud = reduced;
  }
  PlaneExtraction ex = extract_planes(cloud, plane_options(cfg));
  f.keypoints = extract_frame_keypoints(ex, keypoint_options(cfg), frame_id);
  DescriptorSet ds = build_descriptors(f.keypoints, descriptor_options(cfg), frame_id);
  f.descriptors = std::move(ds.descriptors);
  f.too_few_keypoints = ds.too_few_keypoints;
  f.planes.reserve(ex.planes.size());
  for (auto& p : ex.planes) {
    Plane light;
    light.id = p.id;
    light.center = p.center;
    light.normal = p.normal;
    light.point_count = p.point_count;
    f.planes.push_back(std::move(light));
  }
  return f;
}

/// Query/verify/insert loop over a stream of keyframes. Not thread-safe as a
/// whole; the database inside it is.
class LoopDetector {
 public:
  explicit LoopDetector(Config cfg)
      : cfg_(std::move(cfg)), db_(cfg_.delta_l, cfg_.delta_n), rng_(cfg_.seed), verify_(verify_options(cfg_)) {}

  const Config& config() const { return cfg_; }
  const DescriptorDatabase& database() const { return db_; }
  VerifyOptions& verify_options_mut() { return verify_; }

  struct Detection {
    CandidateSet candidates;
    Verification verification;
    double query_ms = 0.0;
    double verify_ms = 0.0;
  };

  /// Queries the database and verifies candidates; does not insert.
  Detection detect(const FrameFeatures& f) {
    using clock = std::chrono::steady_clock;
    Detection d;
    auto t0 = clock::now();
    if (db_.frames_indexed() > 0)
      d.candidates = db_.query_candidates(f.descriptors, cfg_.skip_recent, cfg_.max_candidates);
    auto t1 = clock::now();
    PlaneLookup lookup = [this](std::int64_t id) -> const std::vector<Plane>* {
      auto it = planes_.find(id);
      return it == planes_.end() ? nullptr : &it->second;
    };
    d.verification = verify_loop(f.frame_id, d.candidates, f.planes, lookup, verify_, rng_);
    auto t2 = clock::now();
    d.query_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    d.verify_ms = std::chrono::duration<double, std::milli>(t2 - t1).count();
    return d;
  }

  void insert(const FrameFeatures& f) {
    db_.insert_frame(f.frame_id, f.descriptors);
    planes_[f.frame_id] = f.planes;
  }

  const std::vector<Plane>* planes_of(std::int64_t id) const {
    auto it = planes_.find(id);
    return it == planes_.end() ? nullptr : &it->second;
  }

 private:
  Config cfg_;
  DescriptorDatabase db_;
  std::mt19937_64 rng_;
  VerifyOptions verify_;
  std::unordered_map<std::int64_t, std::vector<Plane>> planes_;
};

}  // namespace stdesc
