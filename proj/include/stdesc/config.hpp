#pragma once

#include <algorithm>
#include <cstdint>
#include <type_traits>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "stdesc/error.hpp"
#include "stdesc/geometry.hpp"

namespace stdesc {

/// Every tunable of the pipeline.
struct Config {
  // ingest
  std::size_t n_accumulate = 10;
  double downsample_leaf = 0.25;  // 0 disables
  RigidTransform extrinsic;       // sensor -> pose-file body frame
  // planes
  double voxel_size = 1.0;
  double sigma1 = 0.01;
  double sigma2 = 0.05;
  double normal_merge_tol = 0.02;
  double dist_merge_tol = 0.2;
  int connectivity = 6;
  // key points / descriptors
  double pixel_size = 0.5;
  double min_dist = 0.2;
  std::size_t max_keypoints = 200;
  std::size_t k_neighbors = 20;
  double min_side = 0.5;
  double degenerate_eps = 0.1;
  double dedup_resolution = 0.01;
  // database
  double delta_l = 0.2;
  double delta_n = 0.1;
  std::size_t skip_recent = 50;
  std::size_t max_candidates = 10;
  std::size_t min_votes = 5;
  // verification
  std::size_t iterations = 100;
  double inlier_tol = 0.5;
  std::size_t min_inliers = 4;
  double sigma_n = 0.2;
  double sigma_d = 0.3;
  double sigma_pc = 0.5;
  bool best_of_candidates = false;
  bool refine = true;
  std::size_t icp_min_pairs = 10;
  // evaluation
  double gt_radius = 20.0;
  std::uint64_t seed = 0;

  void set(const std::string& key, const std::string& value);

  static Config parse(std::istream& in);
  static Config load(const std::filesystem::path& path);

  /// key=value lines for every field, in a fixed order.
  std::string to_text() const;
};

namespace detail {

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  if constexpr (std::is_unsigned_v<T>)
    if (!value.empty() && value[0] == '-') throw Error(ErrorCode::ConfigError, key + " must be non-negative");
  std::istringstream ss(value);
  T v{};
  ss >> v;
  std::string rest;
  if (ss.fail() || (ss >> rest)) throw Error(ErrorCode::ConfigError, "bad value for " + key + ": '" + value + "'");
  return v;
}

inline bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "1" || value == "true" || value == "yes" || value == "on") return true;
  if (value == "0" || value == "false" || value == "no" || value == "off") return false;
  throw Error(ErrorCode::ConfigError, "bad boolean for " + key + ": '" + value + "'");
}

inline std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
void require_positive(const std::string& key, T v) {
  if (!(v > T{0})) throw Error(ErrorCode::ConfigError, key + " must be positive");
}

}  // namespace detail

inline void Config::set(const std::string& key, const std::string& value) {
  using detail::parse_bool;
  using detail::parse_number;
  using detail::require_positive;
  auto num = [&](auto& field) { field = parse_number<std::decay_t<decltype(field)>>(key, value); };

  if (key == "n_accumulate") { num(n_accumulate); require_positive(key, n_accumulate); }
  else if (key == "downsample_leaf") { num(downsample_leaf); if (downsample_leaf < 0) throw Error(ErrorCode::ConfigError, "downsample_leaf must be >= 0"); }
  else if (key == "extrinsic") {
    std::string v = value;
    std::replace(v.begin(), v.end(), ',', ' ');
    std::istringstream ss(v);
    double m[12];
    for (double& x : m)
      if (!(ss >> x)) throw Error(ErrorCode::ConfigError, "extrinsic needs 12 numbers (row-major 3x4)");
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) extrinsic.R(r, c) = m[r * 4 + c];
      extrinsic.t[r] = m[r * 4 + 3];
    }
    extrinsic.R = project_to_rotation(extrinsic.R);
  }
  else if (key == "voxel_size") { num(voxel_size); require_positive(key, voxel_size); }
  else if (key == "sigma1") num(sigma1);
  else if (key == "sigma2") num(sigma2);
  else if (key == "normal_merge_tol") num(normal_merge_tol);
  else if (key == "dist_merge_tol") num(dist_merge_tol);
  else if (key == "connectivity") {
    num(connectivity);
    if (connectivity != 6 && connectivity != 26) throw Error(ErrorCode::ConfigError, "connectivity must be 6 or 26");
  }
  else if (key == "pixel_size") { num(pixel_size); require_positive(key, pixel_size); }
  else if (key == "min_dist") num(min_dist);
  else if (key == "max_keypoints") num(max_keypoints);
  else if (key == "k_neighbors") { num(k_neighbors); require_positive(key, k_neighbors); }
  else if (key == "min_side") num(min_side);
  else if (key == "degenerate_eps") num(degenerate_eps);
  else if (key == "dedup_resolution") { num(dedup_resolution); require_positive(key, dedup_resolution); }
  else if (key == "delta_l") { num(delta_l); require_positive(key, delta_l); }
  else if (key == "delta_n") { num(delta_n); require_positive(key, delta_n); }
  else if (key == "skip_recent") num(skip_recent);
  else if (key == "max_candidates") { num(max_candidates); require_positive(key, max_candidates); }
  else if (key == "min_votes") num(min_votes);
  else if (key == "iterations") { num(iterations); require_positive(key, iterations); }
  else if (key == "inlier_tol") { num(inlier_tol); require_positive(key, inlier_tol); }
  else if (key == "min_inliers") num(min_inliers);
  else if (key == "sigma_n") { num(sigma_n); require_positive(key, sigma_n); }
  else if (key == "sigma_d") { num(sigma_d); require_positive(key, sigma_d); }
  else if (key == "sigma_pc") {
    num(sigma_pc);
    if (sigma_pc < 0 || sigma_pc > 1) throw Error(ErrorCode::ConfigError, "sigma_pc must be in [0, 1]");
  }
  else if (key == "best_of_candidates") best_of_candidates = parse_bool(key, value);
  else if (key == "refine") refine = parse_bool(key, value);
  else if (key == "icp_min_pairs") num(icp_min_pairs);
  else if (key == "gt_radius") { num(gt_radius); require_positive(key, gt_radius); }
  else if (key == "seed") num(seed);
  else throw Error(ErrorCode::ConfigError, "unknown key '" + key + "'");
}

/// Flat key=value text; '#' starts a comment.
inline Config Config::parse(std::istream& in) {
  Config cfg;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorCode::ConfigError, "line " + std::to_string(lineno) + ": expected key=value");
    cfg.set(detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
  }
  return cfg;
}

inline Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open config " + path.string());
  return parse(in);
}

inline std::string Config::to_text() const {
  std::ostringstream o;
  o.precision(17);
  o << "n_accumulate=" << n_accumulate << "\ndownsample_leaf=" << downsample_leaf << "\nextrinsic=";
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 4; ++c) o << (c < 3 ? extrinsic.R(r, c) : extrinsic.t[r]) << (r == 2 && c == 3 ? "" : " ");
  o << "\nvoxel_size=" << voxel_size << "\nsigma1=" << sigma1 << "\nsigma2=" << sigma2
    << "\nnormal_merge_tol=" << normal_merge_tol << "\ndist_merge_tol=" << dist_merge_tol
    << "\nconnectivity=" << connectivity << "\npixel_size=" << pixel_size << "\nmin_dist=" << min_dist
    << "\nmax_keypoints=" << max_keypoints << "\nk_neighbors=" << k_neighbors << "\nmin_side=" << min_side
    << "\ndegenerate_eps=" << degenerate_eps << "\ndedup_resolution=" << dedup_resolution
    << "\ndelta_l=" << delta_l << "\ndelta_n=" << delta_n << "\nskip_recent=" << skip_recent
    << "\nmax_candidates=" << max_candidates << "\nmin_votes=" << min_votes << "\niterations=" << iterations
    << "\ninlier_tol=" << inlier_tol << "\nmin_inliers=" << min_inliers << "\nsigma_n=" << sigma_n
    << "\nsigma_d=" << sigma_d << "\nsigma_pc=" << sigma_pc << "\nbest_of_candidates=" << best_of_candidates
    << "\nrefine=" << refine << "\nicp_min_pairs=" << icp_min_pairs << "\ngt_radius=" << gt_radius
    << "\nseed=" << seed << "\n";
  return o.str();
}

}  // namespace stdesc
