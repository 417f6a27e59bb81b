#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "stdesc/config.hpp"
#include "stdesc/error.hpp"
#include "stdesc/geometry.hpp"
#include "stdesc/ingest.hpp"
#include "stdesc/loop_detect.hpp"
#include "stdesc/pipeline.hpp"

namespace stdesc {

struct PoseError {
  double rotation_deg = 0.0;
  double translation_m = 0.0;
};

/// Rotation error is the angle of R_gt^-1 R_det; translation error is
/// |t_det - t_gt|.
inline PoseError pose_error(const RigidTransform& detected, const RigidTransform& truth) {
  PoseError e;
  e.rotation_deg = rotation_angle(truth.R.transpose() * detected.R) * 180.0 / std::numbers::pi;
  e.translation_m = (detected.t - truth.t).norm();
  return e;
}

struct ScoredCandidate {
  std::int64_t frame_id = 0;
  double overlap = 0.0;
  bool has_transform = false;
};

struct EvalRecord {
  std::int64_t query_id = 0;
  std::optional<std::int64_t> detected_id;
  double overlap = 0.0;
  std::size_t votes = 0;
  std::size_t inliers = 0;
  double extract_ms = 0.0;
  double query_ms = 0.0;
  double verify_ms = 0.0;
  std::optional<PoseError> error;
  std::optional<PoseError> refined_error;
  std::vector<ScoredCandidate> candidates;  // vote order

  double total_ms() const { return extract_ms + query_ms + verify_ms; }
};

struct GroundTruthLoop {
  std::int64_t query_id = 0;
  double radius = 20.0;
  std::vector<std::int64_t> matches;  // ascending
};

/// For each keyframe, the earlier keyframes (outside the skip_recent window)
/// whose anchor positions lie within `radius`.
inline std::vector<GroundTruthLoop> ground_truth_loops(std::span<const std::int64_t> ids,
                                                       std::span<const RigidTransform> anchors, double radius,
                                                       std::size_t skip_recent) {
  if (ids.size() != anchors.size()) throw Error(ErrorCode::InvalidArgument, "ids/anchors length mismatch");
  std::vector<GroundTruthLoop> out;
  out.reserve(ids.size());
  for (std::size_t q = 0; q < ids.size(); ++q) {
    GroundTruthLoop g;
    g.query_id = ids[q];
    g.radius = radius;
    const std::size_t limit = q > skip_recent ? q - skip_recent : 0;
    for (std::size_t j = 0; j < limit; ++j)
      if ((anchors[q].t - anchors[j].t).norm() <= radius) g.matches.push_back(ids[j]);
    std::sort(g.matches.begin(), g.matches.end());
    out.push_back(std::move(g));
  }
  return out;
}

/// Detection implied by stored candidate scores at a given threshold.
inline std::optional<std::int64_t> rescore(const EvalRecord& r, double sigma_pc, bool best_of = false) {
  std::optional<std::size_t> pick;
  for (std::size_t i = 0; i < r.candidates.size(); ++i) {
    const auto& c = r.candidates[i];
    if (!c.has_transform || c.overlap < sigma_pc) continue;
    if (!best_of) {
      pick = i;
      break;
    }
    if (!pick || c.overlap > r.candidates[*pick].overlap) pick = i;
  }
  if (!pick) return std::nullopt;
  return r.candidates[*pick].frame_id;
}

struct PrRow {
  double sigma_pc = 0.0;
  std::size_t tp = 0, fp = 0, fn = 0;
  std::optional<double> precision;
  std::optional<double> recall;
};

/// Precision/recall per threshold. A detection is a true positive when the
/// detected frame is one of the query's ground-truth matches; a query with
/// ground-truth matches and no true positive is a false negative.
inline std::vector<PrRow> pr_sweep(std::span<const EvalRecord> records, std::span<const GroundTruthLoop> gt,
                                   std::vector<double> grid, bool best_of = false) {
  if (gt.empty()) throw Error(ErrorCode::NoGroundTruth, "ground truth is empty");
  std::map<std::int64_t, const GroundTruthLoop*> gt_of;
  for (const auto& g : gt) gt_of[g.query_id] = &g;
  std::sort(grid.begin(), grid.end());
  std::vector<PrRow> rows;
  for (double s : grid) {
    PrRow row;
    row.sigma_pc = s;
    for (const auto& r : records) {
      auto it = gt_of.find(r.query_id);
      const std::vector<std::int64_t>* truth = it == gt_of.end() ? nullptr : &it->second->matches;
      const bool has_truth = truth && !truth->empty();
      auto det = rescore(r, s, best_of);
      bool tp = false;
      if (det) {
        tp = has_truth && std::binary_search(truth->begin(), truth->end(), *det);
        ++(tp ? row.tp : row.fp);
      }
      if (has_truth && !tp) ++row.fn;
    }
    if (row.tp + row.fp > 0) row.precision = static_cast<double>(row.tp) / static_cast<double>(row.tp + row.fp);
    if (row.tp + row.fn > 0) row.recall = static_cast<double>(row.tp) / static_cast<double>(row.tp + row.fn);
    rows.push_back(row);
  }
  return rows;
}

inline std::vector<double> default_sweep_grid() { return {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9}; }

// ---------------------------------------------------------------------------
// CSV

namespace detail {

inline std::string fmt_num(double v) {
  std::ostringstream o;
  o << std::setprecision(9) << v;
  return o.str();
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(s);
  while (std::getline(ss, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

inline double to_double(const std::string& s, const std::string& what) {
  double v = 0;
  if (!parse_double(s, v)) throw Error(ErrorCode::MalformedRecord, "bad " + what + ": '" + s + "'");
  return v;
}

inline std::int64_t to_int(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    long long v = std::stoll(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::MalformedRecord, "bad " + what + ": '" + s + "'");
  }
}

}  // namespace detail

inline constexpr const char* kRecordHeader =
    "query_id,detected_id,overlap,votes,inliers,rot_err_deg,trans_err_m,refined_rot_err_deg,refined_trans_err_m,"
    "candidates";

/// Deterministic columns only; stage timings go to write_timing_csv.
inline void write_records_csv(std::ostream& out, std::span<const EvalRecord> records) {
  using detail::fmt_num;
  out << kRecordHeader << '\n';
  for (const auto& r : records) {
    out << r.query_id << ',' << (r.detected_id ? std::to_string(*r.detected_id) : "") << ',' << fmt_num(r.overlap)
        << ',' << r.votes << ',' << r.inliers << ',' << (r.error ? fmt_num(r.error->rotation_deg) : "") << ','
        << (r.error ? fmt_num(r.error->translation_m) : "") << ','
        << (r.refined_error ? fmt_num(r.refined_error->rotation_deg) : "") << ','
        << (r.refined_error ? fmt_num(r.refined_error->translation_m) : "") << ',';
    for (std::size_t i = 0; i < r.candidates.size(); ++i) {
      const auto& c = r.candidates[i];
      out << (i ? ";" : "") << c.frame_id << ':' << fmt_num(c.overlap) << ':' << (c.has_transform ? 1 : 0);
    }
    out << '\n';
  }
}

inline std::vector<EvalRecord> read_records_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::MalformedRecord, "records file is empty");
  if (line != kRecordHeader) throw Error(ErrorCode::MalformedRecord, "unexpected records header");
  std::vector<EvalRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto f = detail::split(line, ',');
    if (f.size() != 10) throw Error(ErrorCode::MalformedRecord, "records row needs 10 fields");
    EvalRecord r;
    r.query_id = detail::to_int(f[0], "query_id");
    if (!f[1].empty()) r.detected_id = detail::to_int(f[1], "detected_id");
    r.overlap = detail::to_double(f[2], "overlap");
    r.votes = static_cast<std::size_t>(detail::to_int(f[3], "votes"));
    r.inliers = static_cast<std::size_t>(detail::to_int(f[4], "inliers"));
    if (!f[5].empty()) r.error = PoseError{detail::to_double(f[5], "rot_err"), detail::to_double(f[6], "trans_err")};
    if (!f[7].empty())
      r.refined_error = PoseError{detail::to_double(f[7], "rot_err"), detail::to_double(f[8], "trans_err")};
    if (!f[9].empty()) {
      for (const auto& c : detail::split(f[9], ';')) {
        auto parts = detail::split(c, ':');
        if (parts.size() != 3) throw Error(ErrorCode::MalformedRecord, "bad candidate '" + c + "'");
        r.candidates.push_back({detail::to_int(parts[0], "candidate id"), detail::to_double(parts[1], "overlap"),
                                parts[2] == "1"});
      }
    }
    out.push_back(std::move(r));
  }
  return out;
}

inline void write_timing_csv(std::ostream& out, std::span<const EvalRecord> records) {
  out << "query_id,extract_ms,query_ms,verify_ms\n" << std::fixed << std::setprecision(3);
  for (const auto& r : records)
    out << r.query_id << ',' << r.extract_ms << ',' << r.query_ms << ',' << r.verify_ms << '\n';
}

inline void write_gt_csv(std::ostream& out, std::span<const GroundTruthLoop> gt) {
  out << "query_id,radius,matches\n";
  for (const auto& g : gt) {
    out << g.query_id << ',' << detail::fmt_num(g.radius) << ',';
    for (std::size_t i = 0; i < g.matches.size(); ++i) out << (i ? ";" : "") << g.matches[i];
    out << '\n';
  }
}

inline std::vector<GroundTruthLoop> read_gt_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "query_id,radius,matches")
    throw Error(ErrorCode::MalformedRecord, "unexpected ground-truth header");
  std::vector<GroundTruthLoop> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto f = detail::split(line, ',');
    if (f.size() != 3) throw Error(ErrorCode::MalformedRecord, "ground-truth row needs 3 fields");
    GroundTruthLoop g;
    g.query_id = detail::to_int(f[0], "query_id");
    g.radius = detail::to_double(f[1], "radius");
    if (!f[2].empty())
      for (const auto& m : detail::split(f[2], ';')) g.matches.push_back(detail::to_int(m, "match id"));
    std::sort(g.matches.begin(), g.matches.end());
    out.push_back(std::move(g));
  }
  return out;
}

/// Undefined precision/recall are written as empty fields.
inline void write_pr_csv(std::ostream& out, std::span<const PrRow> rows) {
  out << "sigma_pc,tp,fp,fn,precision,recall\n";
  for (const auto& r : rows) {
    out << detail::fmt_num(r.sigma_pc) << ',' << r.tp << ',' << r.fp << ',' << r.fn << ','
        << (r.precision ? detail::fmt_num(*r.precision) : "") << ',' << (r.recall ? detail::fmt_num(*r.recall) : "")
        << '\n';
  }
}

// ---------------------------------------------------------------------------
// Sequence replay

struct LatencyStats {
  double total = 0.0, mean = 0.0, p50 = 0.0, p90 = 0.0, p99 = 0.0, max = 0.0;

  static LatencyStats of(std::vector<double> v) {
    LatencyStats s;
    if (v.empty()) return s;
    std::sort(v.begin(), v.end());
    for (double x : v) s.total += x;
    s.mean = s.total / static_cast<double>(v.size());
    auto pct = [&](double p) {
      std::size_t i = static_cast<std::size_t>(std::ceil(p * static_cast<double>(v.size()))) - 1;
      return v[std::min(i, v.size() - 1)];
    };
    s.p50 = pct(0.5);
    s.p90 = pct(0.9);
    s.p99 = pct(0.99);
    s.max = v.back();
    return s;
  }
};

struct RunSummary {
  std::size_t scans = 0;
  std::size_t keyframes = 0;
  std::size_t detections = 0;
  std::size_t true_positives = 0;
  std::size_t false_positives = 0;
  std::size_t gt_loops = 0;
  std::size_t descriptors = 0;
  LatencyStats extract_ms, query_ms, verify_ms, total_ms;
};

struct RunOutput {
  std::vector<EvalRecord> records;
  std::vector<GroundTruthLoop> ground_truth;
  std::vector<PrRow> pr;
  RunSummary summary;
};

/// Scan files (.bin or .pcd) in a directory, sorted by file name.
inline std::vector<std::filesystem::path> list_scan_files(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw Error(ErrorCode::IoError, "not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    auto ext = e.path().extension().string();
    if (ext == ".bin" || ext == ".pcd") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

inline std::vector<Point3> read_scan_file(const std::filesystem::path& p) {
  return p.extension() == ".pcd" ? read_pcd_ascii(p) : read_kitti_bin(p);
}

/// Feeds keyframes through a LoopDetector and records one EvalRecord each.
/// Candidate scores are kept for every candidate so thresholds can be swept
/// afterwards.
class SequenceEvaluator {
 public:
  explicit SequenceEvaluator(Config cfg) : detector_(std::move(cfg)) {
    detector_.verify_options_mut().score_all = true;
  }

  const Config& config() const { return detector_.config(); }
  LoopDetector& detector() { return detector_; }

  const EvalRecord& process(const Keyframe& kf) {
    using clock = std::chrono::steady_clock;
    auto t0 = clock::now();
    FrameFeatures f = extract_features(kf.cloud, detector_.config(), kf.id);
    auto t1 = clock::now();
    return process(f, kf.anchor_pose, std::chrono::duration<double, std::milli>(t1 - t0).count());
  }

  /// Variant for pre-extracted features.
  const EvalRecord& process(const FrameFeatures& f, const RigidTransform& anchor, double extract_ms = 0.0) {
    auto det = detector_.detect(f);
    EvalRecord r;
    r.query_id = f.frame_id;
    r.extract_ms = extract_ms;
    r.query_ms = det.query_ms;
    r.verify_ms = det.verify_ms;
    if (!det.candidates.empty()) r.votes = det.candidates.front().votes;
    for (const auto& s : det.verification.scores) {
      r.candidates.push_back({s.frame_id, s.overlap, s.has_transform});
      r.overlap = std::max(r.overlap, s.overlap);
    }
    if (const auto& loop = det.verification.loop) {
      r.detected_id = loop->match_id;
      r.overlap = loop->overlap;
      r.votes = loop->votes;
      r.inliers = loop->inliers;
      auto it = anchor_of_.find(loop->match_id);
      if (it != anchor_of_.end()) {
        const RigidTransform truth = it->second.inverse() * anchor;
        r.error = pose_error(loop->transform, truth);
        if (loop->refined) r.refined_error = pose_error(*loop->refined, truth);
      }
    }
    detector_.insert(f);
    ids_.push_back(f.frame_id);
    anchors_.push_back(anchor);
    anchor_of_[f.frame_id] = anchor;
    descriptors_ += f.descriptors.size();
    records_.push_back(std::move(r));
    return records_.back();
  }

  RunOutput finish(std::size_t scans = 0) const {
    RunOutput out;
    out.records = records_;
    out.ground_truth = ground_truth_loops(ids_, anchors_, config().gt_radius, config().skip_recent);
    out.pr = pr_sweep(out.records, out.ground_truth, default_sweep_grid(), config().best_of_candidates);
    RunSummary& s = out.summary;
    s.scans = scans;
    s.keyframes = records_.size();
    s.descriptors = descriptors_;
    std::vector<double> ex, q, v, tot;
    for (std::size_t i = 0; i < records_.size(); ++i) {
      const auto& r = records_[i];
      ex.push_back(r.extract_ms);
      q.push_back(r.query_ms);
      v.push_back(r.verify_ms);
      tot.push_back(r.total_ms());
      const auto& truth = out.ground_truth[i].matches;
      s.gt_loops += !truth.empty();
      if (r.detected_id) {
        ++s.detections;
        bool ok = std::binary_search(truth.begin(), truth.end(), *r.detected_id);
        ++(ok ? s.true_positives : s.false_positives);
      }
    }
    s.extract_ms = LatencyStats::of(ex);
    s.query_ms = LatencyStats::of(q);
    s.verify_ms = LatencyStats::of(v);
    s.total_ms = LatencyStats::of(tot);
    return out;
  }

 private:
  LoopDetector detector_;
  std::vector<EvalRecord> records_;
  std::vector<std::int64_t> ids_;
  std::vector<RigidTransform> anchors_;
  std::map<std::int64_t, RigidTransform> anchor_of_;
  std::size_t descriptors_ = 0;
};

/// Replays a scan directory with its pose file.
inline RunOutput run_sequence(const Config& cfg, const std::filesystem::path& scan_dir,
                              const std::filesystem::path& pose_file) {
  auto files = list_scan_files(scan_dir);
  auto poses = read_pose_file(pose_file);
  if (files.empty()) throw Error(ErrorCode::IoError, "no .bin/.pcd scans in " + scan_dir.string());
  if (poses.size() < files.size())
    throw Error(ErrorCode::IoError, "pose file has " + std::to_string(poses.size()) + " poses for " +
                                        std::to_string(files.size()) + " scans");
  SequenceEvaluator eval(cfg);
  KeyframeAccumulator acc(cfg.n_accumulate);
  Keyframe kf;
  for (std::size_t i = 0; i < files.size(); ++i) {
    Scan s;
    s.points = read_scan_file(files[i]);
    s.index = static_cast<std::int64_t>(i);
    s.pose = poses[i] * cfg.extrinsic;
    if (acc.push(std::move(s), kf)) eval.process(kf);
  }
  if (acc.flush(kf)) eval.process(kf);
  return eval.finish(files.size());
}

}  // namespace stdesc
