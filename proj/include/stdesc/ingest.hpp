#pragma once

#include <algorithm>
#include <charconv>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "stdesc/cell_index.hpp"
#include "stdesc/error.hpp"
#include "stdesc/geometry.hpp"

namespace stdesc {

struct Scan {
  std::vector<Point3> points;  // sensor frame
  std::int64_t index = 0;
  RigidTransform pose;  // sensor-to-world
};

struct Keyframe {
  std::int64_t id = 0;
  std::vector<Point3> cloud;  // anchor (first scan) frame
  RigidTransform anchor_pose;
  std::int64_t first_scan = 0;
  std::int64_t last_scan = 0;
};

namespace detail {

inline std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw Error(ErrorCode::IoError, "read failed for " + path.string());
  return std::move(ss).str();
}

inline std::vector<std::string> split_ws(const std::string& line) {
  std::istringstream ss(line);
  std::vector<std::string> out;
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

inline bool parse_double(const std::string& s, double& v) {
  const char* b = s.data();
  const char* e = b + s.size();
  if (b != e && *b == '+') ++b;
  auto [ptr, ec] = std::from_chars(b, e, v);
  return ec == std::errc() && ptr == e && b != e;
}

}  // namespace detail

/// KITTI velodyne scan: little-endian float32 records (x, y, z, intensity).
inline std::vector<Point3> read_kitti_bin(const std::filesystem::path& path) {
  static_assert(std::endian::native == std::endian::little, "KITTI reader assumes a little-endian host");
  const std::string bytes = detail::read_file_bytes(path);
  if (bytes.size() % 16 != 0)
    throw Error(ErrorCode::MalformedRecord, path.string() + ": length " + std::to_string(bytes.size()) +
                                                " is not a multiple of 16");
  std::vector<Point3> pts;
  pts.reserve(bytes.size() / 16);
  for (std::size_t off = 0; off < bytes.size(); off += 16) {
    float rec[4];
    std::memcpy(rec, bytes.data() + off, sizeof(rec));
    Point3 p(rec[0], rec[1], rec[2]);
    if (p.allFinite()) pts.push_back(p);
  }
  return pts;
}

inline void write_kitti_bin(const std::filesystem::path& path, const std::vector<Point3>& pts) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  for (const auto& p : pts) {
    float rec[4] = {static_cast<float>(p.x()), static_cast<float>(p.y()), static_cast<float>(p.z()), 0.0f};
    out.write(reinterpret_cast<const char*>(rec), sizeof(rec));
  }
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

/// PCD v0.7 with DATA ascii. Rows containing NaN coordinates are skipped.
inline std::vector<Point3> read_pcd_ascii(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());

  std::vector<std::string> fields;
  std::vector<int> counts;
  std::string line;
  bool have_data = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    auto tok = detail::split_ws(line);
    if (tok.empty()) continue;
    if (tok[0] == "FIELDS") {
      fields.assign(tok.begin() + 1, tok.end());
    } else if (tok[0] == "COUNT") {
      for (std::size_t i = 1; i < tok.size(); ++i) counts.push_back(std::stoi(tok[i]));
    } else if (tok[0] == "DATA") {
      if (tok.size() < 2 || tok[1] != "ascii")
        throw Error(ErrorCode::UnsupportedFormat, path.string() + ": only DATA ascii is supported");
      have_data = true;
      break;
    }
  }
  if (!have_data) throw Error(ErrorCode::UnsupportedFormat, path.string() + ": missing DATA line");
  if (counts.empty()) counts.assign(fields.size(), 1);
  if (counts.size() != fields.size())
    throw Error(ErrorCode::UnsupportedFormat, path.string() + ": FIELDS/COUNT mismatch");

  int col[3] = {-1, -1, -1};
  int column = 0;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (fields[i] == "x") col[0] = column;
    if (fields[i] == "y") col[1] = column;
    if (fields[i] == "z") col[2] = column;
    column += counts[i];
  }
  if (col[0] < 0 || col[1] < 0 || col[2] < 0)
    throw Error(ErrorCode::UnsupportedFormat, path.string() + ": x/y/z fields required");

  std::vector<Point3> pts;
  while (std::getline(in, line)) {
    auto tok = detail::split_ws(line);
    if (tok.empty()) continue;
    if (static_cast<int>(tok.size()) < column)
      throw Error(ErrorCode::MalformedRecord, path.string() + ": short row");
    Point3 p;
    for (int a = 0; a < 3; ++a) {
      double v = 0;
      if (!detail::parse_double(tok[col[a]], v))
        throw Error(ErrorCode::MalformedRecord, path.string() + ": bad number '" + tok[col[a]] + "'");
      p[a] = v;
    }
    if (p.allFinite()) pts.push_back(p);
  }
  return pts;
}

inline void write_pcd_ascii(const std::filesystem::path& path, const std::vector<Point3>& pts) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << "# .PCD v0.7 - Point Cloud Data file format\n"
      << "VERSION 0.7\nFIELDS x y z\nSIZE 4 4 4\nTYPE F F F\nCOUNT 1 1 1\n"
      << "WIDTH " << pts.size() << "\nHEIGHT 1\nVIEWPOINT 0 0 0 1 0 0 0\n"
      << "POINTS " << pts.size() << "\nDATA ascii\n";
  out << std::setprecision(9);
  for (const auto& p : pts) out << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

/// Pose file: either KITTI rows (12 values, row-major 3x4) or
/// "timestamp tx ty tz qx qy qz qw" rows. Blank and '#' lines are ignored.
inline std::vector<RigidTransform> read_pose_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::vector<RigidTransform> poses;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    auto tok = detail::split_ws(line);
    if (tok.empty()) continue;
    std::vector<double> v(tok.size());
    for (std::size_t i = 0; i < tok.size(); ++i)
      if (!detail::parse_double(tok[i], v[i]) || !std::isfinite(v[i]))
        throw Error(ErrorCode::MalformedRecord, path.string() + ":" + std::to_string(lineno) + ": bad number");
    RigidTransform T;
    if (v.size() == 12) {
      for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) T.R(r, c) = v[r * 4 + c];
        T.t[r] = v[r * 4 + 3];
      }
      T.R = project_to_rotation(T.R);
    } else if (v.size() == 8) {
      Eigen::Quaterniond q(v[7], v[4], v[5], v[6]);
      if (q.norm() < 1e-12)
        throw Error(ErrorCode::MalformedRecord, path.string() + ":" + std::to_string(lineno) + ": zero quaternion");
      T.R = q.normalized().toRotationMatrix();
      T.t = Vec3(v[1], v[2], v[3]);
    } else {
      throw Error(ErrorCode::MalformedRecord,
                  path.string() + ":" + std::to_string(lineno) + ": expected 12 or 8 values");
    }
    poses.push_back(T);
  }
  return poses;
}

inline void write_pose_file_kitti(const std::filesystem::path& path, const std::vector<RigidTransform>& poses) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << std::setprecision(17);
  for (const auto& T : poses) {
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 4; ++c) out << (c < 3 ? T.R(r, c) : T.t[r]) << ((r == 2 && c == 3) ? '\n' : ' ');
  }
}

namespace detail {

inline Keyframe accumulate_all(std::span<const Scan> scans, std::int64_t id) {
  if (scans.empty()) throw Error(ErrorCode::EmptyInput, "no scans to accumulate");
  Keyframe kf;
  kf.id = id;
  kf.anchor_pose = scans.front().pose;
  kf.first_scan = scans.front().index;
  kf.last_scan = scans.back().index;
  const RigidTransform world_to_anchor = kf.anchor_pose.inverse();
  std::size_t total = 0;
  for (const auto& s : scans) total += s.points.size();
  kf.cloud.reserve(total);
  for (const auto& s : scans) {
    const RigidTransform rel = world_to_anchor * s.pose;
    for (const auto& p : s.points) kf.cloud.push_back(rel.apply(p));
  }
  if (kf.cloud.empty()) throw Error(ErrorCode::EmptyInput, "keyframe has no points");
  return kf;
}

}  // namespace detail

/// Transforms the first n_accumulate scans into the first scan's frame and
/// concatenates them.
inline Keyframe accumulate_keyframe(std::span<const Scan> scans, std::size_t n_accumulate, std::int64_t id = 0) {
  if (n_accumulate == 0) throw Error(ErrorCode::InvalidArgument, "n_accumulate must be positive");
  return detail::accumulate_all(scans.first(std::min(n_accumulate, scans.size())), id);
}

/// Streams scans into keyframes of n scans each, with increasing ids.
class KeyframeAccumulator {
 public:
  explicit KeyframeAccumulator(std::size_t n_accumulate) : n_(n_accumulate) {
    if (n_ == 0) throw Error(ErrorCode::InvalidArgument, "n_accumulate must be positive");
  }

  /// Returns true when a keyframe is ready in `out`.
  bool push(Scan scan, Keyframe& out) {
    pending_.push_back(std::move(scan));
    if (pending_.size() < n_) return false;
    out = detail::accumulate_all(pending_, next_id_++);
    pending_.clear();
    return true;
  }

  /// Emits a short trailing keyframe, if any scans are pending.
  bool flush(Keyframe& out) {
    if (pending_.empty()) return false;
    out = detail::accumulate_all(pending_, next_id_++);
    pending_.clear();
    return true;
  }

 private:
  std::size_t n_;
  std::int64_t next_id_ = 0;
  std::vector<Scan> pending_;
};

/// One centroid per occupied leaf cell, ordered by ascending cell index.
inline std::vector<Point3> voxel_downsample(std::span<const Point3> cloud, double leaf) {
  if (!(leaf > 0.0)) throw Error(ErrorCode::NonPositiveLeaf, "leaf must be positive");
  struct Acc {
    Vec3 sum = Vec3::Zero();
    std::size_t n = 0;
  };
  std::unordered_map<CellIndex, Acc, CellIndexHash> cells;
  cells.reserve(cloud.size() / 4 + 1);
  for (const auto& p : cloud) {
    auto& a = cells[CellIndex::of(p, leaf)];
    a.sum += p;
    ++a.n;
  }
  std::vector<std::pair<CellIndex, Point3>> out;
  out.reserve(cells.size());
  for (const auto& [cell, a] : cells) out.emplace_back(cell, a.sum / static_cast<double>(a.n));
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<Point3> pts;
  pts.reserve(out.size());
  for (auto& [cell, p] : out) pts.push_back(p);
  return pts;
}

}  // namespace stdesc
