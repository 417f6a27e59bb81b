#pragma once

// Box-and-wall scenes for end-to-end tests. Every place is a ground slab plus
// axis-aligned boxes whose faces sit on half-integer coordinates, so they fall
// in the middle of 1 m voxels. Places are far apart and never see each other.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "stdesc/geometry.hpp"
#include "stdesc/ingest.hpp"

namespace synth {

using stdesc::Point3;
using stdesc::RigidTransform;
using stdesc::Vec3;

struct PlaceOptions {
  double half_extent = 20.0;  // ground covers [-h, h)^2
  double spacing = 0.2;
  double noise = 0.004;
  int boxes = 12;
};

struct Place {
  Vec3 origin = Vec3::Zero();
  std::vector<Point3> points;  // world frame
};

inline void sample_rect(std::vector<Point3>& out, const Vec3& corner, const Vec3& a, const Vec3& b, double spacing,
                        double noise, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, noise);
  const int na = static_cast<int>(std::round(a.norm() / spacing));
  const int nb = static_cast<int>(std::round(b.norm() / spacing));
  for (int i = 0; i < na; ++i)
    for (int j = 0; j < nb; ++j) {
      Point3 p = corner + a * ((i + 0.5) / na) + b * ((j + 0.5) / nb);
      out.push_back(p + Vec3(n(rng), n(rng), n(rng)));
    }
}

/// Deterministic scene for a given seed, centered at `origin`.
inline Place make_place(const Vec3& origin, std::uint64_t seed, const PlaceOptions& opt = {}) {
  std::mt19937_64 rng(seed * 7919 + 17);
  Place pl;
  pl.origin = origin;
  const double h = opt.half_extent;
  const double ground_z = -1.5;
  sample_rect(pl.points, origin + Vec3(-h, -h, ground_z), Vec3(2 * h, 0, 0), Vec3(0, 2 * h, 0), opt.spacing,
              opt.noise, rng);

  struct Box {
    int cx, cy;
    double hx, hy, height;
  };
  std::vector<Box> boxes;
  std::uniform_int_distribution<int> pos(-static_cast<int>(h) + 5, static_cast<int>(h) - 5);
  std::uniform_int_distribution<int> half(1, 3);
  std::uniform_int_distribution<int> tall(2, 5);
  int guard = 0;
  while (static_cast<int>(boxes.size()) < opt.boxes && guard++ < 1000) {
    Box b{pos(rng), pos(rng), half(rng) + 0.5, half(rng) + 0.5, static_cast<double>(tall(rng))};
    // keep a clear area around the sensor path and between boxes
    if (std::abs(b.cy) < b.hy + 4) continue;
    bool clash = false;
    for (const auto& o : boxes)
      if (std::abs(b.cx - o.cx) < b.hx + o.hx + 2 && std::abs(b.cy - o.cy) < b.hy + o.hy + 2) clash = true;
    if (clash) continue;
    boxes.push_back(b);
  }
  for (const auto& b : boxes) {
    const Vec3 c = origin + Vec3(b.cx, b.cy, ground_z);
    const Vec3 ex(2 * b.hx, 0, 0), ey(0, 2 * b.hy, 0), ez(0, 0, b.height);
    const Vec3 lo = c + Vec3(-b.hx, -b.hy, 0);
    sample_rect(pl.points, lo, ex, ez, opt.spacing, opt.noise, rng);
    sample_rect(pl.points, lo + ey, ex, ez, opt.spacing, opt.noise, rng);
    sample_rect(pl.points, lo, ey, ez, opt.spacing, opt.noise, rng);
    sample_rect(pl.points, lo + ex, ey, ez, opt.spacing, opt.noise, rng);
    sample_rect(pl.points, lo + ez, ex, ey, opt.spacing, opt.noise, rng);
  }
  return pl;
}

/// Exact yaw by a multiple of 90 degrees.
inline stdesc::Mat3 yaw_quarter(int quarters) {
  stdesc::Mat3 R = stdesc::Mat3::Identity();
  static const int c[4] = {1, 0, -1, 0}, s[4] = {0, 1, 0, -1};
  const int q = ((quarters % 4) + 4) % 4;
  R(0, 0) = c[q];
  R(0, 1) = -s[q];
  R(1, 0) = s[q];
  R(1, 1) = c[q];
  return R;
}

/// A pass through a place: n scans moving one metre per scan along the
/// heading. Scan i sees the place points with index % n == i.
inline std::vector<stdesc::Scan> traverse(const Place& pl, const Vec3& start_offset, int heading_quarters,
                                          std::size_t n_scans, std::int64_t first_index) {
  std::vector<stdesc::Scan> scans;
  const stdesc::Mat3 R = yaw_quarter(heading_quarters);
  for (std::size_t i = 0; i < n_scans; ++i) {
    stdesc::Scan s;
    s.index = first_index + static_cast<std::int64_t>(i);
    s.pose.R = R;
    s.pose.t = pl.origin + start_offset + R * Vec3(static_cast<double>(i), 0, 0);
    const RigidTransform inv = s.pose.inverse();
    for (std::size_t k = i; k < pl.points.size(); k += n_scans) s.points.push_back(inv.apply(pl.points[k]));
    scans.push_back(std::move(s));
  }
  return scans;
}

/// Forward pass heading +x, starting west of the place center.
inline std::vector<stdesc::Scan> forward_pass(const Place& pl, std::size_t n, std::int64_t first_index) {
  return traverse(pl, Vec3(-5, -2, 0), 0, n, first_index);
}

/// Opposite-direction revisit, starting east of the center on the other lane.
inline std::vector<stdesc::Scan> reverse_pass(const Place& pl, std::size_t n, std::int64_t first_index) {
  return traverse(pl, Vec3(5, 2, 0), 2, n, first_index);
}

/// Ground-truth transform taking revisit-anchor coordinates into the
/// first-visit anchor frame.
inline RigidTransform relative_truth(const RigidTransform& anchor_first, const RigidTransform& anchor_revisit) {
  return anchor_first.inverse() * anchor_revisit;
}

/// Sequence layout used by the replay tests: `loops` places visited forward,
/// `decoys` unrelated places, then the same `loops` places revisited in
/// reverse order and direction.
struct Sequence {
  std::vector<stdesc::Scan> scans;
  std::size_t loops = 0;
  std::size_t decoys = 0;
};

inline Sequence make_sequence(std::size_t loops, std::size_t decoys, std::size_t n_scans, std::uint64_t seed = 1,
                              const PlaceOptions& opt = {}) {
  Sequence seq;
  seq.loops = loops;
  seq.decoys = decoys;
  std::vector<Place> places;
  for (std::size_t i = 0; i < loops; ++i)
    places.push_back(make_place(Vec3(200.0 * static_cast<double>(i), 0, 0), seed * 1000 + i, opt));
  auto append = [&](std::vector<stdesc::Scan> s) {
    for (auto& x : s) seq.scans.push_back(std::move(x));
  };
  for (const auto& pl : places) append(forward_pass(pl, n_scans, static_cast<std::int64_t>(seq.scans.size())));
  for (std::size_t d = 0; d < decoys; ++d) {
    Place pl = make_place(Vec3(200.0 * static_cast<double>(d), 500, 0), seed * 1000 + 500 + d, opt);
    append(forward_pass(pl, n_scans, static_cast<std::int64_t>(seq.scans.size())));
  }
  for (std::size_t i = loops; i-- > 0;)
    append(reverse_pass(places[i], n_scans, static_cast<std::int64_t>(seq.scans.size())));
  return seq;
}

}  // namespace synth
