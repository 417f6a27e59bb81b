#pragma once

#include <random>
#include <vector>

#include "stdesc/descriptor.hpp"
#include "stdesc/geometry.hpp"

namespace synth {

inline stdesc::Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0, 1);
  return stdesc::Vec3(n(rng), n(rng), n(rng)).normalized();
}

inline stdesc::Mat3 random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  return Eigen::Quaterniond(n(rng), n(rng), n(rng), n(rng)).normalized().toRotationMatrix();
}

inline stdesc::RigidTransform random_transform(std::mt19937_64& rng, double translation = 50.0) {
  std::uniform_real_distribution<double> u(-translation, translation);
  return {random_rotation(rng), stdesc::Vec3(u(rng), u(rng), u(rng))};
}

/// Canonical triangle on three random key points inside a cube of edge `extent`.
inline stdesc::TriangleDescriptor random_descriptor(std::mt19937_64& rng, std::int64_t frame_id, double extent = 20.0) {
  std::uniform_real_distribution<double> u(0, extent);
  stdesc::KeyPoint k[3];
  for (auto& kp : k) {
    kp.position = stdesc::Point3(u(rng), u(rng), u(rng));
    kp.normal = random_unit(rng);
  }
  return stdesc::make_triangle(k[0], k[1], k[2], frame_id);
}

inline stdesc::TriangleDescriptor transformed(const stdesc::TriangleDescriptor& d, const stdesc::RigidTransform& T) {
  stdesc::TriangleDescriptor o = d;
  o.p1 = T.apply(d.p1);
  o.p2 = T.apply(d.p2);
  o.p3 = T.apply(d.p3);
  o.n1 = T.rotate(d.n1);
  o.n2 = T.rotate(d.n2);
  o.n3 = T.rotate(d.n3);
  o.centroid = T.apply(d.centroid);
  return o;
}

/// Frames drawn from a shared pool of shapes so that hash cells collide
/// across frames; each copy is placed by a random rigid motion.
inline std::vector<std::vector<stdesc::TriangleDescriptor>> pooled_frames(std::mt19937_64& rng, std::size_t frames,
                                                                          std::size_t per_frame, std::size_t pool) {
  std::vector<stdesc::TriangleDescriptor> shapes;
  for (std::size_t i = 0; i < pool; ++i) shapes.push_back(random_descriptor(rng, 0, 8.0));
  std::uniform_int_distribution<std::size_t> pick(0, pool - 1);
  std::vector<std::vector<stdesc::TriangleDescriptor>> out(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    for (std::size_t i = 0; i < per_frame; ++i) {
      auto d = transformed(shapes[pick(rng)], random_transform(rng));
      d.frame_id = static_cast<std::int64_t>(f);
      out[f].push_back(d);
    }
  }
  return out;
}

}  // namespace synth
