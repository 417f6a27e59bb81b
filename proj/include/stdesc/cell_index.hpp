#pragma once

#include <array>
#include <cmath>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>

#include "stdesc/geometry.hpp"

namespace stdesc {

/// Integer coordinates of a cubic cell: floor(coordinate / edge) per axis.
struct CellIndex {
  std::int64_t x = 0;
  std::int64_t y = 0;
  std::int64_t z = 0;

  static CellIndex of(const Point3& p, double edge) {
    return {static_cast<std::int64_t>(std::floor(p.x() / edge)),
            static_cast<std::int64_t>(std::floor(p.y() / edge)),
            static_cast<std::int64_t>(std::floor(p.z() / edge))};
  }

  CellIndex offset(std::int64_t dx, std::int64_t dy, std::int64_t dz) const { return {x + dx, y + dy, z + dz}; }

  auto operator<=>(const CellIndex&) const = default;
};

struct CellIndexHash {
  std::size_t operator()(const CellIndex& c) const noexcept {
    // Large-prime spatial hash; collisions are resolved by the map.
    std::uint64_t h = static_cast<std::uint64_t>(c.x) * 73856093ULL;
    h ^= static_cast<std::uint64_t>(c.y) * 19349669ULL;
    h ^= static_cast<std::uint64_t>(c.z) * 83492791ULL;
    h ^= h >> 29;
    return static_cast<std::size_t>(h);
  }
};

}  // namespace stdesc
