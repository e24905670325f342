#pragma once

#include <array>
#include <cmath>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string_view>
#include <vector>

#include "slamesh/geometry.hpp"

namespace slamesh {

/// Coordinate a layer predicts. The two remaining coordinates are the layer's
/// grid locations, taken in cyclic order so that (u, v, axis) is right-handed:
/// X -> (y, z), Y -> (z, x), Z -> (x, y).
enum class Axis : std::uint8_t { kX = 0, kY = 1, kZ = 2 };

inline constexpr std::array<Axis, 3> kAllAxes{Axis::kX, Axis::kY, Axis::kZ};

constexpr int axis_id(Axis a) { return static_cast<int>(a); }
constexpr int location_u(Axis a) { return (axis_id(a) + 1) % 3; }
constexpr int location_v(Axis a) { return (axis_id(a) + 2) % 3; }
std::string_view axis_name(Axis a);

/// Integer voxel coordinates: floor(coordinate / cell_size) per axis.
struct CellIndex {
  std::int32_t x = 0;
  std::int32_t y = 0;
  std::int32_t z = 0;

  auto operator<=>(const CellIndex&) const = default;

  std::int32_t operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
  CellIndex offset(Axis axis, std::int32_t steps) const {
    CellIndex c = *this;
    (axis == Axis::kX ? c.x : axis == Axis::kY ? c.y : c.z) += steps;
    return c;
  }
  Point3 lower_corner(double cell_size) const { return Point3(x, y, z) * cell_size; }

  static CellIndex of(const Point3& p, double cell_size) {
    return {static_cast<std::int32_t>(std::floor(p.x() / cell_size)),
            static_cast<std::int32_t>(std::floor(p.y() / cell_size)),
            static_cast<std::int32_t>(std::floor(p.z() / cell_size))};
  }
};

struct CellIndexHash {
  std::size_t operator()(const CellIndex& c) const noexcept {
    // splitmix64 finalizer over the packed coordinates.
    std::uint64_t h = static_cast<std::uint32_t>(c.x);
    h = h * 0x9E3779B97F4A7C15ULL ^ static_cast<std::uint32_t>(c.y);
    h = h * 0x9E3779B97F4A7C15ULL ^ static_cast<std::uint32_t>(c.z);
    h ^= h >> 30;
    h *= 0xBF58476D1CE4E5B9ULL;
    h ^= h >> 27;
    h *= 0x94D049BB133111EBULL;
    h ^= h >> 31;
    return static_cast<std::size_t>(h);
  }
};

/// One LiDAR sweep in the sensor frame.
struct RawScan {
  std::vector<Point3> points;
  std::size_t frame_index = 0;
  std::optional<double> timestamp;
  bool dropped = false;
};

using Face = std::array<std::uint32_t, 3>;

/// Indexed triangle mesh; `variances` holds the per-vertex sigma^2 that is
/// exported as the PLY `quality` property.
struct TriangleMesh {
  std::vector<Point3> vertices;
  std::vector<double> variances;
  std::vector<Face> faces;

  bool empty() const { return vertices.empty() && faces.empty(); }
  /// Unit normal of face `f`, oriented by winding.
  Vec3 face_normal(std::size_t f) const;
  double face_area(std::size_t f) const;
};

}  // namespace slamesh
