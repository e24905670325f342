#include "slamesh/mesh.hpp"

#include <array>
#include <cmath>
#include <unordered_map>

#include "slamesh/error.hpp"
#include "slamesh/map.hpp"

namespace slamesh {

namespace {

constexpr double kDegenerateArea = 1e-12;
constexpr double kMergeTolerance = 1e-6;

struct GridTriangle {
  std::array<int, 3> i;
  std::array<int, 3> j;
};

// Both triangles of square (si, sj).
std::array<GridTriangle, 2> square_triangles(int si, int sj) {
  return {GridTriangle{{si, si + 1, si + 1}, {sj, sj, sj + 1}},
          GridTriangle{{si, si + 1, si}, {sj, sj + 1, sj + 1}}};
}

bool triangle_valid(const Layer& layer, const GridTriangle& t, double sigma_match_sq) {
  for (int k = 0; k < 3; ++k) {
    if (!layer.is_valid(t.i[k], t.j[k], sigma_match_sq)) return false;
  }
  return true;
}

bool touches(const GridTriangle& t, int i, int j) {
  for (int k = 0; k < 3; ++k) {
    if (t.i[k] == i && t.j[k] == j) return true;
  }
  return false;
}

/// Visits valid triangles incident to (i, j); returns false from `fn` to stop.
template <typename Fn>
void for_each_incident(const Layer& layer, int i, int j, double sigma_match_sq, Fn&& fn) {
  const int last = layer.grid - 2;
  for (int si = std::max(i - 1, 0); si <= std::min(i, last); ++si) {
    for (int sj = std::max(j - 1, 0); sj <= std::min(j, last); ++sj) {
      for (const GridTriangle& t : square_triangles(si, sj)) {
        if (touches(t, i, j) && triangle_valid(layer, t, sigma_match_sq)) {
          if (!fn(t)) return;
        }
      }
    }
  }
}

}  // namespace

std::vector<Face> connect_layer(const Layer& layer, double sigma_match_sq) {
  std::vector<Face> faces;
  const int g = layer.grid;
  faces.reserve(static_cast<std::size_t>(2 * (g - 1) * (g - 1)));
  for (int si = 0; si + 1 < g; ++si) {
    for (int sj = 0; sj + 1 < g; ++sj) {
      for (const GridTriangle& t : square_triangles(si, sj)) {
        if (!triangle_valid(layer, t, sigma_match_sq)) continue;
        faces.push_back({static_cast<std::uint32_t>(layer.index(t.i[0], t.j[0])),
                         static_cast<std::uint32_t>(layer.index(t.i[1], t.j[1])),
                         static_cast<std::uint32_t>(layer.index(t.i[2], t.j[2]))});
      }
    }
  }
  // (u, v, axis) is right-handed, so counter-clockwise in (i, j) is
  // counter-clockwise seen from +axis.
  return faces;
}

Vec3 face_normal(const Point3& v0, const Point3& v1, const Point3& v2) {
  const Vec3 n = (v1 - v0).cross(v2 - v0);
  const double len = n.norm();
  if (len <= kDegenerateArea) throw Error(ErrorCode::kDegenerateFace, "triangle is degenerate");
  return n / len;
}

bool has_valid_incident_face(const Layer& layer, int i, int j, double sigma_match_sq) {
  if (!layer.is_valid(i, j, sigma_match_sq)) return false;
  bool found = false;
  for_each_incident(layer, i, j, sigma_match_sq, [&](const GridTriangle&) {
    found = true;
    return false;
  });
  return found;
}

std::optional<Vec3> try_smoothed_normal(const Layer& layer, int i, int j, double sigma_match_sq,
                                        const Point3& sensor_origin) {
  if (!layer.is_valid(i, j, sigma_match_sq)) return std::nullopt;
  Vec3 sum = Vec3::Zero();
  bool any = false;
  for_each_incident(layer, i, j, sigma_match_sq, [&](const GridTriangle& t) {
    const Point3 a = layer.vertex(t.i[0], t.j[0]);
    sum += (layer.vertex(t.i[1], t.j[1]) - a).cross(layer.vertex(t.i[2], t.j[2]) - a);
    any = true;
    return true;
  });
  const double len = sum.norm();
  if (!any || len <= kDegenerateArea) return std::nullopt;
  Vec3 n = sum / len;
  if (n.dot(sensor_origin - layer.vertex(i, j)) < 0.0) n = -n;
  return n;
}

Vec3 smoothed_normal(const Layer& layer, int i, int j, double sigma_match_sq, const Point3& sensor_origin) {
  std::optional<Vec3> n = try_smoothed_normal(layer, i, j, sigma_match_sq, sensor_origin);
  if (!n) {
    throw Error(ErrorCode::kNoValidFace,
                "vertex (" + std::to_string(i) + ", " + std::to_string(j) + ") has no valid incident face");
  }
  return *n;
}

// ---------------------------------------------------------------------------

namespace {

struct GlobalLocation {
  int axis;
  std::int64_t u;
  std::int64_t v;
  bool operator==(const GlobalLocation&) const = default;
};

struct GlobalLocationHash {
  std::size_t operator()(const GlobalLocation& k) const noexcept {
    std::uint64_t h = static_cast<std::uint64_t>(k.u) * 0x9E3779B97F4A7C15ULL;
    h ^= static_cast<std::uint64_t>(k.v) + 0x7F4A7C159E3779B9ULL + (h << 6) + (h >> 2);
    return static_cast<std::size_t>(h ^ static_cast<std::uint64_t>(k.axis));
  }
};

class MeshBuilder {
 public:
  explicit MeshBuilder(double sigma_match_sq) : sigma_match_sq_(sigma_match_sq) {}

  void add(const Layer& layer) {
    const int g = layer.grid;
    std::vector<std::uint32_t> remap(layer.size(), kNone);
    for (int i = 0; i < g; ++i) {
      for (int j = 0; j < g; ++j) {
        if (!layer.is_valid(i, j, sigma_match_sq_)) continue;
        const double pred = layer.predictions[layer.index(i, j)];
        const bool border = i == 0 || j == 0 || i == g - 1 || j == g - 1;
        std::uint32_t id = kNone;
        GlobalLocation key{};
        if (border) {
          key = {axis_id(layer.axis), static_cast<std::int64_t>(layer.cell[location_u(layer.axis)]) * (g - 1) + i,
                 static_cast<std::int64_t>(layer.cell[location_v(layer.axis)]) * (g - 1) + j};
          auto it = shared_.find(key);
          if (it != shared_.end()) {
            for (std::uint32_t candidate : it->second) {
              if (std::abs(mesh_.vertices[candidate][axis_id(layer.axis)] - pred) <= kMergeTolerance) {
                id = candidate;
                break;
              }
            }
          }
        }
        if (id == kNone) {
          id = static_cast<std::uint32_t>(mesh_.vertices.size());
          mesh_.vertices.push_back(layer.vertex(i, j));
          mesh_.variances.push_back(layer.variances[layer.index(i, j)]);
          if (border) shared_[key].push_back(id);
        }
        remap[layer.index(i, j)] = id;
      }
    }
    for (const Face& f : connect_layer(layer, sigma_match_sq_)) {
      const Face mapped{remap[f[0]], remap[f[1]], remap[f[2]]};
      // Emitted faces never repeat a vertex index.
      if (mapped[0] == mapped[1] || mapped[1] == mapped[2] || mapped[0] == mapped[2]) continue;
      mesh_.faces.push_back(mapped);
    }
  }

  TriangleMesh take() { return std::move(mesh_); }

 private:
  static constexpr std::uint32_t kNone = 0xffffffffu;
  double sigma_match_sq_;
  TriangleMesh mesh_;
  std::unordered_map<GlobalLocation, std::vector<std::uint32_t>, GlobalLocationHash> shared_;
};

}  // namespace

TriangleMesh extract_mesh(const MeshMap& map, double sigma_match_sq) {
  MeshBuilder builder(sigma_match_sq);
  for (const CellIndex& idx : map.sorted_indices()) {
    const Cell& cell = *map.find(idx);
    for (const auto& layer : cell.layers) {
      if (layer) builder.add(*layer);
    }
  }
  return builder.take();
}

TriangleMesh extract_mesh(const std::vector<const Layer*>& layers, double sigma_match_sq) {
  MeshBuilder builder(sigma_match_sq);
  for (const Layer* layer : layers) builder.add(*layer);
  return builder.take();
}

}  // namespace slamesh
