#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string_view>
#include <vector>

#include "slamesh/geometry.hpp"
#include "slamesh/types.hpp"

namespace slamesh {

class ThreadPool;

/// Rectangle centered at `center`, spanned by the unit in-plane axes u and
/// normal x u, with half extents along each.
struct PlanePatch {
  Point3 center = Point3::Zero();
  Vec3 normal = Vec3::UnitZ();
  Vec3 u = Vec3::UnitX();
  double half_u = 1.0;
  double half_v = 1.0;

  Vec3 v() const { return normal.cross(u); }
};

struct Box {
  Point3 min = Point3::Zero();
  Point3 max = Point3::Ones();

  /// The six faces with outward normals.
  std::vector<PlanePatch> faces() const;
};

struct Scene {
  std::vector<PlanePatch> planes;
  std::vector<Box> boxes;

  /// Throws InvalidParam on non-unit normals, u not orthogonal to the normal,
  /// non-positive or non-finite extents.
  void validate() const;
  /// Distance along the unit direction `dir` to the nearest surface in
  /// (0, max_range]. A ray starting inside a box hits its inner wall.
  std::optional<double> intersect(const Point3& origin, const Vec3& dir, double max_range) const;
  /// Every surface of the scene as rectangles.
  std::vector<PlanePatch> surfaces() const;
};

struct BeamPattern {
  std::vector<double> vertical_deg;  // sorted ascending
  double horizontal_res_deg = 0.2;
  double max_range = 100.0;
  double noise_sigma = 0.02;

  /// 64 beams evenly spaced in [-24.8, 2] degrees.
  static BeamPattern hdl64();
  std::size_t columns() const;
  std::size_t ray_count() const { return vertical_deg.size() * columns(); }
  void validate() const;
};

/// Unit ray direction in the sensor frame for beam `row`, column `col`.
Vec3 beam_direction(const BeamPattern& pattern, std::size_t row, std::size_t col);

/// Casts every ray of `pattern` from the sensor pose; hits are perturbed
/// along the ray by Gaussian noise and returned in the sensor frame. Each beam
/// row draws from its own engine seeded from (seed, row), so the output is
/// bitwise identical for every thread count.
RawScan simulate_scan(const Scene& scene, const Pose& sensor_pose, const BeamPattern& pattern, std::uint64_t seed,
                      ThreadPool* pool = nullptr);

enum class SceneKind { kCorridor, kBoxes, kRamp };
SceneKind parse_scene_kind(std::string_view name);
std::string_view scene_name(SceneKind kind);

/// Scene sized for `frames` frames of the matching trajectory.
Scene make_scene(SceneKind kind, std::size_t frames);
/// Sensor poses, starting at identity. Forward motion of 0.5 m per frame with
/// a smooth yaw oscillation whose per-frame change stays below 1 degree.
std::vector<Pose> make_trajectory(SceneKind kind, std::size_t frames);

/// Uniform samples of the scene surfaces on a `spacing` lattice, kept when at
/// least one pose sees them unoccluded within `max_range` and inside the
/// pattern's vertical field of view.
std::vector<Point3> visible_surface_cloud(const Scene& scene, const std::vector<Pose>& poses,
                                          const BeamPattern& pattern, double spacing, double max_range,
                                          ThreadPool* pool = nullptr);

struct SynthOptions {
  SceneKind scene = SceneKind::kCorridor;
  std::size_t frames = 100;
  std::uint64_t seed = 1;
  BeamPattern pattern = BeamPattern::hdl64();
  double gt_spacing = 0.05;
  double gt_max_range = 30.0;
};

struct SynthSequence {
  std::vector<Pose> poses;
  std::vector<RawScan> scans;
};

SynthSequence generate_sequence(const Scene& scene, const std::vector<Pose>& poses, const BeamPattern& pattern,
                                std::uint64_t seed, ThreadPool* pool = nullptr);

/// Writes `<out>/velodyne/NNNNNN.bin`, `<out>/poses.txt` (KITTI) and
/// `<out>/gt_cloud.ply`.
void write_synthetic_dataset(const SynthOptions& opts, const std::filesystem::path& out, ThreadPool* pool = nullptr);

}  // namespace slamesh
