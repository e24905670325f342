#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string_view>
#include <vector>

#include "slamesh/geometry.hpp"
#include "slamesh/types.hpp"

namespace slamesh {

// ---------------------------------------------------------------------------
// Point preprocessing
// ---------------------------------------------------------------------------

enum class DownsampleMode {
  kFirstPoint,  // first point encountered in each voxel survives
  kCentroid,    // voxel centroid, emitted in order of first occurrence
};

std::vector<Point3> downsample(std::span<const Point3> points, double resolution,
                               DownsampleMode mode = DownsampleMode::kFirstPoint);
RawScan downsample(const RawScan& scan, double resolution,
                   DownsampleMode mode = DownsampleMode::kFirstPoint);

/// Keeps points whose distance from the origin lies in [min_range, max_range].
std::vector<Point3> filter_range(std::span<const Point3> points, double min_range, double max_range);

std::vector<Point3> transform_points(const Pose& T, std::span<const Point3> points);

using CellBuckets = std::map<CellIndex, std::vector<Point3>>;

/// Buckets points by floor division; iteration order is sorted CellIndex.
CellBuckets assign_to_cells(std::span<const Point3> points, double cell_size);

// ---------------------------------------------------------------------------
// KITTI Velodyne scans
// ---------------------------------------------------------------------------

RawScan read_kitti_bin(const std::filesystem::path& path);
/// Writes (x, y, z, 0) float32 records.
void write_kitti_bin(std::span<const Point3> points, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// PLY
// ---------------------------------------------------------------------------

enum class PlyFormat { kAscii, kBinary };

void write_mesh_ply(const TriangleMesh& mesh, const std::filesystem::path& path,
                    PlyFormat format = PlyFormat::kBinary);
/// Reads vertex x/y/z (any numeric type), an optional `quality` scalar and an
/// optional face list. Accepts ascii and binary_little_endian.
TriangleMesh read_mesh_ply(const std::filesystem::path& path);

void write_point_cloud_ply(std::span<const Point3> points, const std::filesystem::path& path,
                           PlyFormat format = PlyFormat::kBinary);
std::vector<Point3> read_point_cloud_ply(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Trajectories
// ---------------------------------------------------------------------------

/// One line per pose: the 12 row-major entries of [R|t].
void write_trajectory_kitti(std::span<const Pose> poses, const std::filesystem::path& path);
std::vector<Pose> read_trajectory_kitti(const std::filesystem::path& path);
std::string format_kitti_pose(const Pose& pose);

/// "timestamp tx ty tz qx qy qz qw" lines. Frame indices stand in for missing
/// timestamps.
void write_trajectory_tum(std::span<const Pose> poses, std::span<const double> timestamps,
                          const std::filesystem::path& path);
std::vector<Pose> read_trajectory_tum(const std::filesystem::path& path,
                                      std::vector<double>* timestamps = nullptr);

// ---------------------------------------------------------------------------
// Sequence directories
// ---------------------------------------------------------------------------

enum class SequenceFormat { kKittiBin, kPlyDir };

SequenceFormat parse_sequence_format(std::string_view name);

/// Numbered frame files (`000000.bin`, `12.ply`, ...) sorted by their numeric
/// stem.
std::vector<std::filesystem::path> list_frames(const std::filesystem::path& dir, SequenceFormat format);
RawScan read_frame(const std::filesystem::path& path, SequenceFormat format, std::size_t frame_index);

}  // namespace slamesh
