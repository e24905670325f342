#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "slamesh/geometry.hpp"
#include "slamesh/types.hpp"

namespace slamesh {

class ThreadPool;

struct RelativePoseError {
  double translation_pct = 0.0;        // mean over segments of |t_err| / L * 100
  double rotation_deg_per_100m = 0.0;  // mean over segments of angle / L, scaled to 100 m
  std::size_t segments = 0;
};

/// {100, ..., 800} m, or {10, ..., 80} m when the ground-truth path is shorter
/// than 800 m.
std::vector<double> default_segment_lengths(std::span<const Pose> gt);

/// Cumulative ground-truth arc length at every frame.
std::vector<double> trajectory_distances(std::span<const Pose> poses);

/// KITTI protocol with step 1: for every start frame and segment length L,
/// the first frame at least L further along the ground truth closes the
/// segment, and the relative motions are compared. Throws TrajectoryMismatch
/// for different lengths or fewer than two poses. Segments that never close
/// are skipped; zero segments give (0, 0).
RelativePoseError relative_pose_error(std::span<const Pose> est, std::span<const Pose> gt,
                                      std::span<const double> lengths);
RelativePoseError relative_pose_error(std::span<const Pose> est, std::span<const Pose> gt);

/// RMS of translation differences, no alignment (both trajectories start at
/// the same anchor).
double absolute_trajectory_rmse(std::span<const Pose> est, std::span<const Pose> gt);

/// Expected area * density points per face (floor plus a Bernoulli draw for
/// the remainder), placed uniformly by barycentric sampling.
std::vector<Point3> sample_mesh(const TriangleMesh& mesh, double density, std::uint64_t seed);

/// Exact nearest-neighbor distances from each query to `cloud` through a
/// uniform bucket grid.
class NearestNeighborIndex {
 public:
  NearestNeighborIndex(std::span<const Point3> cloud, double bucket_size);
  /// Distance to the nearest cloud point; infinity if none lies within
  /// `max_distance`.
  double distance_within(const Point3& q, double max_distance) const;
  std::size_t size() const { return points_.size(); }

 private:
  std::int64_t key(std::int64_t x, std::int64_t y, std::int64_t z) const;

  double bucket_;
  std::vector<Point3> points_;
  std::vector<std::uint32_t> order_;
  std::vector<std::int64_t> keys_;  // sorted bucket key per entry of order_
};

struct MeshScore {
  double precision = 0.0;  // percent
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t mesh_samples = 0;
};

double f1_score(double precision, double recall);

/// Precision: share of mesh samples within d of the ground truth. Recall:
/// share of ground-truth points within d of a mesh sample. Throws EmptyInput
/// if either side is empty.
MeshScore mesh_prf(const TriangleMesh& mesh, std::span<const Point3> gt_cloud, double d, double density = 100.0,
                   std::uint64_t seed = 0, ThreadPool* pool = nullptr);

}  // namespace slamesh
