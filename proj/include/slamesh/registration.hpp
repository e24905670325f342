#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "slamesh/geometry.hpp"
#include "slamesh/gp.hpp"
#include "slamesh/io.hpp"
#include "slamesh/map.hpp"
#include "slamesh/types.hpp"

namespace slamesh {

class ThreadPool;

/// How raw points become layers: voxel down-sampling, cell bucketing and the
/// per-cell GP.
struct ReconstructionConfig {
  double cell_size = 1.6;
  GpConfig gp;
  /// Down-sampling voxel; 0 selects cell_size / grid.
  double downsample_resolution = 0.0;
  DownsampleMode downsample_mode = DownsampleMode::kFirstPoint;

  double resolution() const { return downsample_resolution > 0.0 ? downsample_resolution : cell_size / gp.grid; }
  void validate() const;
};

/// Transforms sensor-frame points by `pose`, down-samples, buckets and
/// reconstructs every cell that holds at least gp.min_points points. Layers
/// come back sorted by (cell, axis) regardless of thread count.
std::vector<Layer> reconstruct_scan(std::span<const Point3> sensor_points, const Pose& pose,
                                    const ReconstructionConfig& cfg, ThreadPool* pool = nullptr);

struct RegistrationConfig {
  /// Query length b (cells along the prediction axis) per outer iteration.
  std::vector<int> query_schedule{2, 0};
  int lm_max_iters = 20;
  double lm_tolerance = 1e-6;
  bool combine = true;
  /// Weight each combined constraint by its correspondence count.
  bool count_weighting = false;
  double sigma_match_sq = 0.5;
  /// Huber scale in meters; disabled when unset.
  std::optional<double> huber_scale;
  /// Query length for the single retry after an empty association.
  int fallback_query = 3;
  /// Skip map layers not updated within this many frames; unlimited if unset.
  std::optional<std::int64_t> max_association_age;
  /// Scan layers with a larger Layer::thickness_ratio (edges, corners) are
  /// left out of association; disabled if unset.
  std::optional<double> max_thickness_ratio = 0.02;

  void validate() const;
};

struct LayerId {
  CellIndex cell;
  Axis axis = Axis::kZ;
  auto operator<=>(const LayerId&) const = default;
};

struct Correspondence {
  Point3 scan_point;  // v_p, world frame before the correction is applied
  Point3 map_point;   // v_q
  Vec3 normal;        // smoothed, unit length, facing the sensor
  LayerId layer;      // scan layer the vertex came from
};

/// Average of one layer's linearized point-to-mesh terms. Residual and
/// Jacobian at any pose are the exact means of the member terms, obtained
/// from the first and second moments below.
struct CombinedConstraint {
  LayerId layer;
  double mean_offset = 0.0;                    // mean(n^T v_q)
  Vec3 mean_normal = Vec3::Zero();             // mean(n)
  Point3 mean_scan_point = Point3::Zero();     // mean(v_p)
  Mat3 normal_point_moment = Mat3::Zero();     // mean(n v_p^T)
  std::size_t count = 0;
};

/// Location-keyed association. For every scan vertex on a valid scan face,
/// map layers of the same axis in the same cell and up to `query_length`
/// cells either way along the axis are probed at the identical grid position;
/// the candidate nearest along the axis wins. Scan layers above
/// cfg.max_thickness_ratio are skipped. Throws NoOverlap when nothing matches.
/// `current_frame` only matters when cfg.max_association_age is set.
std::vector<Correspondence> associate(std::span<const Layer> scan_layers, const MeshMap& map, int query_length,
                                      const RegistrationConfig& cfg, const Point3& sensor_origin,
                                      std::int64_t current_frame = 0, ThreadPool* pool = nullptr);

/// n^T (T v_p - v_q).
double residual(const Correspondence& c, const Pose& T);
/// [n^T (-(R v_p + t)x), n^T]: rotation block first, left perturbation.
Row6 residual_jacobian(const Correspondence& c, const Pose& T);

std::vector<CombinedConstraint> combine_constraints(std::span<const Correspondence> correspondences);
double residual(const CombinedConstraint& c, const Pose& T);
Row6 residual_jacobian(const CombinedConstraint& c, const Pose& T);

struct SolveSummary {
  Pose pose;
  int iterations = 0;        // LM iterations run
  int accepted_steps = 0;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  std::vector<double> accepted_costs;  // cost after every accepted step
};

/// Levenberg-Marquardt on the sum of squared residuals (Huber-weighted when
/// configured). Throws DegenerateProblem when fewer than 6 constraints exist
/// or the normal matrix is rank deficient at `initial`.
SolveSummary solve_lm(std::span<const Correspondence> constraints, const Pose& initial,
                      const RegistrationConfig& cfg);
SolveSummary solve_lm(std::span<const CombinedConstraint> constraints, const Pose& initial,
                      const RegistrationConfig& cfg);

struct RegistrationStats {
  std::size_t raw_correspondences = 0;       // last outer iteration
  std::size_t combined_constraints = 0;      // last outer iteration (0 when combine is off)
  int outer_iterations = 0;
  int lm_iterations = 0;                     // summed over outer iterations
  double final_cost = 0.0;
  bool used_fallback_query = false;
  double reconstruct_ms = 0.0;
  double associate_ms = 0.0;
  double solve_ms = 0.0;
};

struct RegistrationResult {
  Pose pose;
  RegistrationStats stats;
};

/// Aligns a sensor-frame scan to the map starting from `guess`. Each entry of
/// cfg.query_schedule reconstructs the scan at the current estimate,
/// associates with that query length, optionally combines per layer and runs
/// LM. An empty association is retried once with cfg.fallback_query before
/// NoOverlap propagates.
RegistrationResult register_scan(const RawScan& scan, const MeshMap& map, const Pose& guess,
                                 const RegistrationConfig& cfg, const ReconstructionConfig& recon,
                                 ThreadPool* pool = nullptr, std::int64_t current_frame = 0);

}  // namespace slamesh
