#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "slamesh/geometry.hpp"
#include "slamesh/types.hpp"

namespace slamesh {

enum class AxisMode {
  kSingle,  // the one axis with minimal coordinate variance
  kFull,    // every axis whose projection is single-valued (up to 3 layers)
};

struct GpConfig {
  int grid = 6;  // g; a layer holds g*g vertices
  double sigma_in_sq = 0.02;
  double kappa = 1.0;
  std::size_t min_points = 4;
  std::size_t max_points = 100;
  AxisMode axis_mode = AxisMode::kSingle;

  /// Throws InvalidParam when an invariant is violated.
  void validate() const;
};

struct GpSample {
  Vec2 location;
  double value = 0.0;
};

struct GpPrediction {
  std::vector<double> mean;
  std::vector<double> variance;
};

/// exp(-kappa * |a - b|), Euclidean distance in the location plane.
double kernel(const Vec2& a, const Vec2& b, double kappa = 1.0);

/// Posterior mean and variance at `queries`. Observations are mean-centered
/// before regression and the mean is added back, so the prior pulls toward
/// the local average instead of toward zero. Solved with a Cholesky factor.
GpPrediction gp_predict(std::span<const GpSample> inputs, std::span<const Vec2> queries, const GpConfig& cfg);

/// GP output for one prediction axis inside one cell: a g x g grid of
/// vertices whose locations are fixed and whose predictions carry variance.
///
/// Grid position (i, j) sits at location (u0 + i*pitch, v0 + j*pitch) where
/// (u0, v0) is the cell's lower corner in the location plane and
/// pitch = cell_size / (g - 1), so both cell borders are sampled and
/// neighbouring cells share border locations.
struct Layer {
  CellIndex cell;
  Axis axis = Axis::kZ;
  int grid = 6;
  double cell_size = 1.6;
  std::vector<double> predictions;
  std::vector<double> variances;
  /// Running sum of variances; only maintained by the literal fusion rule.
  std::vector<double> weight_sums;
  std::uint32_t observation_count = 0;
  /// Frame index of the most recent change, for association age limits.
  std::int64_t last_update = 0;
  /// Smallest over middle principal variance of the points the layer was
  /// built from: near 0 for a flat patch, larger at edges and corners.
  double thickness_ratio = 0.0;

  /// A layer with zero predictions and prior variance 1 everywhere.
  static Layer blank(const CellIndex& cell, Axis axis, int grid, double cell_size);

  std::size_t size() const { return static_cast<std::size_t>(grid) * static_cast<std::size_t>(grid); }
  std::size_t index(int i, int j) const { return static_cast<std::size_t>(i) * grid + j; }
  double pitch() const { return cell_size / (grid - 1); }
  Vec2 location(int i, int j) const;
  Point3 vertex(int i, int j) const;
  bool is_valid(int i, int j, double sigma_match_sq) const { return variances[index(i, j)] < sigma_match_sq; }
  /// Same cell, axis and grid geometry.
  bool same_grid(const Layer& other) const;
};

/// Places `prediction` on `axis` and `location` on the two remaining axes.
Point3 to_world(Axis axis, const Vec2& location, double prediction);

std::vector<Axis> select_axes(std::span<const Point3> points, const GpConfig& cfg, double cell_size);

/// False when the points are coincident or lie on a line (second principal
/// variance below 1e-4 of the first). Such a set fits any plane through the
/// line, so no axis yields a meaningful layer.
bool spans_surface(std::span<const Point3> points);

/// Eigenvalues of the points' scatter matrix, ascending.
Vec3 principal_variances(std::span<const Point3> points);

/// Runs the GP for each selected axis; collinear cells give no layers. Points are expected to lie inside
/// `cell`; inputs beyond cfg.max_points are thinned by a deterministic stride.
/// Layers are returned in axis order X, Y, Z.
std::vector<Layer> reconstruct_cell(const CellIndex& cell, std::span<const Point3> points, const GpConfig& cfg,
                                    double cell_size);

}  // namespace slamesh
