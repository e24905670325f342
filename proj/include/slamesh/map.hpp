#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "slamesh/gp.hpp"
#include "slamesh/types.hpp"

namespace slamesh {

class ThreadPool;

enum class FusionRule {
  kPrecision,        // inverse-variance weighting (information filter)
  kLiteralVariance,  // weights proportional to sigma^2, kept for comparison runs
};

struct FusionConfig {
  double sigma_update_sq = 1.0;
  FusionRule rule = FusionRule::kPrecision;
};

/// Fuses `scan_layer` into `map_layer` vertex by vertex. A scan vertex with
/// variance >= sigma_update_sq is ignored; a map vertex at or above the gate
/// is replaced outright; otherwise predictions are combined and the variance
/// follows 1/s^2 = 1/s_map^2 + 1/s_scan^2. Returns true if anything changed.
/// Throws GridMismatch when the layers do not share cell, axis and grid.
bool fuse_into(Layer& map_layer, const Layer& scan_layer, const FusionConfig& cfg);

/// Value form of fuse_into.
Layer fuse_layer(const Layer& map_layer, const Layer& scan_layer, const FusionConfig& cfg);

struct Cell {
  CellIndex index;
  std::array<std::optional<Layer>, 3> layers;  // indexed by axis
  std::size_t points_seen = 0;

  const Layer* layer(Axis a) const { return layers[axis_id(a)] ? &*layers[axis_id(a)] : nullptr; }
  std::size_t layer_count() const;
};

struct MapStats {
  std::size_t cells = 0;
  std::size_t layers = 0;
  std::size_t vertices = 0;
  std::size_t bytes = 0;
};

/// Bytes charged per vertex beyond its two stored doubles (prediction and
/// variance): amortized layer header, cell slot and hash-node overhead.
inline constexpr std::size_t kVertexOverheadBytes = 8;

/// Global mesh map: cells in a hash map keyed by CellIndex. Reads and the
/// integration step alternate; integrate_scan must not overlap any reader.
class MeshMap {
 public:
  MeshMap(double cell_size, int grid, FusionConfig fusion = {});

  double cell_size() const { return cell_size_; }
  int grid() const { return grid_; }
  const FusionConfig& fusion() const { return fusion_; }

  bool empty() const { return cells_.empty(); }
  std::size_t cell_count() const { return cells_.size(); }

  const Cell* find(const CellIndex& index) const;
  const Layer* find_layer(const CellIndex& index, Axis axis) const;

  /// Inserts layers for new (cell, axis) pairs and fuses the rest. Cells are
  /// never removed. Per-cell work runs on `pool` when given.
  void integrate_scan(std::span<const Layer> scan_layers, std::int64_t frame = 0, ThreadPool* pool = nullptr);

  /// Adds to the bookkeeping count of raw points observed in a cell.
  void note_points(const CellIndex& index, std::size_t count);

  std::vector<CellIndex> sorted_indices() const;
  const std::unordered_map<CellIndex, Cell, CellIndexHash>& cells() const { return cells_; }

 private:
  double cell_size_;
  int grid_;
  FusionConfig fusion_;
  std::unordered_map<CellIndex, Cell, CellIndexHash> cells_;
};

MapStats map_stats(const MeshMap& map);

}  // namespace slamesh
