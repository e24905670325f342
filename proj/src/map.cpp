#include "slamesh/map.hpp"

#include <algorithm>

#include "slamesh/error.hpp"
#include "slamesh/parallel.hpp"

namespace slamesh {

bool fuse_into(Layer& map_layer, const Layer& scan_layer, const FusionConfig& cfg) {
  if (!map_layer.same_grid(scan_layer)) {
    throw Error(ErrorCode::kGridMismatch, "cannot fuse layers of different cell, axis or grid");
  }
  const bool literal = cfg.rule == FusionRule::kLiteralVariance;
  if (literal && map_layer.weight_sums.size() != map_layer.size()) map_layer.weight_sums = map_layer.variances;

  bool changed = false;
  for (std::size_t k = 0; k < map_layer.size(); ++k) {
    const double s_scan = scan_layer.variances[k];
    if (!(s_scan < cfg.sigma_update_sq)) continue;
    const double f_scan = scan_layer.predictions[k];
    double& f_map = map_layer.predictions[k];
    double& s_map = map_layer.variances[k];
    changed = true;
    if (!(s_map < cfg.sigma_update_sq)) {
      f_map = f_scan;
      s_map = s_scan;
      if (literal) map_layer.weight_sums[k] = s_scan;
      continue;
    }
    if (literal) {
      double& w = map_layer.weight_sums[k];
      f_map = (f_map * w + f_scan * s_scan) / (w + s_scan);
      w += s_scan;
    } else {
      const double p_map = 1.0 / s_map, p_scan = 1.0 / s_scan;
      f_map = (f_map * p_map + f_scan * p_scan) / (p_map + p_scan);
    }
    s_map = 1.0 / (1.0 / s_map + 1.0 / s_scan);
  }
  if (changed) {
    ++map_layer.observation_count;
    map_layer.last_update = std::max(map_layer.last_update, scan_layer.last_update);
  }
  return changed;
}

Layer fuse_layer(const Layer& map_layer, const Layer& scan_layer, const FusionConfig& cfg) {
  Layer out = map_layer;
  fuse_into(out, scan_layer, cfg);
  return out;
}

std::size_t Cell::layer_count() const {
  return static_cast<std::size_t>(std::count_if(layers.begin(), layers.end(), [](const auto& l) { return l.has_value(); }));
}

// ---------------------------------------------------------------------------

MeshMap::MeshMap(double cell_size, int grid, FusionConfig fusion)
    : cell_size_(cell_size), grid_(grid), fusion_(fusion) {
  if (!(cell_size > 0.0)) throw Error(ErrorCode::kInvalidParam, "cell_size must be > 0");
  if (grid < 2) throw Error(ErrorCode::kInvalidParam, "grid must be >= 2");
}

const Cell* MeshMap::find(const CellIndex& index) const {
  auto it = cells_.find(index);
  return it == cells_.end() ? nullptr : &it->second;
}

const Layer* MeshMap::find_layer(const CellIndex& index, Axis axis) const {
  const Cell* cell = find(index);
  return cell == nullptr ? nullptr : cell->layer(axis);
}

void MeshMap::note_points(const CellIndex& index, std::size_t count) {
  auto it = cells_.find(index);
  if (it != cells_.end()) it->second.points_seen += count;
}

void MeshMap::integrate_scan(std::span<const Layer> scan_layers, std::int64_t frame, ThreadPool* pool) {
  for (const Layer& layer : scan_layers) {
    if (layer.grid != grid_ || layer.cell_size != cell_size_ || layer.size() != layer.predictions.size()) {
      throw Error(ErrorCode::kGridMismatch, "scan layer grid does not match the map");
    }
  }
  // Group by cell so each task owns one cell. Node-based storage keeps the
  // Cell addresses stable while new cells are inserted here.
  std::vector<std::pair<Cell*, std::vector<const Layer*>>> groups;
  std::unordered_map<CellIndex, std::size_t, CellIndexHash> group_of;
  for (const Layer& layer : scan_layers) {
    auto [git, fresh] = group_of.try_emplace(layer.cell, groups.size());
    if (fresh) {
      auto [cit, inserted] = cells_.try_emplace(layer.cell);
      if (inserted) cit->second.index = layer.cell;
      groups.push_back({&cit->second, {}});
    }
    groups[git->second].second.push_back(&layer);
  }
  parallel_for(pool, groups.size(), [&](std::size_t g) {
    Cell& cell = *groups[g].first;
    for (const Layer* scan : groups[g].second) {
      std::optional<Layer>& slot = cell.layers[axis_id(scan->axis)];
      if (!slot) {
        slot = *scan;
        slot->last_update = frame;
        if (fusion_.rule == FusionRule::kLiteralVariance) slot->weight_sums = slot->variances;
      } else if (fuse_into(*slot, *scan, fusion_)) {
        slot->last_update = frame;
      }
    }
  });
}

std::vector<CellIndex> MeshMap::sorted_indices() const {
  std::vector<CellIndex> out;
  out.reserve(cells_.size());
  for (const auto& kv : cells_) out.push_back(kv.first);
  std::sort(out.begin(), out.end());
  return out;
}

MapStats map_stats(const MeshMap& map) {
  MapStats s;
  s.cells = map.cell_count();
  for (const auto& [idx, cell] : map.cells()) {
    for (const auto& layer : cell.layers) {
      if (!layer) continue;
      ++s.layers;
      s.vertices += layer->size();
    }
  }
  s.bytes = s.vertices * (2 * sizeof(double) + kVertexOverheadBytes);
  return s;
}

}  // namespace slamesh
