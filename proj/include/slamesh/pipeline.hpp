#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "slamesh/geometry.hpp"
#include "slamesh/io.hpp"
#include "slamesh/map.hpp"
#include "slamesh/parallel.hpp"
#include "slamesh/registration.hpp"
#include "slamesh/types.hpp"

namespace slamesh {

enum class TrajectoryFormat { kKitti, kTum };

struct PipelineConfig {
  ReconstructionConfig reconstruction;  // cell size, grid and GP settings
  RegistrationConfig registration;
  FusionConfig fusion;
  std::size_t threads = 8;
  double min_range = 2.0;
  double max_range = 100.0;

  std::filesystem::path input;
  SequenceFormat format = SequenceFormat::kKittiBin;
  std::filesystem::path out_trajectory;  // empty: not written
  std::filesystem::path out_mesh;
  std::filesystem::path report;
  TrajectoryFormat trajectory_format = TrajectoryFormat::kKitti;
  PlyFormat mesh_format = PlyFormat::kBinary;
  /// Write `mesh_NNNNNN.ply` into export_dir every N frames; 0 disables.
  std::size_t export_every = 0;
  std::filesystem::path export_dir;

  double cell_size() const { return reconstruction.cell_size; }
  void validate() const;
};

struct FrameReport {
  std::size_t frame = 0;
  Pose pose;
  std::size_t input_points = 0;
  std::size_t layers = 0;
  double ingest_ms = 0.0;
  double reconstruct_ms = 0.0;
  double associate_ms = 0.0;
  double solve_ms = 0.0;
  double integrate_ms = 0.0;
  double export_ms = 0.0;
  std::size_t raw_correspondences = 0;
  std::size_t combined_constraints = 0;
  int lm_iterations = 0;
  bool used_fallback_query = false;
  bool degraded = false;
  std::string degraded_reason;

  double total_ms() const {
    return ingest_ms + reconstruct_ms + associate_ms + solve_ms + integrate_ms + export_ms;
  }
};

/// Frame-by-frame odometry and meshing state. Frame 0 anchors the map at the
/// identity; later frames register against the map from a constant-velocity
/// guess, are reconstructed again at the registered pose and fused in.
class Pipeline {
 public:
  explicit Pipeline(PipelineConfig cfg);

  /// Range-filters the sensor-frame scan and runs one frame. NoOverlap and
  /// DegenerateProblem mark the frame degraded and keep the guess.
  FrameReport process_frame(const RawScan& scan);

  const PipelineConfig& config() const { return cfg_; }
  const std::vector<Pose>& trajectory() const { return trajectory_; }
  const MeshMap& map() const { return map_; }
  TriangleMesh mesh() const;
  ThreadPool& pool() { return *pool_; }

  /// Guess for the next frame from the last two poses.
  Pose next_guess() const;

 private:
  PipelineConfig cfg_;
  std::unique_ptr<ThreadPool> pool_;
  MeshMap map_;
  std::vector<Pose> trajectory_;
};

struct SequenceResult {
  std::vector<Pose> trajectory;
  TriangleMesh mesh;
  std::vector<FrameReport> frames;
  MapStats map;
  double wall_ms = 0.0;
};

/// Processes every frame of cfg.input in order and writes the configured
/// outputs. Throws ConfigError when the directory has no frames.
SequenceResult run_sequence(const PipelineConfig& cfg,
                            const std::function<void(const FrameReport&)>& on_frame = {});

/// Run report as JSON text: {"frames": [...], "totals": {...}}.
std::string report_json(const PipelineConfig& cfg, const SequenceResult& result);

/// Reads `key = value` lines (`#` starts a comment) into `cfg`. Keys mirror
/// the command-line flags without the leading dashes.
void apply_config_file(const std::filesystem::path& path, PipelineConfig& cfg);
void apply_config_value(const std::string& key, const std::string& value, PipelineConfig& cfg);

/// Comma-separated query lengths, e.g. "2,0".
std::vector<int> parse_query_schedule(const std::string& text);

}  // namespace slamesh
