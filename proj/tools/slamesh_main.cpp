// slamesh command-line front end: run, synth, eval-traj, eval-mesh, version.

#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "slamesh/error.hpp"
#include "slamesh/eval.hpp"
#include "slamesh/io.hpp"
#include "slamesh/pipeline.hpp"
#include "slamesh/synth.hpp"

using namespace slamesh;

namespace {

int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::kConfigError:
    case ErrorCode::kInvalidParam: return 2;
    case ErrorCode::kIoError: return 3;
    case ErrorCode::kFormatError: return 4;
    case ErrorCode::kEmptyInput: return 5;
    case ErrorCode::kTrajectoryMismatch: return 6;
    default: return 1;
  }
}

std::vector<Pose> read_trajectory(const std::string& path, const std::string& format) {
  if (format == "tum") return read_trajectory_tum(path);
  if (format == "kitti") return read_trajectory_kitti(path);
  throw Error(ErrorCode::kConfigError, "trajectory format must be kitti or tum");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LiDAR odometry and meshing with per-cell Gaussian-process layers"};
  app.require_subcommand(1);

  // run ---------------------------------------------------------------------
  CLI::App* run = app.add_subcommand("run", "Process a scan sequence");
  std::string config_path;
  run->add_option("--config", config_path, "key = value config file; flags override it");
  // Every flag maps onto a config key so the file and the command line share
  // one parser. Flags are applied after the file.
  std::vector<std::pair<std::string, std::string>> run_values;
  const std::vector<std::pair<std::string, std::string>> run_flags = {
      {"input", "Directory of numbered scans"},
      {"format", "kitti-bin or ply-dir"},
      {"cell-size", "Cell edge length in meters"},
      {"grid", "Vertices per layer side"},
      {"sigma-in", "GP input noise variance"},
      {"sigma-match", "Vertex validity variance threshold"},
      {"sigma-update", "Fusion variance gate"},
      {"threads", "Worker threads (default 8, or SLAMESH_THREADS)"},
      {"query-schedule", "Query length per registration iteration, e.g. 2,0"},
      {"min-range", "Drop points closer than this (m)"},
      {"max-range", "Drop points farther than this (m)"},
      {"downsample", "Voxel size for down-sampling; 0 = cell-size / grid"},
      {"fusion-rule", "precision or literal"},
      {"huber", "Huber scale in meters"},
      {"max-thickness", "Skip edge/corner cells in registration above this ratio, or 'off'"},
      {"out-traj", "Trajectory output file"},
      {"traj-format", "kitti or tum"},
      {"out-mesh", "Final mesh PLY"},
      {"report", "JSON run report"},
      {"export-every", "Write intermediate meshes every N frames"},
      {"export-dir", "Directory for intermediate meshes"},
  };
  std::vector<std::string> flag_storage(run_flags.size());
  std::vector<CLI::Option*> flag_options;
  for (std::size_t i = 0; i < run_flags.size(); ++i) {
    flag_options.push_back(run->add_option("--" + run_flags[i].first, flag_storage[i], run_flags[i].second));
  }
  bool no_combine = false;
  run->add_flag("--no-combine", no_combine, "Solve with raw correspondences instead of per-layer constraints");
  bool quiet = false;
  run->add_flag("-q,--quiet", quiet, "No per-frame progress lines");

  // synth -------------------------------------------------------------------
  CLI::App* synth = app.add_subcommand("synth", "Generate a simulated LiDAR sequence with ground truth");
  std::string scene = "corridor", synth_out;
  std::size_t frames = 100;
  std::uint64_t seed = 1;
  double noise = 0.02, gt_range = 30.0, gt_spacing = 0.05;
  synth->add_option("--scene", scene, "corridor, boxes or ramp")->check(CLI::IsMember({"corridor", "boxes", "ramp"}));
  synth->add_option("--frames", frames, "Number of frames")->check(CLI::PositiveNumber);
  synth->add_option("--seed", seed, "Noise seed");
  synth->add_option("--noise", noise, "Range noise sigma (m)")->check(CLI::NonNegativeNumber);
  synth->add_option("--gt-range", gt_range, "Visibility range of the ground-truth cloud (m)");
  synth->add_option("--gt-spacing", gt_spacing, "Ground-truth surface sample spacing (m)");
  synth->add_option("--out", synth_out, "Output directory")->required();

  // eval-traj ---------------------------------------------------------------
  CLI::App* eval_traj = app.add_subcommand("eval-traj", "Relative pose error and ATE of a trajectory");
  std::string est_path, gt_path, traj_format = "kitti";
  eval_traj->add_option("--est", est_path, "Estimated trajectory")->required();
  eval_traj->add_option("--gt", gt_path, "Ground-truth trajectory")->required();
  eval_traj->add_option("--format", traj_format, "kitti or tum");

  // eval-mesh ---------------------------------------------------------------
  CLI::App* eval_mesh = app.add_subcommand("eval-mesh", "Mesh precision / recall / F1 against a point cloud");
  std::string mesh_path, cloud_path;
  double d = 0.3, density = 100.0;
  std::uint64_t mesh_seed = 0;
  eval_mesh->add_option("--mesh", mesh_path, "Mesh PLY")->required();
  eval_mesh->add_option("--gt-cloud", cloud_path, "Ground-truth point cloud PLY")->required();
  eval_mesh->add_option("--d", d, "Distance threshold (m)")->check(CLI::PositiveNumber);
  eval_mesh->add_option("--density", density, "Mesh samples per square meter")->check(CLI::PositiveNumber);
  eval_mesh->add_option("--seed", mesh_seed, "Sampling seed");

  CLI::App* version = app.add_subcommand("version", "Print the version");

  CLI11_PARSE(app, argc, argv);

  try {
    if (version->parsed()) {
      std::cout << "slamesh " << SLAMESH_VERSION << '\n';
      return 0;
    }

    if (run->parsed()) {
      PipelineConfig cfg;
      bool threads_set = false;
      if (!config_path.empty()) {
        PipelineConfig probe;
        probe.threads = 0;
        apply_config_file(config_path, probe);
        threads_set = probe.threads != 0;
        apply_config_file(config_path, cfg);
      }
      for (std::size_t i = 0; i < run_flags.size(); ++i) {
        if (flag_options[i]->count() == 0) continue;
        apply_config_value(run_flags[i].first, flag_storage[i], cfg);
        if (run_flags[i].first == "threads") threads_set = true;
      }
      if (!threads_set) {
        if (const char* env = std::getenv("SLAMESH_THREADS"); env != nullptr && *env != '\0') {
          apply_config_value("threads", env, cfg);
        }
      }
      if (no_combine) cfg.registration.combine = false;
      if (cfg.input.empty()) throw Error(ErrorCode::kConfigError, "--input is required");

      const SequenceResult result = run_sequence(cfg, [&](const FrameReport& f) {
        if (quiet) return;
        std::fprintf(stderr, "frame %5zu  %7.1f ms  corr %6zu/%4zu%s\n", f.frame, f.total_ms(),
                     f.raw_correspondences, f.combined_constraints, f.degraded ? "  DEGRADED" : "");
      });
      std::size_t degraded = 0;
      for (const FrameReport& f : result.frames) degraded += f.degraded ? 1 : 0;
      std::printf("frames %zu  degraded %zu  wall %.1f s  mesh %zu vertices / %zu faces\n", result.frames.size(),
                  degraded, result.wall_ms / 1000.0, result.mesh.vertices.size(), result.mesh.faces.size());
      return 0;
    }

    if (synth->parsed()) {
      SynthOptions opts;
      opts.scene = parse_scene_kind(scene);
      opts.frames = frames;
      opts.seed = seed;
      opts.pattern.noise_sigma = noise;
      opts.gt_max_range = gt_range;
      opts.gt_spacing = gt_spacing;
      ThreadPool pool(std::thread::hardware_concurrency() > 0 ? std::thread::hardware_concurrency() : 1);
      write_synthetic_dataset(opts, synth_out, &pool);
      std::printf("wrote %zu frames of '%s' to %s\n", frames, scene.c_str(), synth_out.c_str());
      return 0;
    }

    if (eval_traj->parsed()) {
      const std::vector<Pose> est = read_trajectory(est_path, traj_format);
      const std::vector<Pose> gt = read_trajectory(gt_path, traj_format);
      const std::vector<double> lengths = default_segment_lengths(gt);
      const RelativePoseError rpe = relative_pose_error(est, gt, lengths);
      std::printf("segment_lengths_m %g..%g\n", lengths.front(), lengths.back());
      std::printf("segments %zu\n", rpe.segments);
      std::printf("translation_pct %.4f\n", rpe.translation_pct);
      std::printf("rotation_deg_per_100m %.4f\n", rpe.rotation_deg_per_100m);
      std::printf("ate_rmse_m %.4f\n", absolute_trajectory_rmse(est, gt));
      return 0;
    }

    if (eval_mesh->parsed()) {
      const TriangleMesh mesh = read_mesh_ply(mesh_path);
      const std::vector<Point3> cloud = read_point_cloud_ply(cloud_path);
      ThreadPool pool(std::thread::hardware_concurrency() > 0 ? std::thread::hardware_concurrency() : 1);
      const MeshScore s = mesh_prf(mesh, cloud, d, density, mesh_seed, &pool);
      std::printf("d %.3f  density %.0f  precision %.2f  recall %.2f  f1 %.2f\n", d, density, s.precision, s.recall,
                  s.f1);
      for (double alt : {50.0, 200.0}) {
        if (alt == density) continue;
        const MeshScore a = mesh_prf(mesh, cloud, d, alt, mesh_seed, &pool);
        std::printf("d %.3f  density %.0f  precision %.2f  recall %.2f  f1 %.2f\n", d, alt, a.precision, a.recall,
                    a.f1);
      }
      return 0;
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error [%s]: %s\n", std::string(to_string(e.code())).c_str(), e.what());
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
