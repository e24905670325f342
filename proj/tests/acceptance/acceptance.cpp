// Acceptance suite: one PASS/FAIL line per criterion. Exits nonzero when any
// gating criterion fails; the dataset criterion reports SKIP without data.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gen.hpp"
#include "slamesh/error.hpp"
#include "slamesh/eval.hpp"
#include "slamesh/gp.hpp"
#include "slamesh/io.hpp"
#include "slamesh/map.hpp"
#include "slamesh/parallel.hpp"
#include "slamesh/pipeline.hpp"
#include "slamesh/registration.hpp"
#include "slamesh/synth.hpp"

using namespace slamesh;
using slamesh::testing::deg;
using slamesh::testing::Gen;
using slamesh::testing::kPi;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

struct Outcome {
  enum { kPass, kFail, kSkip } state;
  std::string detail;
};

Outcome verdict(bool ok, std::string detail) { return {ok ? Outcome::kPass : Outcome::kFail, std::move(detail)}; }

double translation_error(const Pose& a, const Pose& b) { return (a.translation() - b.translation()).norm(); }
double rotation_error_deg(const Pose& a, const Pose& b) {
  return rotation_angle(a.rotation().transpose() * b.rotation()) * 180.0 / kPi;
}

// ---------------------------------------------------------------------------
// Criterion 1: GP posterior against an explicit-inverse evaluation.

GpPrediction dense_oracle(const std::vector<GpSample>& in, const std::vector<Vec2>& q, double sigma_in_sq) {
  const auto n = static_cast<Eigen::Index>(in.size());
  double mean = 0.0;
  for (const auto& s : in) mean += s.value;
  mean /= static_cast<double>(n);
  Eigen::MatrixXd k(n, n);
  Eigen::VectorXd f(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    f(r) = in[r].value - mean;
    for (Eigen::Index c = 0; c < n; ++c) k(r, c) = std::exp(-(in[r].location - in[c].location).norm());
  }
  const Eigen::MatrixXd inv = (k + sigma_in_sq * Eigen::MatrixXd::Identity(n, n)).inverse();
  GpPrediction out;
  for (const Vec2& x : q) {
    Eigen::VectorXd kx(n);
    for (Eigen::Index r = 0; r < n; ++r) kx(r) = std::exp(-(in[r].location - x).norm());
    out.mean.push_back(mean + kx.dot(inv * f));
    out.variance.push_back(1.0 - kx.dot(inv * kx));
  }
  return out;
}

Outcome gp_oracle() {
  Gen g(101);
  const GpConfig cfg;
  double worst = 0.0;
  double library_s = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<GpSample> in(static_cast<std::size_t>(g.integer(1, 100)));
    for (auto& s : in) s = {Vec2(g.uniform(0, 1.6), g.uniform(0, 1.6)), g.uniform(-2, 2)};
    std::vector<Vec2> q(static_cast<std::size_t>(g.integer(1, 36)));
    for (auto& x : q) x = Vec2(g.uniform(-0.2, 1.8), g.uniform(-0.2, 1.8));
    const auto t0 = Clock::now();
    const GpPrediction p = gp_predict(in, q, cfg);
    library_s += seconds_since(t0);
    const GpPrediction o = dense_oracle(in, q, cfg.sigma_in_sq);
    for (std::size_t k = 0; k < q.size(); ++k) {
      worst = std::max(worst, std::abs(p.mean[k] - o.mean[k]) / std::max(1.0, std::abs(o.mean[k])));
      worst = std::max(worst, std::abs(p.variance[k] - o.variance[k]) / std::max(1.0, std::abs(o.variance[k])));
    }
  }
  return verdict(worst <= 1e-9 && library_s < 10.0,
                 fmt("200 instances, max rel err %.2e (<= 1e-9), %.3f s (< 10 s)", worst, library_s));
}

// ---------------------------------------------------------------------------
// Criterion 2: analytic Jacobian rows against central differences.

Outcome jacobian_fd() {
  Gen g(202);
  const double h = 1e-6;
  double worst = 0.0;
  int checked = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const Pose T = g.pose(deg(90), 10.0);
    std::vector<Correspondence> cs;
    const int n = g.integer(1, 8);
    for (int k = 0; k < n; ++k) cs.push_back({g.vec3(-10, 10), g.vec3(-10, 10), g.unit(), LayerId{}});
    const auto combined = combine_constraints(cs);
    const Row6 ja = residual_jacobian(cs[0], T);
    const Row6 jc = residual_jacobian(combined[0], T);
    for (int d = 0; d < 6; ++d) {
      Vec6 e = Vec6::Zero();
      e[d] = h;
      const Pose plus = retract(T, Twist::from_vector(e)), minus = retract(T, Twist::from_vector(-e));
      const double fa = (residual(cs[0], plus) - residual(cs[0], minus)) / (2 * h);
      const double fc = (residual(combined[0], plus) - residual(combined[0], minus)) / (2 * h);
      worst = std::max({worst, std::abs(fa - ja[d]), std::abs(fc - jc[d])});
    }
    checked += 2;
  }
  return verdict(worst <= 1e-5, fmt("%d raw+combined rows, max abs diff %.2e (<= 1e-5)", checked, worst));
}

// ---------------------------------------------------------------------------
// Criterion 3: register_scan on three orthogonal planes.

Scene three_plane_scene() {
  Scene s;
  PlanePatch floor;
  floor.center = {0.0, 0.0, -1.7};
  floor.normal = Vec3::UnitZ();
  floor.u = Vec3::UnitX();
  floor.half_u = floor.half_v = 15.0;
  PlanePatch wall_x;
  wall_x.center = {6.3, 0.0, 1.6};
  wall_x.normal = -Vec3::UnitX();
  wall_x.u = Vec3::UnitY();
  wall_x.half_u = 15.0;
  wall_x.half_v = 3.3;
  PlanePatch wall_y;
  wall_y.center = {0.0, 5.1, 1.6};
  wall_y.normal = -Vec3::UnitY();
  wall_y.u = Vec3::UnitZ();
  wall_y.half_u = 3.3;
  wall_y.half_v = 15.0;
  s.planes = {floor, wall_x, wall_y};
  s.validate();
  return s;
}

Outcome known_transform(ThreadPool& pool) {
  const Scene scene = three_plane_scene();
  BeamPattern pattern = BeamPattern::hdl64();
  pattern.noise_sigma = 0.0;
  const ReconstructionConfig recon;
  const RegistrationConfig cfg;
  MeshMap map(recon.cell_size, recon.gp.grid);
  const RawScan anchor = simulate_scan(scene, Pose::identity(), pattern, 1, &pool);
  map.integrate_scan(reconstruct_scan(anchor.points, Pose::identity(), recon, &pool));
  Gen g(303);
  int passed = 0;
  double worst_t = 0.0, worst_r = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const Pose truth = g.pose(deg(5), 0.5);
    const RawScan scan = simulate_scan(scene, truth, pattern, 100 + static_cast<std::uint64_t>(trial), &pool);
    try {
      const Pose est = register_scan(scan, map, Pose::identity(), cfg, recon, &pool).pose;
      const double et = translation_error(est, truth), er = rotation_error_deg(est, truth);
      worst_t = std::max(worst_t, et);
      worst_r = std::max(worst_r, er);
      if (et <= 1e-3 && er <= 0.05) ++passed;
    } catch (const Error&) {
      worst_t = worst_r = INFINITY;
    }
  }
  return verdict(passed == 100, fmt("%d/100 trials, worst %.2e m (<= 1e-3) %.4f deg (<= 0.05)", passed, worst_t,
                                    worst_r));
}

// ---------------------------------------------------------------------------
// Criteria 4, 5, 6, 8, 9: the simulated corridor.

struct Run {
  std::vector<Pose> trajectory;
  std::vector<double> frame_s;  // wall time of process_frame
  std::size_t raw = 0;
  std::size_t combined = 0;
  std::size_t degraded = 0;
  double total_s = 0.0;
  TriangleMesh mesh;
};

PipelineConfig corridor_config(std::size_t threads) {
  PipelineConfig cfg;
  cfg.threads = threads;
  return cfg;
}

Run run_pipeline(const PipelineConfig& cfg, const std::vector<RawScan>& scans, bool keep_mesh) {
  Pipeline pipeline(cfg);
  Run run;
  for (const RawScan& scan : scans) {
    const auto t0 = Clock::now();
    const FrameReport r = pipeline.process_frame(scan);
    run.frame_s.push_back(seconds_since(t0));
    run.raw += r.raw_correspondences;
    run.combined += r.combined_constraints;
    run.degraded += r.degraded ? 1 : 0;
  }
  for (double s : run.frame_s) run.total_s += s;
  run.trajectory = pipeline.trajectory();
  if (keep_mesh) run.mesh = pipeline.mesh();
  return run;
}

double mean_of(const std::vector<double>& v, std::size_t lo, std::size_t hi) {
  double sum = 0.0;
  for (std::size_t i = lo; i < hi; ++i) sum += v[i];
  return sum / static_cast<double>(hi - lo);
}

constexpr std::size_t kFrames = 100;

Outcome odometry(const Run& run, const std::vector<Pose>& gt) {
  const double ate = absolute_trajectory_rmse(run.trajectory, gt);
  const std::vector<double> lengths{10, 20, 30, 40, 50, 60, 70, 80};
  const RelativePoseError rpe = relative_pose_error(run.trajectory, gt, lengths);
  return verdict(ate < 0.05 && rpe.translation_pct < 0.5 && run.total_s < 60.0,
                 fmt("ATE %.4f m (< 0.05), RPE %.3f%% (< 0.5), %.1f s (< 60), %zu degraded", ate,
                     rpe.translation_pct, run.total_s, run.degraded));
}

Outcome mesh_quality(const Run& run, const Scene& scene, const std::vector<Pose>& gt, const BeamPattern& pattern,
                     ThreadPool& pool) {
  const std::vector<Point3> cloud = visible_surface_cloud(scene, gt, pattern, 0.05, pattern.max_range, &pool);
  const MeshScore s = mesh_prf(run.mesh, cloud, 0.1, 100.0, 0, &pool);
  return verdict(s.f1 >= 90.0, fmt("d 0.1: P %.2f R %.2f F1 %.2f (>= 90)", s.precision, s.recall, s.f1));
}

// Every frame is registered twice from the same map and guess, once per
// constraint form; the map then advances with the combined result.
Outcome combination(const Run& noisy, const std::vector<RawScan>& clean_scans) {
  const double ratio = static_cast<double>(noisy.combined) / static_cast<double>(noisy.raw);
  PipelineConfig cfg = corridor_config(8);
  Pipeline pipeline(cfg);
  RegistrationConfig raw_cfg = cfg.registration;
  raw_cfg.combine = false;
  double worst_t = 0.0, worst_r = 0.0;
  for (const RawScan& scan : clean_scans) {
    if (!pipeline.trajectory().empty()) {
      RawScan filtered = scan;
      filtered.points = filter_range(scan.points, cfg.min_range, cfg.max_range);
      const Pose guess = pipeline.next_guess();
      const auto frame = static_cast<std::int64_t>(pipeline.trajectory().size());
      const Pose a = register_scan(filtered, pipeline.map(), guess, cfg.registration, cfg.reconstruction,
                                   &pipeline.pool(), frame).pose;
      const Pose b =
          register_scan(filtered, pipeline.map(), guess, raw_cfg, cfg.reconstruction, &pipeline.pool(), frame).pose;
      worst_t = std::max(worst_t, translation_error(a, b));
      worst_r = std::max(worst_r, rotation_error_deg(a, b));
    }
    pipeline.process_frame(scan);
  }
  return verdict(ratio <= 0.10 && worst_t <= 1e-3 && worst_r <= 0.05,
                 fmt("combined/raw %.2f%% (<= 10), noise-free per-frame pose gap %.2e m (<= 1e-3) %.4f deg (<= 0.05)",
                     100.0 * ratio, worst_t, worst_r));
}

Outcome scalability(const Run& run) {
  const double early = mean_of(run.frame_s, 10, 20), late = mean_of(run.frame_s, 90, 100);
  return verdict(late <= 1.5 * early,
                 fmt("frames 90-100 %.1f ms vs 10-20 %.1f ms, ratio %.2f (<= 1.5)", 1e3 * late, 1e3 * early,
                     late / early));
}

Outcome determinism(const std::vector<const Run*>& runs) {
  double worst = 0.0;
  for (const Run* r : runs) {
    for (std::size_t k = 0; k < r->trajectory.size(); ++k) {
      const Eigen::Matrix4d d = r->trajectory[k].matrix() - runs.front()->trajectory[k].matrix();
      worst = std::max(worst, d.cwiseAbs().maxCoeff());
    }
  }
  return verdict(worst <= 1e-12, fmt("threads 1/4/8, max entry diff %.1e (<= 1e-12)", worst));
}

// ---------------------------------------------------------------------------
// Criteria 7 and 10.

Outcome fusion() {
  Gen g(707);
  const FusionConfig cfg;
  double worst = 0.0;
  int grew = 0;
  const int trials = 1000;
  for (int trial = 0; trial < trials; ++trial) {
    std::vector<Layer> obs;
    for (int k = 0; k < 10; ++k) {
      Layer l = Layer::blank(CellIndex{1, -2, 0}, Axis::kZ, 6, 1.6);
      for (std::size_t v = 0; v < l.predictions.size(); ++v) {
        l.predictions[v] = g.uniform(-5, 5);
        l.variances[v] = g.uniform(0.005, 0.99);
      }
      obs.push_back(std::move(l));
    }
    Layer acc = obs[0];
    for (int k = 1; k < 10; ++k) {
      const Layer before = acc;
      fuse_into(acc, obs[k], cfg);
      for (std::size_t v = 0; v < acc.variances.size(); ++v) {
        if (acc.variances[v] > std::min(before.variances[v], obs[k].variances[v])) ++grew;
      }
    }
    for (std::size_t v = 0; v < acc.predictions.size(); ++v) {
      double num = 0.0, den = 0.0;
      for (const Layer& l : obs) {
        num += l.predictions[v] / l.variances[v];
        den += 1.0 / l.variances[v];
      }
      worst = std::max({worst, std::abs(acc.predictions[v] - num / den), std::abs(acc.variances[v] - 1.0 / den)});
    }
  }
  return verdict(worst <= 1e-12 && grew == 0,
                 fmt("%d trials of 10 observations, max diff %.1e (<= 1e-12), variance grew %d times", trials, worst,
                     grew));
}

Outcome metric_arithmetic() {
  const double f1 = f1_score(74.96, 86.09);
  const std::vector<Pose> t = make_trajectory(SceneKind::kCorridor, 100);
  const RelativePoseError e = relative_pose_error(t, t);
  return verdict(std::abs(f1 - 80.14) <= 0.01 && e.translation_pct == 0.0 && e.rotation_deg_per_100m == 0.0,
                 fmt("F1(74.96, 86.09) = %.4f, RPE(t, t) = (%g, %g) over %zu segments", f1, e.translation_pct,
                     e.rotation_deg_per_100m, e.segments));
}

// ---------------------------------------------------------------------------
// Criterion 11: only with datasets. SLAMESH_KITTI07 names a directory holding
// velodyne/*.bin and poses.txt; SLAMESH_MAICITY names a directory holding
// ply/*.ply scans and gt.ply.

Outcome datasets() {
  const char* kitti = std::getenv("SLAMESH_KITTI07");
  const char* mai = std::getenv("SLAMESH_MAICITY");
  if (!kitti && !mai) return {Outcome::kSkip, "set SLAMESH_KITTI07 and/or SLAMESH_MAICITY to run"};
  std::string detail;
  bool ok = true;
  if (kitti) {
    PipelineConfig cfg;
    cfg.input = std::filesystem::path(kitti) / "velodyne";
    cfg.format = SequenceFormat::kKittiBin;
    const SequenceResult r = run_sequence(cfg);
    const std::vector<Pose> gt = read_trajectory_kitti(std::filesystem::path(kitti) / "poses.txt");
    const RelativePoseError e = relative_pose_error(r.trajectory, gt);
    ok = ok && e.translation_pct <= 1.0;
    detail += fmt("KITTI 07 RPE %.3f%% (<= 1.0) ", e.translation_pct);
  }
  if (mai) {
    PipelineConfig cfg;
    cfg.input = std::filesystem::path(mai) / "ply";
    cfg.format = SequenceFormat::kPlyDir;
    const SequenceResult r = run_sequence(cfg);
    const std::vector<Point3> gt = read_point_cloud_ply(std::filesystem::path(mai) / "gt.ply");
    const MeshScore s = mesh_prf(r.mesh, gt, 0.3);
    ok = ok && s.f1 >= 70.0;
    detail += fmt("Mai City F1 %.2f (>= 70)", s.f1);
  }
  return verdict(ok, detail);
}

}  // namespace

int main() {
  ThreadPool pool(8);
  int failures = 0;
  const auto report = [&](int id, const Outcome& o, bool gating = true) {
    const char* state = o.state == Outcome::kPass ? "PASS" : o.state == Outcome::kFail ? "FAIL" : "SKIP";
    std::printf("criterion %2d: %s  %s\n", id, state, o.detail.c_str());
    std::fflush(stdout);
    if (gating && o.state == Outcome::kFail) ++failures;
  };

  report(1, gp_oracle());
  report(2, jacobian_fd());
  report(3, known_transform(pool));

  const Scene scene = make_scene(SceneKind::kCorridor, kFrames);
  const std::vector<Pose> gt = make_trajectory(SceneKind::kCorridor, kFrames);
  BeamPattern noisy_pattern = BeamPattern::hdl64();
  noisy_pattern.noise_sigma = 0.02;
  const SynthSequence noisy = generate_sequence(scene, gt, noisy_pattern, 1, &pool);

  const Run run8 = run_pipeline(corridor_config(8), noisy.scans, true);
  const Run run4 = run_pipeline(corridor_config(4), noisy.scans, false);
  const Run run1 = run_pipeline(corridor_config(1), noisy.scans, false);
  report(4, odometry(run8, gt));
  report(5, mesh_quality(run8, scene, gt, noisy_pattern, pool));

  BeamPattern clean_pattern = noisy_pattern;
  clean_pattern.noise_sigma = 0.0;
  const SynthSequence clean = generate_sequence(scene, gt, clean_pattern, 1, &pool);
  report(6, combination(run8, clean.scans));
  report(7, fusion());
  // The single-thread run has no scheduling noise from an oversubscribed pool.
  report(8, scalability(run1));
  report(9, determinism({&run1, &run4, &run8}));
  report(10, metric_arithmetic());
  report(11, datasets(), false);

  std::printf("%s: %d gating criteria failed\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
