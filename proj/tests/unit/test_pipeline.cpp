#include <gtest/gtest.h>

#include <fstream>

#include <json.hpp>

#include "gen.hpp"
#include "slamesh/error.hpp"
#include "slamesh/eval.hpp"
#include "slamesh/pipeline.hpp"
#include "slamesh/synth.hpp"

using namespace slamesh;
using slamesh::testing::TempDir;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return ErrorCode::kIoError;
}

constexpr std::size_t kFrames = 100;

// Corridor sequence written once for the whole suite.
class SyntheticSequence : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir("pipeline");
    SynthOptions opts;
    opts.frames = kFrames;
    opts.seed = 3;
    opts.gt_spacing = 0.2;
    write_synthetic_dataset(opts, dir_->path());
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }
  static PipelineConfig config(std::size_t threads) {
    PipelineConfig cfg;
    cfg.input = dir_->path() / "velodyne";
    cfg.threads = threads;
    return cfg;
  }
  static TempDir* dir_;
};

TempDir* SyntheticSequence::dir_ = nullptr;

}  // namespace

TEST(Pipeline, IdenticalFramesStayAtIdentity) {
  const Scene scene = make_scene(SceneKind::kCorridor, 10);
  const RawScan scan = simulate_scan(scene, Pose::identity(), BeamPattern::hdl64(), 5);
  PipelineConfig cfg;
  cfg.threads = 2;
  Pipeline p(cfg);
  p.process_frame(scan);
  const FrameReport r = p.process_frame(scan);
  EXPECT_FALSE(r.degraded);
  EXPECT_LE((r.pose.translation()).norm(), 1e-8);
  EXPECT_LE(rotation_angle(r.pose.rotation()), 1e-8);
}

TEST(Pipeline, EmptyFrameIsDegraded) {
  const Scene scene = make_scene(SceneKind::kCorridor, 10);
  PipelineConfig cfg;
  cfg.threads = 1;
  Pipeline p(cfg);
  p.process_frame(simulate_scan(scene, Pose::identity(), BeamPattern::hdl64(), 6));
  p.process_frame(simulate_scan(scene, Pose::from_translation(Vec3(0.5, 0, 0)), BeamPattern::hdl64(), 7));
  const Pose guess = p.next_guess();
  RawScan empty;
  empty.frame_index = 2;
  const FrameReport r = p.process_frame(empty);
  EXPECT_TRUE(r.degraded);
  EXPECT_FALSE(r.degraded_reason.empty());
  EXPECT_EQ(r.pose.matrix(), guess.matrix());
  EXPECT_EQ(p.trajectory().size(), 3u);
}

TEST(Pipeline, EmptyDirectoryIsConfigError) {
  TempDir dir("empty");
  PipelineConfig cfg;
  cfg.input = dir.path();
  EXPECT_EQ(code_of([&] { run_sequence(cfg); }), ErrorCode::kConfigError);
}

TEST_F(SyntheticSequence, WritesOutputsAndTracks) {
  TempDir out("pipeline_out");
  PipelineConfig cfg = config(2);
  cfg.out_trajectory = out / "traj.txt";
  cfg.out_mesh = out / "mesh.ply";
  cfg.report = out / "report.json";
  cfg.export_every = 5;
  cfg.export_dir = out / "snapshots";
  std::size_t callbacks = 0;
  const SequenceResult r = run_sequence(cfg, [&](const FrameReport&) { ++callbacks; });
  EXPECT_EQ(callbacks, kFrames);
  ASSERT_EQ(r.trajectory.size(), kFrames);

  const auto traj = read_trajectory_kitti(cfg.out_trajectory);
  ASSERT_EQ(traj.size(), kFrames);
  const auto gt = read_trajectory_kitti(dir_->path() / "poses.txt");
  EXPECT_LT(absolute_trajectory_rmse(traj, gt), 0.05);

  const TriangleMesh mesh = read_mesh_ply(cfg.out_mesh);
  EXPECT_EQ(mesh.faces.size(), r.mesh.faces.size());
  EXPECT_GT(mesh.faces.size(), 1000u);
  EXPECT_TRUE(std::filesystem::exists(cfg.export_dir / "mesh_000004.ply"));

  std::ifstream is(cfg.report);
  const auto report = nlohmann::json::parse(is);
  EXPECT_EQ(report["frames"].size(), kFrames);
  EXPECT_EQ(report["totals"]["frames"].get<std::size_t>(), kFrames);
  EXPECT_EQ(report["totals"]["degraded_frames"].get<std::size_t>(), 0u);
}

TEST_F(SyntheticSequence, ThreadCountDoesNotChangeResults) {
  const SequenceResult a = run_sequence(config(1));
  const SequenceResult b = run_sequence(config(8));
  ASSERT_EQ(a.trajectory.size(), b.trajectory.size());
  for (std::size_t k = 0; k < a.trajectory.size(); ++k) {
    EXPECT_LE((a.trajectory[k].matrix() - b.trajectory[k].matrix()).cwiseAbs().maxCoeff(), 1e-12);
  }
  EXPECT_EQ(a.mesh.vertices, b.mesh.vertices);
  EXPECT_EQ(a.mesh.faces, b.mesh.faces);
}

TEST(Config, FileThenValues) {
  TempDir dir("config");
  {
    std::ofstream os(dir / "run.cfg");
    os << "# comment line\n"
          "cell-size = 2.0   # trailing comment\n"
          "grid=5\n"
          "sigma-update = 0.4\n"
          "query-schedule = 3, 1, 0\n"
          "combine = false\n"
          "fusion-rule = literal\n"
          "\n"
          "threads = 3\n";
  }
  PipelineConfig cfg;
  apply_config_file(dir / "run.cfg", cfg);
  EXPECT_EQ(cfg.reconstruction.cell_size, 2.0);
  EXPECT_EQ(cfg.reconstruction.gp.grid, 5);
  EXPECT_EQ(cfg.fusion.sigma_update_sq, 0.4);
  EXPECT_EQ(cfg.registration.query_schedule, (std::vector<int>{3, 1, 0}));
  EXPECT_FALSE(cfg.registration.combine);
  EXPECT_EQ(cfg.fusion.rule, FusionRule::kLiteralVariance);
  EXPECT_EQ(cfg.threads, 3u);

  apply_config_value("sigma-match", "0.3", cfg);
  EXPECT_EQ(cfg.registration.sigma_match_sq, 0.3);
  EXPECT_EQ(code_of([&] { apply_config_value("no-such-key", "1", cfg); }), ErrorCode::kConfigError);
  EXPECT_EQ(code_of([&] { apply_config_value("grid", "six", cfg); }), ErrorCode::kConfigError);
  EXPECT_EQ(code_of([&] { apply_config_file(dir / "missing.cfg", cfg); }), ErrorCode::kIoError);
}

TEST(Config, QueryScheduleAndValidation) {
  EXPECT_EQ(parse_query_schedule("2,0"), (std::vector<int>{2, 0}));
  EXPECT_EQ(code_of([] { parse_query_schedule(""); }), ErrorCode::kConfigError);
  EXPECT_EQ(code_of([] { parse_query_schedule("2,x"); }), ErrorCode::kConfigError);
  PipelineConfig cfg;
  cfg.validate();
  cfg.threads = 0;
  EXPECT_THROW(cfg.validate(), Error);
}
