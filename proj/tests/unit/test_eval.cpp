#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "gen.hpp"
#include "slamesh/error.hpp"
#include "slamesh/eval.hpp"
#include "slamesh/parallel.hpp"

using namespace slamesh;
using slamesh::testing::deg;
using slamesh::testing::Gen;

namespace {

// Square [x0, x1] x [y0, y1] at height z, split into cells of `step` meters.
TriangleMesh plane_mesh(double x0, double x1, double y0, double y1, double z, double step) {
  TriangleMesh m;
  const int nx = static_cast<int>(std::round((x1 - x0) / step)), ny = static_cast<int>(std::round((y1 - y0) / step));
  for (int i = 0; i <= nx; ++i) {
    for (int j = 0; j <= ny; ++j) {
      m.vertices.emplace_back(x0 + i * step, y0 + j * step, z);
      m.variances.push_back(0.0);
    }
  }
  auto id = [&](int i, int j) { return static_cast<std::uint32_t>(i * (ny + 1) + j); };
  for (int i = 0; i < nx; ++i) {
    for (int j = 0; j < ny; ++j) {
      m.faces.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
      m.faces.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
    }
  }
  return m;
}

std::vector<Point3> lattice(double x0, double x1, double y0, double y1, double z, double spacing) {
  std::vector<Point3> out;
  for (double x = x0; x <= x1 + 1e-9; x += spacing) {
    for (double y = y0; y <= y1 + 1e-9; y += spacing) out.emplace_back(x, y, z);
  }
  return out;
}

std::vector<Pose> wiggly_path(Gen& g, int n) {
  std::vector<Pose> out{Pose::identity()};
  for (int k = 1; k < n; ++k) out.push_back(out.back() * Pose::from_yaw(g.uniform(-deg(2), deg(2)), Vec3(1.0, 0, 0)));
  return out;
}

}  // namespace

TEST(RelativePoseError, IdenticalIsZero) {
  Gen g(1);
  const auto gt = wiggly_path(g, 150);
  const RelativePoseError e = relative_pose_error(gt, gt);
  EXPECT_EQ(e.translation_pct, 0.0);
  EXPECT_EQ(e.rotation_deg_per_100m, 0.0);
  EXPECT_GT(e.segments, 0u);
}

TEST(RelativePoseError, GlobalOffsetIsInvisible) {
  Gen g(2);
  const auto gt = wiggly_path(g, 150);
  const Pose offset = g.pose(deg(90), 50.0);
  std::vector<Pose> est;
  for (const Pose& p : gt) est.push_back(offset * p);
  const RelativePoseError e = relative_pose_error(est, gt);
  EXPECT_NEAR(e.translation_pct, 0.0, 1e-9);
  EXPECT_NEAR(e.rotation_deg_per_100m, 0.0, 1e-6);
}

TEST(RelativePoseError, UniformScaleInflation) {
  std::vector<Pose> gt, est;
  for (int k = 0; k <= 200; ++k) {
    gt.push_back(Pose::from_translation(Vec3(k, 0, 0)));
    est.push_back(Pose::from_translation(Vec3(1.01 * k, 0, 0)));
  }
  const RelativePoseError e = relative_pose_error(est, gt);
  EXPECT_NEAR(e.translation_pct, 1.0, 0.05);
  EXPECT_NEAR(e.rotation_deg_per_100m, 0.0, 1e-12);
}

TEST(RelativePoseError, SegmentLengthsAndErrors) {
  std::vector<Pose> short_path, long_path;
  for (int k = 0; k < 100; ++k) short_path.push_back(Pose::from_translation(Vec3(k, 0, 0)));
  for (int k = 0; k < 1000; ++k) long_path.push_back(Pose::from_translation(Vec3(k, 0, 0)));
  EXPECT_EQ(default_segment_lengths(short_path).front(), 10.0);
  EXPECT_EQ(default_segment_lengths(short_path).back(), 80.0);
  EXPECT_EQ(default_segment_lengths(long_path).front(), 100.0);
  EXPECT_EQ(default_segment_lengths(long_path).back(), 800.0);
  EXPECT_DOUBLE_EQ(trajectory_distances(short_path).back(), 99.0);
  try {
    relative_pose_error(short_path, long_path);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kTrajectoryMismatch);
  }
}

TEST(AbsoluteTrajectory, RmseOfOffsets) {
  std::vector<Pose> gt, est;
  for (int k = 0; k < 10; ++k) {
    gt.push_back(Pose::from_translation(Vec3(k, 0, 0)));
    est.push_back(Pose::from_translation(Vec3(k, k % 2 == 0 ? 0.3 : -0.3, 0.4)));
  }
  EXPECT_NEAR(absolute_trajectory_rmse(est, gt), 0.5, 1e-12);
  EXPECT_EQ(absolute_trajectory_rmse(gt, gt), 0.0);
}

TEST(SampleMesh, Examples) {
  TriangleMesh tri;
  tri.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
  tri.faces = {{0, 1, 2}};
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto pts = sample_mesh(tri, 1000.0, seed);
    EXPECT_NEAR(static_cast<double>(pts.size()), 500.0, 3.0 * std::sqrt(500.0));
    for (const Point3& p : pts) {
      EXPECT_GE(p.x(), -1e-12);
      EXPECT_GE(p.y(), -1e-12);
      EXPECT_LE(p.x() + p.y(), 1.0 + 1e-12);
      EXPECT_EQ(p.z(), 0.0);
    }
  }
  TriangleMesh flat;
  flat.vertices = {{0, 0, 0}, {1, 1, 1}, {2, 2, 2}};
  flat.faces = {{0, 1, 2}};
  EXPECT_TRUE(sample_mesh(flat, 1000.0, 0).empty());
  EXPECT_EQ(sample_mesh(tri, 1000.0, 3), sample_mesh(tri, 1000.0, 3));
}

TEST(SampleMesh, UniformOverTriangle) {
  // Quadrant counts of a unit square split in two triangles.
  const TriangleMesh sq = plane_mesh(0, 1, 0, 1, 0, 1);
  const auto pts = sample_mesh(sq, 40000.0, 9);
  int low_left = 0;
  for (const Point3& p : pts) low_left += (p.x() < 0.5 && p.y() < 0.5);
  EXPECT_NEAR(static_cast<double>(low_left) / static_cast<double>(pts.size()), 0.25, 0.01);
}

TEST(NearestNeighbor, MatchesBruteForce) {
  Gen g(3);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Point3> cloud;
    for (int i = 0; i < 500; ++i) cloud.push_back(g.vec3(-5, 5));
    const NearestNeighborIndex index(cloud, g.uniform(0.05, 2.0));
    for (int q = 0; q < 100; ++q) {
      const Point3 p = g.vec3(-6, 6);
      double best = std::numeric_limits<double>::infinity();
      for (const Point3& c : cloud) best = std::min(best, (c - p).norm());
      const double maxd = g.uniform(0.1, 3.0);
      const double got = index.distance_within(p, maxd);
      if (best <= maxd) EXPECT_DOUBLE_EQ(got, best);
      else EXPECT_TRUE(std::isinf(got));
    }
  }
}

TEST(MeshPrf, SelfComparison) {
  const TriangleMesh m = plane_mesh(0, 10, 0, 10, 1.0, 0.5);
  const auto gt = lattice(0, 10, 0, 10, 1.0, 0.05);
  const MeshScore s = mesh_prf(m, gt, 0.1, 2000.0, 1);
  EXPECT_EQ(s.precision, 100.0);
  EXPECT_GT(s.recall, 99.9);
  EXPECT_GT(s.f1, 99.9);
}

TEST(MeshPrf, DisplacedBeyondThreshold) {
  const TriangleMesh m = plane_mesh(0, 10, 0, 10, 1.2, 0.5);
  const auto gt = lattice(0, 10, 0, 10, 1.0, 0.05);
  const MeshScore s = mesh_prf(m, gt, 0.1, 200.0, 1);
  EXPECT_EQ(s.precision, 0.0);
  EXPECT_EQ(s.recall, 0.0);
  EXPECT_EQ(s.f1, 0.0);
}

TEST(MeshPrf, HalfCoverage) {
  const TriangleMesh m = plane_mesh(0, 5, 0, 10, 1.0, 0.5);
  const auto gt = lattice(0, 10, 0, 10, 1.0, 0.05);
  ThreadPool pool(3);
  const MeshScore s = mesh_prf(m, gt, 0.1, 2000.0, 2, &pool);
  EXPECT_EQ(s.precision, 100.0);
  EXPECT_NEAR(s.recall, 50.0, 2.0);
  EXPECT_NEAR(s.f1, 66.7, 1.5);
  const MeshScore serial = mesh_prf(m, gt, 0.1, 2000.0, 2);
  EXPECT_EQ(serial.recall, s.recall);
}

TEST(MeshPrf, EmptyInputs) {
  const TriangleMesh m = plane_mesh(0, 1, 0, 1, 0, 1);
  EXPECT_THROW(mesh_prf(m, std::vector<Point3>{}, 0.1), Error);
  EXPECT_THROW(mesh_prf(TriangleMesh{}, lattice(0, 1, 0, 1, 0, 0.1), 0.1), Error);
}

TEST(F1, HarmonicMean) {
  EXPECT_NEAR(f1_score(74.96, 86.09), 80.14, 0.01);
  EXPECT_EQ(f1_score(0.0, 0.0), 0.0);
  EXPECT_NEAR(f1_score(100.0, 50.0), 200.0 / 3.0, 1e-12);
}
