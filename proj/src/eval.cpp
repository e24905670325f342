#include "slamesh/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>

#include "slamesh/error.hpp"
#include "slamesh/parallel.hpp"

namespace slamesh {

std::vector<double> trajectory_distances(std::span<const Pose> poses) {
  std::vector<double> dist(poses.size(), 0.0);
  for (std::size_t i = 1; i < poses.size(); ++i) {
    dist[i] = dist[i - 1] + (poses[i].translation() - poses[i - 1].translation()).norm();
  }
  return dist;
}

std::vector<double> default_segment_lengths(std::span<const Pose> gt) {
  const std::vector<double> dist = trajectory_distances(gt);
  const double scale = (dist.empty() || dist.back() >= 800.0) ? 100.0 : 10.0;
  std::vector<double> lengths;
  for (int k = 1; k <= 8; ++k) lengths.push_back(scale * k);
  return lengths;
}

RelativePoseError relative_pose_error(std::span<const Pose> est, std::span<const Pose> gt,
                                      std::span<const double> lengths) {
  if (est.size() != gt.size()) {
    throw Error(ErrorCode::kTrajectoryMismatch, "trajectories differ in length (" + std::to_string(est.size()) +
                                                    " vs " + std::to_string(gt.size()) + ")");
  }
  if (gt.size() < 2) throw Error(ErrorCode::kTrajectoryMismatch, "need at least two poses");
  const std::vector<double> dist = trajectory_distances(gt);
  double t_sum = 0.0, r_sum = 0.0;
  std::size_t n = 0;
  for (std::size_t first = 0; first < gt.size(); ++first) {
    for (double len : lengths) {
      const auto it = std::upper_bound(dist.begin() + static_cast<std::ptrdiff_t>(first), dist.end(),
                                       dist[first] + len);
      if (it == dist.end()) continue;
      const std::size_t last = static_cast<std::size_t>(it - dist.begin());
      const Pose delta_gt = gt[first].inverse() * gt[last];
      const Pose delta_est = est[first].inverse() * est[last];
      const Pose err = delta_est.inverse() * delta_gt;
      t_sum += err.translation().norm() / len;
      r_sum += rotation_angle(err.rotation()) / len;
      ++n;
    }
  }
  RelativePoseError out;
  out.segments = n;
  if (n == 0) return out;
  out.translation_pct = 100.0 * t_sum / static_cast<double>(n);
  out.rotation_deg_per_100m = 100.0 * (180.0 / std::numbers::pi) * r_sum / static_cast<double>(n);
  return out;
}

RelativePoseError relative_pose_error(std::span<const Pose> est, std::span<const Pose> gt) {
  const std::vector<double> lengths = default_segment_lengths(gt);
  return relative_pose_error(est, gt, lengths);
}

double absolute_trajectory_rmse(std::span<const Pose> est, std::span<const Pose> gt) {
  if (est.size() != gt.size() || est.empty()) {
    throw Error(ErrorCode::kTrajectoryMismatch, "trajectories must be non-empty and of equal length");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < est.size(); ++i) sum += (est[i].translation() - gt[i].translation()).squaredNorm();
  return std::sqrt(sum / static_cast<double>(est.size()));
}

// ---------------------------------------------------------------------------

std::vector<Point3> sample_mesh(const TriangleMesh& mesh, double density, std::uint64_t seed) {
  if (!(density > 0.0)) throw Error(ErrorCode::kInvalidParam, "density must be > 0");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Point3> out;
  for (const Face& f : mesh.faces) {
    const Point3& a = mesh.vertices[f[0]];
    const Point3& b = mesh.vertices[f[1]];
    const Point3& c = mesh.vertices[f[2]];
    const double expected = 0.5 * (b - a).cross(c - a).norm() * density;
    auto count = static_cast<std::size_t>(std::floor(expected));
    if (unit(rng) < expected - std::floor(expected)) ++count;
    for (std::size_t k = 0; k < count; ++k) {
      const double s = std::sqrt(unit(rng)), r = unit(rng);
      out.push_back((1.0 - s) * a + s * (1.0 - r) * b + s * r * c);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::int64_t kKeyBias = std::int64_t{1} << 20;

std::int64_t bucket_of(double x, double size) { return static_cast<std::int64_t>(std::floor(x / size)); }

}  // namespace

std::int64_t NearestNeighborIndex::key(std::int64_t x, std::int64_t y, std::int64_t z) const {
  return ((x + kKeyBias) << 42) | ((y + kKeyBias) << 21) | (z + kKeyBias);
}

NearestNeighborIndex::NearestNeighborIndex(std::span<const Point3> cloud, double bucket_size)
    : bucket_(bucket_size), points_(cloud.begin(), cloud.end()) {
  if (!(bucket_size > 0.0)) throw Error(ErrorCode::kInvalidParam, "bucket size must be > 0");
  std::vector<std::int64_t> raw(points_.size());
  for (std::size_t i = 0; i < points_.size(); ++i) {
    const Point3& p = points_[i];
    const std::int64_t bx = bucket_of(p.x(), bucket_), by = bucket_of(p.y(), bucket_), bz = bucket_of(p.z(), bucket_);
    if (std::max({std::abs(bx), std::abs(by), std::abs(bz)}) >= kKeyBias) {
      throw Error(ErrorCode::kInvalidParam, "point outside the indexable extent");
    }
    raw[i] = key(bx, by, bz);
  }
  order_.resize(points_.size());
  std::iota(order_.begin(), order_.end(), 0u);
  std::stable_sort(order_.begin(), order_.end(), [&](std::uint32_t a, std::uint32_t b) { return raw[a] < raw[b]; });
  keys_.resize(order_.size());
  for (std::size_t i = 0; i < order_.size(); ++i) keys_[i] = raw[order_[i]];
}

double NearestNeighborIndex::distance_within(const Point3& q, double max_distance) const {
  double best_sq = max_distance * max_distance;
  bool found = false;
  const std::int64_t reach = static_cast<std::int64_t>(std::ceil(max_distance / bucket_));
  const std::int64_t qx = bucket_of(q.x(), bucket_), qy = bucket_of(q.y(), bucket_), qz = bucket_of(q.z(), bucket_);
  for (std::int64_t dx = -reach; dx <= reach; ++dx) {
    for (std::int64_t dy = -reach; dy <= reach; ++dy) {
      for (std::int64_t dz = -reach; dz <= reach; ++dz) {
        const std::int64_t x = qx + dx, y = qy + dy, z = qz + dz;
        if (std::max({std::abs(x), std::abs(y), std::abs(z)}) >= kKeyBias) continue;
        const auto [lo, hi] = std::equal_range(keys_.begin(), keys_.end(), key(x, y, z));
        for (auto it = lo; it != hi; ++it) {
          const double d2 = (points_[order_[static_cast<std::size_t>(it - keys_.begin())]] - q).squaredNorm();
          if (d2 <= best_sq) {
            best_sq = d2;
            found = true;
          }
        }
      }
    }
  }
  return found ? std::sqrt(best_sq) : std::numeric_limits<double>::infinity();
}

// ---------------------------------------------------------------------------

double f1_score(double precision, double recall) {
  return precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

namespace {

double percent_within(std::span<const Point3> queries, const NearestNeighborIndex& index, double d,
                      ThreadPool* pool) {
  if (queries.empty()) return 0.0;
  constexpr std::size_t kBlock = 4096;
  const std::size_t blocks = (queries.size() + kBlock - 1) / kBlock;
  std::vector<std::size_t> hits(blocks, 0);
  parallel_for(pool, blocks, [&](std::size_t b) {
    const std::size_t end = std::min(queries.size(), (b + 1) * kBlock);
    for (std::size_t i = b * kBlock; i < end; ++i) {
      if (index.distance_within(queries[i], d) <= d) ++hits[b];
    }
  });
  const std::size_t total = std::accumulate(hits.begin(), hits.end(), std::size_t{0});
  return 100.0 * static_cast<double>(total) / static_cast<double>(queries.size());
}

}  // namespace

MeshScore mesh_prf(const TriangleMesh& mesh, std::span<const Point3> gt_cloud, double d, double density,
                   std::uint64_t seed, ThreadPool* pool) {
  if (mesh.faces.empty()) throw Error(ErrorCode::kEmptyInput, "mesh has no faces");
  if (gt_cloud.empty()) throw Error(ErrorCode::kEmptyInput, "ground-truth cloud is empty");
  if (!(d > 0.0)) throw Error(ErrorCode::kInvalidParam, "distance threshold must be > 0");
  const std::vector<Point3> samples = sample_mesh(mesh, density, seed);
  MeshScore score;
  score.mesh_samples = samples.size();
  if (samples.empty()) return score;
  score.precision = percent_within(samples, NearestNeighborIndex(gt_cloud, d), d, pool);
  score.recall = percent_within(gt_cloud, NearestNeighborIndex(samples, d), d, pool);
  score.f1 = f1_score(score.precision, score.recall);
  return score;
}

}  // namespace slamesh
