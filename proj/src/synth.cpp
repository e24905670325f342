#include "slamesh/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "slamesh/error.hpp"
#include "slamesh/io.hpp"
#include "slamesh/parallel.hpp"

namespace slamesh {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;
constexpr double kHitEpsilon = 1e-9;

std::optional<double> intersect_patch(const PlanePatch& p, const Point3& o, const Vec3& d) {
  const double denom = p.normal.dot(d);
  if (std::abs(denom) < 1e-12) return std::nullopt;
  const double t = p.normal.dot(p.center - o) / denom;
  if (t <= kHitEpsilon) return std::nullopt;
  const Vec3 rel = o + t * d - p.center;
  if (std::abs(rel.dot(p.u)) > p.half_u + 1e-9 || std::abs(rel.dot(p.v())) > p.half_v + 1e-9) return std::nullopt;
  return t;
}

std::optional<double> intersect_box(const Box& b, const Point3& o, const Vec3& d) {
  double t_near = -std::numeric_limits<double>::infinity();
  double t_far = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (std::abs(d[a]) < 1e-15) {
      if (o[a] < b.min[a] || o[a] > b.max[a]) return std::nullopt;
      continue;
    }
    double t1 = (b.min[a] - o[a]) / d[a];
    double t2 = (b.max[a] - o[a]) / d[a];
    if (t1 > t2) std::swap(t1, t2);
    t_near = std::max(t_near, t1);
    t_far = std::min(t_far, t2);
  }
  if (t_far < t_near) return std::nullopt;
  if (t_near > kHitEpsilon) return t_near;
  if (t_far > kHitEpsilon) return t_far;
  return std::nullopt;
}

PlanePatch patch(const Point3& center, const Vec3& normal, const Vec3& u, double half_u, double half_v) {
  return {center, normal.normalized(), u.normalized(), half_u, half_v};
}

// Plane x = const (normal +/-x) spanning y in [y0, y1], z in [z0, z1].
PlanePatch wall_x(double x, double y0, double y1, double z0, double z1) {
  return patch({x, 0.5 * (y0 + y1), 0.5 * (z0 + z1)}, Vec3::UnitX(), Vec3::UnitY(), 0.5 * (y1 - y0),
               0.5 * (z1 - z0));
}
// Plane y = const spanning z in [z0, z1], x in [x0, x1].
PlanePatch wall_y(double y, double x0, double x1, double z0, double z1) {
  return patch({0.5 * (x0 + x1), y, 0.5 * (z0 + z1)}, Vec3::UnitY(), Vec3::UnitZ(), 0.5 * (z1 - z0),
               0.5 * (x1 - x0));
}
// Plane z = const spanning x in [x0, x1], y in [y0, y1].
PlanePatch floor_z(double z, double x0, double x1, double y0, double y1) {
  return patch({0.5 * (x0 + x1), 0.5 * (y0 + y1), z}, Vec3::UnitZ(), Vec3::UnitX(), 0.5 * (x1 - x0),
               0.5 * (y1 - y0));
}

constexpr double kFloorZ = -1.75;
constexpr double kCorridorHalfWidth = 4.4;
constexpr double kStep = 0.5;

std::uint64_t frame_seed(std::uint64_t seed, std::size_t frame) {
  return seed ^ ((frame + 1) * 0x9E3779B97F4A7C15ULL);
}

double path_length(std::size_t frames) { return kStep * static_cast<double>(frames > 0 ? frames - 1 : 0); }

// Boxes against both walls of a corridor spanning x in [x0, x1].
void add_wall_boxes(Scene& s, double x0, double x1, double floor_z, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> gap(2.0, 6.0), len(0.8, 2.6), depth(0.5, 1.4), height(0.9, 3.0);
  bool left = true;
  for (double x = x0 + 2.0; x < x1 - 3.0; x += gap(rng)) {
    const double l = len(rng), d = depth(rng), h = height(rng);
    const double side = left ? 1.0 : -1.0;
    const double inner = side * (kCorridorHalfWidth - d);
    const double outer = side * kCorridorHalfWidth;
    s.boxes.push_back({{x, std::min(inner, outer), floor_z}, {x + l, std::max(inner, outer), floor_z + h}});
    x += l;
    left = !left;
  }
}

Scene corridor(std::size_t frames) {
  const double x0 = -20.0, x1 = path_length(frames) + 40.0;
  const double top = 2.25;
  Scene s;
  s.planes.push_back(floor_z(kFloorZ, x0, x1, -kCorridorHalfWidth, kCorridorHalfWidth));
  s.planes.push_back(wall_y(kCorridorHalfWidth, x0, x1, kFloorZ, top));
  s.planes.push_back(wall_y(-kCorridorHalfWidth, x0, x1, kFloorZ, top));
  s.planes.push_back(wall_x(x0, -kCorridorHalfWidth, kCorridorHalfWidth, kFloorZ, top));
  s.planes.push_back(wall_x(x1, -kCorridorHalfWidth, kCorridorHalfWidth, kFloorZ, top));
  std::mt19937_64 rng(7);
  add_wall_boxes(s, x0, x1, kFloorZ, rng);
  return s;
}

Scene boxes(std::size_t frames) {
  const double x0 = -15.0, x1 = path_length(frames) + 25.0, half = 12.0, top = 3.0;
  Scene s;
  s.planes.push_back(floor_z(kFloorZ, x0, x1, -half, half));
  s.planes.push_back(wall_y(half, x0, x1, kFloorZ, top));
  s.planes.push_back(wall_y(-half, x0, x1, kFloorZ, top));
  s.planes.push_back(wall_x(x0, -half, half, kFloorZ, top));
  s.planes.push_back(wall_x(x1, -half, half, kFloorZ, top));
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> jitter(-1.0, 1.0), size(0.6, 2.2), height(0.5, 3.5);
  for (double x = x0 + 3.0; x < x1 - 3.0; x += 4.5) {
    for (double y : {-9.0, -5.5, 4.0, 8.5}) {
      const double cx = x + jitter(rng), cy = y + jitter(rng), sx = size(rng), sy = size(rng);
      s.boxes.push_back({{cx, cy, kFloorZ}, {cx + sx, cy + sy, kFloorZ + height(rng)}});
    }
  }
  return s;
}

struct RampProfile {
  double start;
  double end;
  double slope;  // radians
  double height(double x) const {
    return kFloorZ + std::tan(slope) * std::clamp(x - start, 0.0, end - start);
  }
};

RampProfile ramp_profile(std::size_t frames) {
  const double length = path_length(frames);
  return {0.25 * length + 2.0, 0.6 * length + 2.0, 5.0 * kDeg};
}

Scene ramp(std::size_t frames) {
  const RampProfile r = ramp_profile(frames);
  const double x0 = -20.0, x1 = path_length(frames) + 40.0;
  const double rise = r.height(x1) - kFloorZ;
  const double top = 2.25 + rise;
  Scene s;
  s.planes.push_back(floor_z(kFloorZ, x0, r.start, -kCorridorHalfWidth, kCorridorHalfWidth));
  const double run = r.end - r.start;
  const double slant = run / std::cos(r.slope);
  s.planes.push_back(patch({0.5 * (r.start + r.end), 0.0, kFloorZ + 0.5 * rise},
                           {-std::sin(r.slope), 0.0, std::cos(r.slope)}, {std::cos(r.slope), 0.0, std::sin(r.slope)},
                           0.5 * slant, kCorridorHalfWidth));
  s.planes.push_back(floor_z(kFloorZ + rise, r.end, x1, -kCorridorHalfWidth, kCorridorHalfWidth));
  s.planes.push_back(wall_y(kCorridorHalfWidth, x0, x1, kFloorZ, top));
  s.planes.push_back(wall_y(-kCorridorHalfWidth, x0, x1, kFloorZ, top));
  s.planes.push_back(wall_x(x0, -kCorridorHalfWidth, kCorridorHalfWidth, kFloorZ, top));
  s.planes.push_back(wall_x(x1, -kCorridorHalfWidth, kCorridorHalfWidth, kFloorZ, top));
  // Boxes only on the flat stretches so that they rest on the floor.
  std::mt19937_64 rng(13);
  add_wall_boxes(s, x0, r.start - 1.0, kFloorZ, rng);
  add_wall_boxes(s, r.end + 1.0, x1, kFloorZ + rise, rng);
  return s;
}

}  // namespace

// ---------------------------------------------------------------------------

std::vector<PlanePatch> Box::faces() const {
  std::vector<PlanePatch> out;
  const Point3 mid = 0.5 * (min + max);
  const Vec3 half = 0.5 * (max - min);
  for (int a = 0; a < 3; ++a) {
    const int b = (a + 1) % 3, c = (a + 2) % 3;
    for (double sign : {-1.0, 1.0}) {
      PlanePatch p;
      p.center = mid;
      p.center[a] = sign < 0 ? min[a] : max[a];
      p.normal = sign * Vec3::Unit(a);
      p.u = Vec3::Unit(b);
      p.half_u = half[b];
      p.half_v = half[c];
      out.push_back(p);
    }
  }
  return out;
}

void Scene::validate() const {
  for (const PlanePatch& p : planes) {
    if (!p.center.allFinite() || std::abs(p.normal.norm() - 1.0) > 1e-9 || std::abs(p.u.norm() - 1.0) > 1e-9 ||
        std::abs(p.normal.dot(p.u)) > 1e-9) {
      throw Error(ErrorCode::kInvalidParam, "plane patch needs unit, orthogonal normal and u axis");
    }
    if (!(p.half_u > 0.0) || !(p.half_v > 0.0) || !std::isfinite(p.half_u) || !std::isfinite(p.half_v)) {
      throw Error(ErrorCode::kInvalidParam, "plane patch extents must be finite and positive");
    }
  }
  for (const Box& b : boxes) {
    if (!b.min.allFinite() || !b.max.allFinite() || !((b.max - b.min).array() > 0.0).all()) {
      throw Error(ErrorCode::kInvalidParam, "box must have finite, positive extent");
    }
  }
}

std::optional<double> Scene::intersect(const Point3& origin, const Vec3& dir, double max_range) const {
  double best = max_range;
  bool hit = false;
  for (const PlanePatch& p : planes) {
    if (auto t = intersect_patch(p, origin, dir); t && *t <= best) {
      best = *t;
      hit = true;
    }
  }
  for (const Box& b : boxes) {
    if (auto t = intersect_box(b, origin, dir); t && *t <= best) {
      best = *t;
      hit = true;
    }
  }
  return hit ? std::optional<double>(best) : std::nullopt;
}

std::vector<PlanePatch> Scene::surfaces() const {
  std::vector<PlanePatch> out = planes;
  for (const Box& b : boxes) {
    for (const PlanePatch& f : b.faces()) out.push_back(f);
  }
  return out;
}

// ---------------------------------------------------------------------------

BeamPattern BeamPattern::hdl64() {
  BeamPattern p;
  p.vertical_deg.resize(64);
  for (int i = 0; i < 64; ++i) p.vertical_deg[i] = -24.8 + (2.0 + 24.8) * i / 63.0;
  return p;
}

std::size_t BeamPattern::columns() const {
  return static_cast<std::size_t>(std::llround(360.0 / horizontal_res_deg));
}

void BeamPattern::validate() const {
  if (vertical_deg.empty()) throw Error(ErrorCode::kInvalidParam, "beam pattern has no vertical angles");
  if (!std::is_sorted(vertical_deg.begin(), vertical_deg.end())) {
    throw Error(ErrorCode::kInvalidParam, "vertical angles must be sorted");
  }
  if (!(horizontal_res_deg > 0.0)) throw Error(ErrorCode::kInvalidParam, "horizontal resolution must be > 0");
  if (!(max_range > 0.0)) throw Error(ErrorCode::kInvalidParam, "max range must be > 0");
  if (!(noise_sigma >= 0.0)) throw Error(ErrorCode::kInvalidParam, "noise sigma must be >= 0");
}

Vec3 beam_direction(const BeamPattern& pattern, std::size_t row, std::size_t col) {
  const double elev = pattern.vertical_deg[row] * kDeg;
  const double az = static_cast<double>(col) * pattern.horizontal_res_deg * kDeg;
  return {std::cos(elev) * std::cos(az), std::cos(elev) * std::sin(az), std::sin(elev)};
}

RawScan simulate_scan(const Scene& scene, const Pose& sensor_pose, const BeamPattern& pattern, std::uint64_t seed,
                      ThreadPool* pool) {
  pattern.validate();
  const std::size_t rows = pattern.vertical_deg.size(), cols = pattern.columns();
  std::vector<std::vector<Point3>> per_row(rows);
  parallel_for(pool, rows, [&](std::size_t row) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(row)};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> noise(0.0, pattern.noise_sigma);
    std::vector<Point3>& out = per_row[row];
    for (std::size_t col = 0; col < cols; ++col) {
      const Vec3 d = beam_direction(pattern, row, col);
      const auto t = scene.intersect(sensor_pose.translation(), sensor_pose.rotation() * d, pattern.max_range);
      if (!t) continue;
      const double r = pattern.noise_sigma > 0.0 ? *t + noise(rng) : *t;
      out.push_back(d * r);
    }
  });
  RawScan scan;
  for (const auto& row : per_row) scan.points.insert(scan.points.end(), row.begin(), row.end());
  return scan;
}

// ---------------------------------------------------------------------------

SceneKind parse_scene_kind(std::string_view name) {
  if (name == "corridor") return SceneKind::kCorridor;
  if (name == "boxes") return SceneKind::kBoxes;
  if (name == "ramp") return SceneKind::kRamp;
  throw Error(ErrorCode::kConfigError, "unknown scene '" + std::string(name) + "'");
}

std::string_view scene_name(SceneKind kind) {
  switch (kind) {
    case SceneKind::kCorridor: return "corridor";
    case SceneKind::kBoxes: return "boxes";
    case SceneKind::kRamp: return "ramp";
  }
  return "?";
}

Scene make_scene(SceneKind kind, std::size_t frames) {
  switch (kind) {
    case SceneKind::kCorridor: return corridor(frames);
    case SceneKind::kBoxes: return boxes(frames);
    case SceneKind::kRamp: return ramp(frames);
  }
  throw Error(ErrorCode::kInvalidParam, "unknown scene kind");
}

std::vector<Pose> make_trajectory(SceneKind kind, std::size_t frames) {
  // Peak yaw rate amplitude * 2 pi / period stays at 0.84 degrees per frame.
  const double amplitude = 8.0 * kDeg, period = 60.0;
  const RampProfile r = ramp_profile(frames);
  std::vector<Pose> poses;
  poses.reserve(frames);
  Vec3 position = Vec3::Zero();
  for (std::size_t k = 0; k < frames; ++k) {
    const double yaw = amplitude * std::sin(2.0 * std::numbers::pi * static_cast<double>(k) / period);
    if (kind == SceneKind::kRamp) position.z() = r.height(position.x()) - kFloorZ;
    poses.push_back(Pose::from_yaw(yaw, position));
    position.x() += kStep * std::cos(yaw);
    position.y() += kStep * std::sin(yaw);
  }
  return poses;
}

std::vector<Point3> visible_surface_cloud(const Scene& scene, const std::vector<Pose>& poses,
                                          const BeamPattern& pattern, double spacing, double max_range,
                                          ThreadPool* pool) {
  if (!(spacing > 0.0)) throw Error(ErrorCode::kInvalidParam, "spacing must be > 0");
  const std::vector<PlanePatch> surfaces = scene.surfaces();
  const double lo = pattern.vertical_deg.front() * kDeg, hi = pattern.vertical_deg.back() * kDeg;
  std::vector<std::vector<Point3>> per_surface(surfaces.size());
  parallel_for(pool, surfaces.size(), [&](std::size_t s) {
    const PlanePatch& p = surfaces[s];
    const Vec3 v = p.v();
    const auto nu = static_cast<long>(std::ceil(2.0 * p.half_u / spacing));
    const auto nv = static_cast<long>(std::ceil(2.0 * p.half_v / spacing));
    for (long a = 0; a < nu; ++a) {
      for (long b = 0; b < nv; ++b) {
        const Point3 q = p.center + (-p.half_u + (a + 0.5) * 2.0 * p.half_u / nu) * p.u +
                         (-p.half_v + (b + 0.5) * 2.0 * p.half_v / nv) * v;
        for (const Pose& pose : poses) {
          const Vec3 ray = q - pose.translation();
          const double dist = ray.norm();
          if (dist > max_range || dist < 1e-6) continue;
          const Vec3 local = pose.rotation().transpose() * ray;
          const double elev = std::asin(std::clamp(local.z() / dist, -1.0, 1.0));
          if (elev < lo || elev > hi) continue;
          const auto t = scene.intersect(pose.translation(), ray / dist, dist + 1e-3);
          if (t && *t < dist - 1e-4) continue;
          per_surface[s].push_back(q);
          break;
        }
      }
    }
  });
  std::vector<Point3> out;
  for (const auto& pts : per_surface) out.insert(out.end(), pts.begin(), pts.end());
  return out;
}

SynthSequence generate_sequence(const Scene& scene, const std::vector<Pose>& poses, const BeamPattern& pattern,
                                std::uint64_t seed, ThreadPool* pool) {
  scene.validate();
  SynthSequence seq;
  seq.poses = poses;
  seq.scans.reserve(poses.size());
  for (std::size_t k = 0; k < poses.size(); ++k) {
    RawScan scan = simulate_scan(scene, poses[k], pattern, frame_seed(seed, k), pool);
    scan.frame_index = k;
    seq.scans.push_back(std::move(scan));
  }
  return seq;
}

void write_synthetic_dataset(const SynthOptions& opts, const std::filesystem::path& out, ThreadPool* pool) {
  if (opts.frames == 0) throw Error(ErrorCode::kInvalidParam, "frames must be >= 1");
  const Scene scene = make_scene(opts.scene, opts.frames);
  const std::vector<Pose> poses = make_trajectory(opts.scene, opts.frames);
  std::error_code ec;
  std::filesystem::create_directories(out / "velodyne", ec);
  if (ec) throw Error(ErrorCode::kIoError, "cannot create " + (out / "velodyne").string() + ": " + ec.message());
  for (std::size_t k = 0; k < poses.size(); ++k) {
    const RawScan scan = simulate_scan(scene, poses[k], opts.pattern, frame_seed(opts.seed, k), pool);
    char name[32];
    std::snprintf(name, sizeof(name), "%06zu.bin", k);
    write_kitti_bin(scan.points, out / "velodyne" / name);
  }
  write_trajectory_kitti(poses, out / "poses.txt");
  write_point_cloud_ply(visible_surface_cloud(scene, poses, opts.pattern, opts.gt_spacing, opts.gt_max_range, pool),
                        out / "gt_cloud.ply");
}

}  // namespace slamesh
