#include "slamesh/registration.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <map>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "slamesh/error.hpp"
#include "slamesh/mesh.hpp"
#include "slamesh/parallel.hpp"

namespace slamesh {

namespace {

using Mat6 = Eigen::Matrix<double, 6, 6>;

double elapsed_ms(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}

}  // namespace

void ReconstructionConfig::validate() const {
  if (!(cell_size > 0.0)) throw Error(ErrorCode::kInvalidParam, "cell_size must be > 0");
  if (downsample_resolution < 0.0) throw Error(ErrorCode::kInvalidParam, "downsample resolution must be >= 0");
  gp.validate();
}

void RegistrationConfig::validate() const {
  if (query_schedule.empty()) throw Error(ErrorCode::kInvalidParam, "query schedule must not be empty");
  for (int b : query_schedule) {
    if (b < 0) throw Error(ErrorCode::kInvalidParam, "query lengths must be >= 0");
  }
  if (lm_max_iters < 1) throw Error(ErrorCode::kInvalidParam, "lm_max_iters must be >= 1");
  if (!(sigma_match_sq > 0.0)) throw Error(ErrorCode::kInvalidParam, "sigma_match_sq must be > 0");
  if (huber_scale && !(*huber_scale > 0.0)) throw Error(ErrorCode::kInvalidParam, "huber scale must be > 0");
  if (max_thickness_ratio && !(*max_thickness_ratio > 0.0)) {
    throw Error(ErrorCode::kInvalidParam, "max thickness ratio must be > 0");
  }
}

std::vector<Layer> reconstruct_scan(std::span<const Point3> sensor_points, const Pose& pose,
                                    const ReconstructionConfig& cfg, ThreadPool* pool) {
  const std::vector<Point3> world = transform_points(pose, sensor_points);
  const std::vector<Point3> thinned = downsample(world, cfg.resolution(), cfg.downsample_mode);
  const CellBuckets buckets = assign_to_cells(thinned, cfg.cell_size);

  std::vector<std::pair<CellIndex, const std::vector<Point3>*>> work;
  work.reserve(buckets.size());
  for (const auto& [idx, pts] : buckets) {
    if (pts.size() >= cfg.gp.min_points) work.emplace_back(idx, &pts);
  }
  std::vector<std::vector<Layer>> per_cell(work.size());
  parallel_for(pool, work.size(), [&](std::size_t k) {
    per_cell[k] = reconstruct_cell(work[k].first, *work[k].second, cfg.gp, cfg.cell_size);
  });
  std::vector<Layer> layers;
  layers.reserve(work.size());
  for (auto& cell_layers : per_cell) {
    for (Layer& l : cell_layers) layers.push_back(std::move(l));
  }
  return layers;
}

// ---------------------------------------------------------------------------
// Association

std::vector<Correspondence> associate(std::span<const Layer> scan_layers, const MeshMap& map, int query_length,
                                      const RegistrationConfig& cfg, const Point3& sensor_origin,
                                      std::int64_t current_frame, ThreadPool* pool) {
  const double sigma = cfg.sigma_match_sq;
  std::vector<std::vector<Correspondence>> per_layer(scan_layers.size());
  parallel_for(pool, scan_layers.size(), [&](std::size_t li) {
    const Layer& scan = scan_layers[li];
    if (cfg.max_thickness_ratio && scan.thickness_ratio > *cfg.max_thickness_ratio) return;
    std::vector<const Layer*> candidates;
    for (int k = -query_length; k <= query_length; ++k) {
      const Layer* m = map.find_layer(scan.cell.offset(scan.axis, k), scan.axis);
      if (m == nullptr || m->grid != scan.grid) continue;
      if (cfg.max_association_age && current_frame - m->last_update > *cfg.max_association_age) continue;
      candidates.push_back(m);
    }
    if (candidates.empty()) return;
    std::vector<Correspondence>& out = per_layer[li];
    for (int i = 0; i < scan.grid; ++i) {
      for (int j = 0; j < scan.grid; ++j) {
        // Isolated scan vertices are not on the scan mesh.
        if (!has_valid_incident_face(scan, i, j, sigma)) continue;
        const double pred = scan.predictions[scan.index(i, j)];
        const Layer* best = nullptr;
        double best_gap = std::numeric_limits<double>::infinity();
        for (const Layer* m : candidates) {
          const double gap = std::abs(m->predictions[m->index(i, j)] - pred);
          if (gap < best_gap && has_valid_incident_face(*m, i, j, sigma)) {
            best = m;
            best_gap = gap;
          }
        }
        if (best == nullptr) continue;
        const std::optional<Vec3> n = try_smoothed_normal(*best, i, j, sigma, sensor_origin);
        if (!n) continue;
        out.push_back({scan.vertex(i, j), best->vertex(i, j), *n, {scan.cell, scan.axis}});
      }
    }
  });
  std::vector<Correspondence> all;
  for (auto& v : per_layer) all.insert(all.end(), v.begin(), v.end());
  if (all.empty()) {
    throw Error(ErrorCode::kNoOverlap, "no correspondences at query length " + std::to_string(query_length));
  }
  return all;
}

// ---------------------------------------------------------------------------
// Residuals

double residual(const Correspondence& c, const Pose& T) {
  return c.normal.dot(transform_point(T, c.scan_point) - c.map_point);
}

Row6 residual_jacobian(const Correspondence& c, const Pose& T) {
  // n^T (-(a)x) = (a x n)^T with a = R v_p + t.
  const Vec3 a = transform_point(T, c.scan_point);
  Row6 row;
  row << a.cross(c.normal).transpose(), c.normal.transpose();
  return row;
}

std::vector<CombinedConstraint> combine_constraints(std::span<const Correspondence> correspondences) {
  std::map<LayerId, CombinedConstraint> groups;
  for (const Correspondence& c : correspondences) {
    CombinedConstraint& g = groups[c.layer];
    g.layer = c.layer;
    g.mean_offset += c.normal.dot(c.map_point);
    g.mean_normal += c.normal;
    g.mean_scan_point += c.scan_point;
    g.normal_point_moment += c.normal * c.scan_point.transpose();
    ++g.count;
  }
  std::vector<CombinedConstraint> out;
  out.reserve(groups.size());
  for (auto& [id, g] : groups) {
    const double inv = 1.0 / static_cast<double>(g.count);
    g.mean_offset *= inv;
    g.mean_normal *= inv;
    g.mean_scan_point *= inv;
    g.normal_point_moment *= inv;
    out.push_back(g);
  }
  return out;
}

double residual(const CombinedConstraint& c, const Pose& T) {
  // mean(n^T R v) = sum_ab R_ab mean(n_a v_b)
  return T.rotation().cwiseProduct(c.normal_point_moment).sum() + c.mean_normal.dot(T.translation()) -
         c.mean_offset;
}

Row6 residual_jacobian(const CombinedConstraint& c, const Pose& T) {
  // mean((R v) x n): W_jk = mean((R v)_j n_k), component i = eps_ijk W_jk.
  const Mat3 w = T.rotation() * c.normal_point_moment.transpose();
  const Vec3 rot = Vec3(w(1, 2) - w(2, 1), w(2, 0) - w(0, 2), w(0, 1) - w(1, 0)) +
                   T.translation().cross(c.mean_normal);
  Row6 row;
  row << rot.transpose(), c.mean_normal.transpose();
  return row;
}

// ---------------------------------------------------------------------------
// Levenberg-Marquardt

namespace {

struct NormalEquations {
  Mat6 hessian = Mat6::Zero();
  Vec6 gradient = Vec6::Zero();
  double cost = 0.0;
};

double robust_cost(double e, const RegistrationConfig& cfg) {
  const double a = std::abs(e);
  if (!cfg.huber_scale || a <= *cfg.huber_scale) return e * e;
  return 2.0 * *cfg.huber_scale * a - *cfg.huber_scale * *cfg.huber_scale;
}

double robust_weight(double e, const RegistrationConfig& cfg) {
  const double a = std::abs(e);
  if (!cfg.huber_scale || a <= *cfg.huber_scale) return 1.0;
  return *cfg.huber_scale / a;
}

double constraint_weight(const Correspondence&, const RegistrationConfig&) { return 1.0; }
double constraint_weight(const CombinedConstraint& c, const RegistrationConfig& cfg) {
  return cfg.count_weighting ? static_cast<double>(c.count) : 1.0;
}

template <typename C>
NormalEquations linearize(std::span<const C> constraints, const Pose& T, const RegistrationConfig& cfg) {
  NormalEquations ne;
  for (const C& c : constraints) {
    const double e = residual(c, T);
    const Row6 j = residual_jacobian(c, T);
    const double w = constraint_weight(c, cfg);
    const double rw = w * robust_weight(e, cfg);
    ne.hessian.noalias() += rw * j.transpose() * j;
    ne.gradient.noalias() += rw * e * j.transpose();
    ne.cost += w * robust_cost(e, cfg);
  }
  return ne;
}

template <typename C>
double total_cost(std::span<const C> constraints, const Pose& T, const RegistrationConfig& cfg) {
  double cost = 0.0;
  for (const C& c : constraints) cost += constraint_weight(c, cfg) * robust_cost(residual(c, T), cfg);
  return cost;
}

template <typename C>
SolveSummary run_lm(std::span<const C> constraints, const Pose& initial, const RegistrationConfig& cfg) {
  if (constraints.size() < 6) {
    throw Error(ErrorCode::kDegenerateProblem, std::to_string(constraints.size()) + " constraints, need >= 6");
  }
  Pose pose = initial;
  NormalEquations ne = linearize(constraints, pose, cfg);

  const Eigen::SelfAdjointEigenSolver<Mat6> eig(ne.hessian, Eigen::EigenvaluesOnly);
  const double max_eig = eig.eigenvalues().maxCoeff();
  const double min_eig = eig.eigenvalues().minCoeff();
  if (!(max_eig > 0.0) || min_eig <= 1e-10 * max_eig) {
    throw Error(ErrorCode::kDegenerateProblem, "normal matrix is rank deficient (eigenvalue ratio " +
                                                   std::to_string(max_eig > 0.0 ? min_eig / max_eig : 0.0) + ")");
  }

  SolveSummary summary;
  summary.initial_cost = ne.cost;
  double lambda = 1e-4;
  for (int it = 0; it < cfg.lm_max_iters; ++it) {
    ++summary.iterations;
    Mat6 damped = ne.hessian;
    damped.diagonal() += lambda * ne.hessian.diagonal();
    const Vec6 delta = damped.ldlt().solve(-ne.gradient);
    if (!delta.allFinite()) throw Error(ErrorCode::kDegenerateProblem, "LM step is not finite");
    if (delta.norm() < cfg.lm_tolerance) break;
    const Pose candidate = retract(pose, Twist::from_vector(delta));
    const double cost = total_cost(constraints, candidate, cfg);
    if (cost < ne.cost) {
      pose = candidate;
      ne = linearize(constraints, pose, cfg);
      ++summary.accepted_steps;
      summary.accepted_costs.push_back(ne.cost);
      lambda = std::max(lambda * 0.1, 1e-12);
    } else {
      lambda *= 10.0;
      if (lambda > 1e12) break;
    }
  }
  summary.pose = pose.orthonormalized();
  summary.final_cost = ne.cost;
  return summary;
}

}  // namespace

SolveSummary solve_lm(std::span<const Correspondence> constraints, const Pose& initial,
                      const RegistrationConfig& cfg) {
  return run_lm(constraints, initial, cfg);
}

SolveSummary solve_lm(std::span<const CombinedConstraint> constraints, const Pose& initial,
                      const RegistrationConfig& cfg) {
  return run_lm(constraints, initial, cfg);
}

// ---------------------------------------------------------------------------

RegistrationResult register_scan(const RawScan& scan, const MeshMap& map, const Pose& guess,
                                 const RegistrationConfig& cfg, const ReconstructionConfig& recon,
                                 ThreadPool* pool, std::int64_t current_frame) {
  cfg.validate();
  if (map.empty()) throw Error(ErrorCode::kNoOverlap, "map is empty");
  RegistrationResult result;
  RegistrationStats& stats = result.stats;
  Pose estimate = guess;

  for (int query_length : cfg.query_schedule) {
    auto t0 = std::chrono::steady_clock::now();
    const std::vector<Layer> layers = reconstruct_scan(scan.points, estimate, recon, pool);
    stats.reconstruct_ms += elapsed_ms(t0);

    t0 = std::chrono::steady_clock::now();
    const Point3 sensor = estimate.translation();
    std::vector<Correspondence> corrs;
    try {
      corrs = associate(layers, map, query_length, cfg, sensor, current_frame, pool);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kNoOverlap || query_length >= cfg.fallback_query) throw;
      corrs = associate(layers, map, cfg.fallback_query, cfg, sensor, current_frame, pool);
      stats.used_fallback_query = true;
    }
    stats.associate_ms += elapsed_ms(t0);

    t0 = std::chrono::steady_clock::now();
    SolveSummary summary;
    stats.raw_correspondences = corrs.size();
    if (cfg.combine) {
      const std::vector<CombinedConstraint> combined = combine_constraints(corrs);
      stats.combined_constraints = combined.size();
      summary = solve_lm(std::span<const CombinedConstraint>(combined), Pose::identity(), cfg);
    } else {
      stats.combined_constraints = 0;
      summary = solve_lm(std::span<const Correspondence>(corrs), Pose::identity(), cfg);
    }
    stats.solve_ms += elapsed_ms(t0);

    estimate = compose(summary.pose, estimate);
    ++stats.outer_iterations;
    stats.lm_iterations += summary.iterations;
    stats.final_cost = summary.final_cost;
  }
  result.pose = estimate;
  return result;
}

}  // namespace slamesh
