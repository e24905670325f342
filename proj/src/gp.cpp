#include "slamesh/gp.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <unordered_map>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "slamesh/error.hpp"

namespace slamesh {

void GpConfig::validate() const {
  if (grid < 2) throw Error(ErrorCode::kInvalidParam, "grid must be >= 2");
  if (!(sigma_in_sq > 0.0)) throw Error(ErrorCode::kInvalidParam, "sigma_in_sq must be > 0");
  if (!(kappa > 0.0)) throw Error(ErrorCode::kInvalidParam, "kappa must be > 0");
  if (min_points < 1 || max_points < min_points) {
    throw Error(ErrorCode::kInvalidParam, "need 1 <= min_points <= max_points");
  }
}

double kernel(const Vec2& a, const Vec2& b, double kappa) { return std::exp(-kappa * (a - b).norm()); }

GpPrediction gp_predict(std::span<const GpSample> inputs, std::span<const Vec2> queries, const GpConfig& cfg) {
  const auto n = static_cast<Eigen::Index>(inputs.size());
  const auto m = static_cast<Eigen::Index>(queries.size());
  if (n == 0 || inputs.size() > cfg.max_points) {
    throw Error(ErrorCode::kInvalidParam, "gp_predict needs 1.." + std::to_string(cfg.max_points) + " inputs");
  }
  if (m == 0) throw Error(ErrorCode::kInvalidParam, "gp_predict needs at least one query");

  double mean = 0.0;
  for (const GpSample& s : inputs) {
    if (!s.location.allFinite() || !std::isfinite(s.value)) {
      throw Error(ErrorCode::kSingularSystem, "non-finite GP input");
    }
    mean += s.value;
  }
  mean /= static_cast<double>(n);

  Eigen::MatrixXd gram(n, n);
  Eigen::VectorXd centered(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    centered(r) = inputs[r].value - mean;
    gram(r, r) = 1.0 + cfg.sigma_in_sq;
    for (Eigen::Index c = 0; c < r; ++c) {
      const double k = kernel(inputs[r].location, inputs[c].location, cfg.kappa);
      gram(r, c) = k;
      gram(c, r) = k;
    }
  }
  const Eigen::LLT<Eigen::MatrixXd> llt(gram);
  if (llt.info() != Eigen::Success) throw Error(ErrorCode::kSingularSystem, "Cholesky factorization failed");

  Eigen::MatrixXd cross(n, m);  // k_ij
  for (Eigen::Index q = 0; q < m; ++q) {
    for (Eigen::Index r = 0; r < n; ++r) cross(r, q) = kernel(inputs[r].location, queries[q], cfg.kappa);
  }
  const Eigen::VectorXd alpha = llt.solve(centered);
  const Eigen::MatrixXd whitened = llt.matrixL().solve(cross);

  GpPrediction out;
  out.mean.resize(m);
  out.variance.resize(m);
  for (Eigen::Index q = 0; q < m; ++q) {
    out.mean[q] = mean + cross.col(q).dot(alpha);
    out.variance[q] = std::clamp(1.0 - whitened.col(q).squaredNorm(), 0.0, 1.0);
  }
  return out;
}

// ---------------------------------------------------------------------------

Layer Layer::blank(const CellIndex& cell, Axis axis, int grid, double cell_size) {
  Layer layer;
  layer.cell = cell;
  layer.axis = axis;
  layer.grid = grid;
  layer.cell_size = cell_size;
  layer.predictions.assign(layer.size(), 0.0);
  layer.variances.assign(layer.size(), 1.0);
  return layer;
}

Vec2 Layer::location(int i, int j) const {
  const double p = pitch();
  return {cell[location_u(axis)] * cell_size + i * p, cell[location_v(axis)] * cell_size + j * p};
}

Point3 Layer::vertex(int i, int j) const { return to_world(axis, location(i, j), predictions[index(i, j)]); }

bool Layer::same_grid(const Layer& other) const {
  return cell == other.cell && axis == other.axis && grid == other.grid && cell_size == other.cell_size &&
         predictions.size() == other.predictions.size() && variances.size() == other.variances.size();
}

Point3 to_world(Axis axis, const Vec2& location, double prediction) {
  Point3 p;
  p[axis_id(axis)] = prediction;
  p[location_u(axis)] = location.x();
  p[location_v(axis)] = location.y();
  return p;
}

// ---------------------------------------------------------------------------

namespace {

// A point set whose second principal variance is below this share of the
// first is treated as a line.
constexpr double kCollinearRatio = 1e-4;

// Selection and tie-break order.
constexpr std::array<Axis, 3> kPreference{Axis::kZ, Axis::kX, Axis::kY};

Axis min_variance_axis(std::span<const Point3> points) {
  Vec3 mean = Vec3::Zero();
  for (const Point3& p : points) mean += p;
  mean /= static_cast<double>(points.size());
  Vec3 var = Vec3::Zero();
  for (const Point3& p : points) var += (p - mean).cwiseAbs2();
  Axis best = kPreference[0];
  for (Axis a : kPreference) {
    if (var[axis_id(a)] < var[axis_id(best)]) best = a;
  }
  return best;
}

/// Within every location bin of one grid pitch, the spread of the predicted
/// coordinate stays below half a cell.
bool single_valued(std::span<const Point3> points, Axis axis, double cell_size, int grid) {
  const double pitch = cell_size / (grid - 1);
  const int u = location_u(axis), v = location_v(axis), w = axis_id(axis);
  struct Span {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
  };
  std::unordered_map<std::int64_t, Span> bins;
  for (const Point3& p : points) {
    const auto bu = static_cast<std::int64_t>(std::floor(p[u] / pitch));
    const auto bv = static_cast<std::int64_t>(std::floor(p[v] / pitch));
    Span& s = bins[(bu << 32) ^ (bv & 0xffffffff)];
    s.lo = std::min(s.lo, p[w]);
    s.hi = std::max(s.hi, p[w]);
  }
  return std::all_of(bins.begin(), bins.end(), [&](const auto& kv) { return kv.second.hi - kv.second.lo < 0.5 * cell_size; });
}

}  // namespace

Vec3 principal_variances(std::span<const Point3> points) {
  if (points.empty()) return Vec3::Zero();
  Vec3 mean = Vec3::Zero();
  for (const Point3& p : points) mean += p;
  mean /= static_cast<double>(points.size());
  Mat3 cov = Mat3::Zero();
  for (const Point3& p : points) cov.noalias() += (p - mean) * (p - mean).transpose();
  cov /= static_cast<double>(points.size());
  return Eigen::SelfAdjointEigenSolver<Mat3>(cov, Eigen::EigenvaluesOnly).eigenvalues();
}

namespace {

bool spans_surface(const Vec3& ev) { return ev[1] > kCollinearRatio * ev[2]; }

}  // namespace

bool spans_surface(std::span<const Point3> points) {
  return points.size() >= 3 && spans_surface(principal_variances(points));
}

std::vector<Axis> select_axes(std::span<const Point3> points, const GpConfig& cfg, double cell_size) {
  if (points.size() < cfg.min_points) {
    throw Error(ErrorCode::kTooFewPoints, std::to_string(points.size()) + " points, need " + std::to_string(cfg.min_points));
  }
  if (cfg.axis_mode == AxisMode::kSingle) return {min_variance_axis(points)};
  std::vector<Axis> axes;
  for (Axis a : kPreference) {
    if (single_valued(points, a, cell_size, cfg.grid)) axes.push_back(a);
  }
  if (axes.empty()) axes.push_back(min_variance_axis(points));
  return axes;
}

std::vector<Layer> reconstruct_cell(const CellIndex& cell, std::span<const Point3> points, const GpConfig& cfg,
                                    double cell_size) {
  std::vector<Axis> axes = select_axes(points, cfg, cell_size);
  const Vec3 ev = principal_variances(points);
  if (points.size() < 3 || !spans_surface(ev)) return {};
  std::sort(axes.begin(), axes.end());

  // Deterministic stride thinning keeps the factorization bounded.
  std::vector<std::size_t> chosen;
  const std::size_t n = points.size();
  const std::size_t keep = std::min(n, cfg.max_points);
  chosen.reserve(keep);
  for (std::size_t k = 0; k < keep; ++k) chosen.push_back(k * n / keep);

  std::vector<Layer> layers;
  layers.reserve(axes.size());
  for (Axis axis : axes) {
    Layer layer = Layer::blank(cell, axis, cfg.grid, cell_size);
    const int u = location_u(axis), v = location_v(axis), w = axis_id(axis);
    std::vector<GpSample> samples;
    samples.reserve(keep);
    for (std::size_t idx : chosen) samples.push_back({Vec2(points[idx][u], points[idx][v]), points[idx][w]});
    std::vector<Vec2> queries;
    queries.reserve(layer.size());
    for (int i = 0; i < cfg.grid; ++i) {
      for (int j = 0; j < cfg.grid; ++j) queries.push_back(layer.location(i, j));
    }
    GpPrediction pred = gp_predict(samples, queries, cfg);
    layer.predictions = std::move(pred.mean);
    layer.variances = std::move(pred.variance);
    layer.observation_count = 1;
    layer.thickness_ratio = ev[0] / ev[1];
    layers.push_back(std::move(layer));
  }
  return layers;
}

}  // namespace slamesh
