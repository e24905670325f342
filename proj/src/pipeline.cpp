#include "slamesh/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "slamesh/error.hpp"
#include "slamesh/mesh.hpp"

namespace slamesh {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::kConfigError, "'" + key + "' expects a number, got '" + value + "'");
  }
}

long long to_integer(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::kConfigError, "'" + key + "' expects an integer, got '" + value + "'");
  }
}

bool to_bool(const std::string& key, const std::string& value) {
  std::string v = value;
  std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw Error(ErrorCode::kConfigError, "'" + key + "' expects a boolean, got '" + value + "'");
}

nlohmann::json pose_json(const Pose& p) {
  nlohmann::json row = nlohmann::json::array();
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) row.push_back(p.rotation()(r, c));
    row.push_back(p.translation()(r));
  }
  return row;
}

}  // namespace

void PipelineConfig::validate() const {
  reconstruction.validate();
  registration.validate();
  if (threads < 1) throw Error(ErrorCode::kConfigError, "threads must be >= 1");
  if (!(min_range >= 0.0) || !(max_range > min_range)) {
    throw Error(ErrorCode::kConfigError, "range limits must satisfy 0 <= min < max");
  }
  if (!(fusion.sigma_update_sq > 0.0)) throw Error(ErrorCode::kConfigError, "sigma_update must be > 0");
  if (export_every > 0 && export_dir.empty()) throw Error(ErrorCode::kConfigError, "export_every needs export_dir");
}

// ---------------------------------------------------------------------------

Pipeline::Pipeline(PipelineConfig cfg)
    : cfg_(std::move(cfg)),
      pool_(std::make_unique<ThreadPool>(cfg_.threads)),
      map_(cfg_.reconstruction.cell_size, cfg_.reconstruction.gp.grid, cfg_.fusion) {
  cfg_.validate();
}

Pose Pipeline::next_guess() const {
  if (trajectory_.empty()) return Pose::identity();
  if (trajectory_.size() == 1) return trajectory_.back();
  return constant_velocity_guess(trajectory_.back(), trajectory_[trajectory_.size() - 2]);
}

FrameReport Pipeline::process_frame(const RawScan& scan) {
  FrameReport report;
  report.frame = trajectory_.size();

  auto t0 = Clock::now();
  RawScan filtered;
  filtered.frame_index = scan.frame_index;
  filtered.timestamp = scan.timestamp;
  filtered.points = filter_range(scan.points, cfg_.min_range, cfg_.max_range);
  report.input_points = filtered.points.size();
  report.ingest_ms = ms_since(t0);

  Pose pose = Pose::identity();
  if (!trajectory_.empty()) {
    const Pose guess = next_guess();
    pose = guess;
    try {
      const RegistrationResult r = register_scan(filtered, map_, guess, cfg_.registration, cfg_.reconstruction,
                                                 pool_.get(), static_cast<std::int64_t>(report.frame));
      pose = r.pose;
      report.reconstruct_ms += r.stats.reconstruct_ms;
      report.associate_ms += r.stats.associate_ms;
      report.solve_ms += r.stats.solve_ms;
      report.raw_correspondences = r.stats.raw_correspondences;
      report.combined_constraints = r.stats.combined_constraints;
      report.lm_iterations = r.stats.lm_iterations;
      report.used_fallback_query = r.stats.used_fallback_query;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kNoOverlap && e.code() != ErrorCode::kDegenerateProblem) throw;
      report.degraded = true;
      report.degraded_reason = std::string(to_string(e.code())) + ": " + e.what();
    }
  }

  t0 = Clock::now();
  const std::vector<Layer> layers = reconstruct_scan(filtered.points, pose, cfg_.reconstruction, pool_.get());
  report.reconstruct_ms += ms_since(t0);
  report.layers = layers.size();

  t0 = Clock::now();
  map_.integrate_scan(layers, static_cast<std::int64_t>(report.frame), pool_.get());
  report.integrate_ms = ms_since(t0);

  trajectory_.push_back(pose);
  report.pose = pose;

  if (cfg_.export_every > 0 && trajectory_.size() % cfg_.export_every == 0) {
    t0 = Clock::now();
    char name[32];
    std::snprintf(name, sizeof(name), "mesh_%06zu.ply", report.frame);
    std::filesystem::create_directories(cfg_.export_dir);
    write_mesh_ply(mesh(), cfg_.export_dir / name, cfg_.mesh_format);
    report.export_ms = ms_since(t0);
  }
  return report;
}

TriangleMesh Pipeline::mesh() const { return extract_mesh(map_, cfg_.registration.sigma_match_sq); }

// ---------------------------------------------------------------------------

SequenceResult run_sequence(const PipelineConfig& cfg, const std::function<void(const FrameReport&)>& on_frame) {
  cfg.validate();
  const auto wall0 = Clock::now();
  const std::vector<std::filesystem::path> frames = list_frames(cfg.input, cfg.format);
  if (frames.empty()) throw Error(ErrorCode::kConfigError, "no input frames in " + cfg.input.string());

  Pipeline pipeline(cfg);
  SequenceResult result;
  result.frames.reserve(frames.size());
  for (std::size_t k = 0; k < frames.size(); ++k) {
    const auto t0 = Clock::now();
    const RawScan scan = read_frame(frames[k], cfg.format, k);
    const double read_ms = ms_since(t0);
    FrameReport report = pipeline.process_frame(scan);
    report.ingest_ms += read_ms;
    if (on_frame) on_frame(report);
    result.frames.push_back(std::move(report));
  }
  result.trajectory = pipeline.trajectory();
  result.mesh = pipeline.mesh();
  result.map = map_stats(pipeline.map());

  if (!cfg.out_trajectory.empty()) {
    if (cfg.trajectory_format == TrajectoryFormat::kTum) {
      std::vector<double> stamps(result.trajectory.size());
      for (std::size_t i = 0; i < stamps.size(); ++i) stamps[i] = static_cast<double>(i);
      write_trajectory_tum(result.trajectory, stamps, cfg.out_trajectory);
    } else {
      write_trajectory_kitti(result.trajectory, cfg.out_trajectory);
    }
  }
  if (!cfg.out_mesh.empty()) write_mesh_ply(result.mesh, cfg.out_mesh, cfg.mesh_format);
  result.wall_ms = ms_since(wall0);
  if (!cfg.report.empty()) {
    std::ofstream out(cfg.report);
    if (!out) throw Error(ErrorCode::kIoError, "cannot write " + cfg.report.string());
    out << report_json(cfg, result) << '\n';
  }
  return result;
}

std::string report_json(const PipelineConfig& cfg, const SequenceResult& result) {
  using nlohmann::json;
  json frames = json::array();
  std::size_t degraded = 0;
  double frame_ms = 0.0;
  for (const FrameReport& f : result.frames) {
    degraded += f.degraded ? 1 : 0;
    frame_ms += f.total_ms();
    json j = {
        {"frame", f.frame},
        {"pose", pose_json(f.pose)},
        {"input_points", f.input_points},
        {"layers", f.layers},
        {"timings_ms",
         {{"ingest", f.ingest_ms},
          {"reconstruct", f.reconstruct_ms},
          {"associate", f.associate_ms},
          {"solve", f.solve_ms},
          {"integrate", f.integrate_ms},
          {"export", f.export_ms},
          {"total", f.total_ms()}}},
        {"correspondences", {{"raw", f.raw_correspondences}, {"combined", f.combined_constraints}}},
        {"lm_iterations", f.lm_iterations},
        {"used_fallback_query", f.used_fallback_query},
        {"degraded", f.degraded},
    };
    if (f.degraded) j["degraded_reason"] = f.degraded_reason;
    frames.push_back(std::move(j));
  }
  const std::size_t n = result.frames.size();
  json totals = {
      {"frames", n},
      {"degraded_frames", degraded},
      {"wall_ms", result.wall_ms},
      {"mean_frame_ms", n ? frame_ms / static_cast<double>(n) : 0.0},
      {"map",
       {{"cells", result.map.cells},
        {"layers", result.map.layers},
        {"vertices", result.map.vertices},
        {"bytes", result.map.bytes}}},
      {"mesh", {{"vertices", result.mesh.vertices.size()}, {"faces", result.mesh.faces.size()}}},
  };
  json config = {
      {"cell_size", cfg.reconstruction.cell_size},
      {"grid", cfg.reconstruction.gp.grid},
      {"sigma_in", cfg.reconstruction.gp.sigma_in_sq},
      {"sigma_match", cfg.registration.sigma_match_sq},
      {"sigma_update", cfg.fusion.sigma_update_sq},
      {"threads", cfg.threads},
      {"query_schedule", cfg.registration.query_schedule},
      {"combine", cfg.registration.combine},
      {"min_range", cfg.min_range},
      {"max_range", cfg.max_range},
  };
  config["max_thickness"] = cfg.registration.max_thickness_ratio ? json(*cfg.registration.max_thickness_ratio) : json(nullptr);
  config["huber"] = cfg.registration.huber_scale ? json(*cfg.registration.huber_scale) : json(nullptr);
  return json{{"version", SLAMESH_VERSION}, {"config", config}, {"frames", frames}, {"totals", totals}}.dump(2);
}

// ---------------------------------------------------------------------------

std::vector<int> parse_query_schedule(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) throw Error(ErrorCode::kConfigError, "empty entry in query schedule '" + text + "'");
    const long long v = to_integer("query-schedule", item);
    if (v < 0) throw Error(ErrorCode::kConfigError, "query lengths must be >= 0");
    out.push_back(static_cast<int>(v));
  }
  if (out.empty()) throw Error(ErrorCode::kConfigError, "query schedule is empty");
  return out;
}

void apply_config_value(const std::string& raw_key, const std::string& raw_value, PipelineConfig& cfg) {
  std::string key = trim(raw_key);
  std::replace(key.begin(), key.end(), '_', '-');
  const std::string value = trim(raw_value);
  if (key == "input") {
    cfg.input = value;
  } else if (key == "format") {
    cfg.format = parse_sequence_format(value);
  } else if (key == "cell-size") {
    cfg.reconstruction.cell_size = to_double(key, value);
  } else if (key == "grid") {
    cfg.reconstruction.gp.grid = static_cast<int>(to_integer(key, value));
  } else if (key == "sigma-in") {
    cfg.reconstruction.gp.sigma_in_sq = to_double(key, value);
  } else if (key == "sigma-match") {
    cfg.registration.sigma_match_sq = to_double(key, value);
  } else if (key == "sigma-update") {
    cfg.fusion.sigma_update_sq = to_double(key, value);
  } else if (key == "fusion-rule") {
    if (value == "precision") {
      cfg.fusion.rule = FusionRule::kPrecision;
    } else if (value == "literal") {
      cfg.fusion.rule = FusionRule::kLiteralVariance;
    } else {
      throw Error(ErrorCode::kConfigError, "fusion-rule must be precision or literal");
    }
  } else if (key == "threads") {
    const long long t = to_integer(key, value);
    if (t < 1) throw Error(ErrorCode::kConfigError, "threads must be >= 1");
    cfg.threads = static_cast<std::size_t>(t);
  } else if (key == "query-schedule") {
    cfg.registration.query_schedule = parse_query_schedule(value);
  } else if (key == "combine") {
    cfg.registration.combine = to_bool(key, value);
  } else if (key == "count-weighting") {
    cfg.registration.count_weighting = to_bool(key, value);
  } else if (key == "huber") {
    cfg.registration.huber_scale = to_double(key, value);
  } else if (key == "max-thickness") {
    if (value == "off") {
      cfg.registration.max_thickness_ratio.reset();
    } else {
      cfg.registration.max_thickness_ratio = to_double(key, value);
    }
  } else if (key == "lm-max-iters") {
    cfg.registration.lm_max_iters = static_cast<int>(to_integer(key, value));
  } else if (key == "min-range") {
    cfg.min_range = to_double(key, value);
  } else if (key == "max-range") {
    cfg.max_range = to_double(key, value);
  } else if (key == "downsample") {
    cfg.reconstruction.downsample_resolution = to_double(key, value);
  } else if (key == "out-traj") {
    cfg.out_trajectory = value;
  } else if (key == "out-mesh") {
    cfg.out_mesh = value;
  } else if (key == "report") {
    cfg.report = value;
  } else if (key == "traj-format") {
    if (value == "kitti") {
      cfg.trajectory_format = TrajectoryFormat::kKitti;
    } else if (value == "tum") {
      cfg.trajectory_format = TrajectoryFormat::kTum;
    } else {
      throw Error(ErrorCode::kConfigError, "traj-format must be kitti or tum");
    }
  } else if (key == "export-every") {
    const long long n = to_integer(key, value);
    if (n < 0) throw Error(ErrorCode::kConfigError, "export-every must be >= 0");
    cfg.export_every = static_cast<std::size_t>(n);
  } else if (key == "export-dir") {
    cfg.export_dir = value;
  } else {
    throw Error(ErrorCode::kConfigError, "unknown config key '" + key + "'");
  }
}

void apply_config_file(const std::filesystem::path& path, PipelineConfig& cfg) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open config " + path.string());
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::kConfigError, path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    }
    apply_config_value(line.substr(0, eq), line.substr(eq + 1), cfg);
  }
}

}  // namespace slamesh
