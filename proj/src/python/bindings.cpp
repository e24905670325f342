#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <algorithm>
#include <string>
#include <vector>

#include "slamesh/error.hpp"
#include "slamesh/eval.hpp"
#include "slamesh/gp.hpp"
#include "slamesh/io.hpp"
#include "slamesh/pipeline.hpp"
#include "slamesh/synth.hpp"

namespace py = pybind11;
using namespace slamesh;

namespace {

using PointArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

std::vector<Point3> to_points(const PointArray& a) {
  if (a.ndim() != 2 || a.shape(1) != 3) throw py::value_error("expected an (N, 3) array");
  std::vector<Point3> out(static_cast<std::size_t>(a.shape(0)));
  const auto r = a.unchecked<2>();
  for (py::ssize_t i = 0; i < a.shape(0); ++i) out[static_cast<std::size_t>(i)] = Point3(r(i, 0), r(i, 1), r(i, 2));
  return out;
}

py::array_t<double> from_points(const std::vector<Point3>& pts) {
  py::array_t<double> a({static_cast<py::ssize_t>(pts.size()), py::ssize_t{3}});
  auto w = a.mutable_unchecked<2>();
  for (std::size_t i = 0; i < pts.size(); ++i) {
    for (int k = 0; k < 3; ++k) w(static_cast<py::ssize_t>(i), k) = pts[i][k];
  }
  return a;
}

py::array_t<double> from_values(const std::vector<double>& v) {
  py::array_t<double> a(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), a.mutable_data());
  return a;
}

Pose to_pose(const Eigen::Matrix4d& m) { return Pose(m.topLeftCorner<3, 3>(), m.topRightCorner<3, 1>()); }

std::vector<Pose> to_poses(const std::vector<Eigen::Matrix4d>& ms) {
  std::vector<Pose> out;
  out.reserve(ms.size());
  for (const auto& m : ms) out.push_back(to_pose(m));
  return out;
}

std::vector<Eigen::Matrix4d> from_poses(const std::vector<Pose>& poses) {
  std::vector<Eigen::Matrix4d> out;
  out.reserve(poses.size());
  for (const auto& p : poses) out.push_back(p.matrix());
  return out;
}

using FaceArray = py::array_t<std::uint32_t, py::array::c_style | py::array::forcecast>;

TriangleMesh to_mesh(const PointArray& vertices, const FaceArray& faces) {
  TriangleMesh m;
  m.vertices = to_points(vertices);
  if (faces.ndim() != 2 || faces.shape(1) != 3) throw py::value_error("expected an (M, 3) face array");
  const auto r = faces.unchecked<2>();
  for (py::ssize_t i = 0; i < faces.shape(0); ++i) m.faces.push_back({r(i, 0), r(i, 1), r(i, 2)});
  return m;
}

py::tuple from_mesh(const TriangleMesh& m) {
  py::array_t<std::uint32_t> f({static_cast<py::ssize_t>(m.faces.size()), py::ssize_t{3}});
  auto w = f.mutable_unchecked<2>();
  for (std::size_t i = 0; i < m.faces.size(); ++i) {
    for (int k = 0; k < 3; ++k) w(static_cast<py::ssize_t>(i), k) = m.faces[i][static_cast<std::size_t>(k)];
  }
  return py::make_tuple(from_points(m.vertices), f);
}

PipelineConfig config_from(const py::dict& options) {
  PipelineConfig cfg;
  for (const auto& [key, value] : options) {
    apply_config_value(py::str(key), py::str(value), cfg);
  }
  cfg.validate();
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "LiDAR odometry and meshing with per-cell Gaussian process layers";
  m.attr("__version__") = SLAMESH_VERSION;

  static py::exception<Error> error(m, "Error");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::set_error(error, ("[" + std::string(to_string(e.code())) + "] " + e.what()).c_str());
    }
  });

  m.def(
      "gp_predict",
      [](const PointArray& inputs, const PointArray& queries, double sigma_in_sq) {
        if (inputs.ndim() != 2 || inputs.shape(1) != 3) throw py::value_error("inputs must be (N, 3): u, v, value");
        if (queries.ndim() != 2 || queries.shape(1) != 2) throw py::value_error("queries must be (M, 2)");
        const auto in = inputs.unchecked<2>();
        const auto q = queries.unchecked<2>();
        std::vector<GpSample> samples;
        for (py::ssize_t i = 0; i < inputs.shape(0); ++i) samples.push_back({Vec2(in(i, 0), in(i, 1)), in(i, 2)});
        std::vector<Vec2> locs;
        for (py::ssize_t i = 0; i < queries.shape(0); ++i) locs.emplace_back(q(i, 0), q(i, 1));
        GpConfig cfg;
        cfg.sigma_in_sq = sigma_in_sq;
        const GpPrediction p = gp_predict(samples, locs, cfg);
        return py::make_tuple(from_values(p.mean), from_values(p.variance));
      },
      py::arg("inputs"), py::arg("queries"), py::arg("sigma_in_sq") = 0.02,
      "Posterior mean and variance; inputs rows are (u, v, value).");

  py::class_<Pipeline>(m, "Pipeline")
      .def(py::init([](const py::dict& options) { return std::make_unique<Pipeline>(config_from(options)); }),
           py::arg("options") = py::dict(), "Options use the CLI flag names, e.g. {'cell-size': 1.6}.")
      .def(
          "process_frame",
          [](Pipeline& p, const PointArray& points) {
            RawScan scan;
            scan.points = to_points(points);
            scan.frame_index = p.trajectory().size();
            const FrameReport r = p.process_frame(scan);
            py::dict d;
            d["frame"] = r.frame;
            d["pose"] = r.pose.matrix();
            d["degraded"] = r.degraded;
            d["raw_correspondences"] = r.raw_correspondences;
            d["combined_constraints"] = r.combined_constraints;
            d["total_ms"] = r.total_ms();
            return d;
          },
          py::arg("points"), "Registers and integrates one sensor-frame (N, 3) scan.")
      .def_property_readonly("trajectory", [](const Pipeline& p) { return from_poses(p.trajectory()); })
      .def("mesh", [](const Pipeline& p) { return from_mesh(p.mesh()); }, "(vertices, faces) arrays.");

  m.def(
      "run_sequence",
      [](const std::filesystem::path& input, const std::string& format, const py::dict& options) {
        PipelineConfig cfg = config_from(options);
        cfg.input = input;
        cfg.format = parse_sequence_format(format);
        SequenceResult r;
        {
          py::gil_scoped_release release;
          r = run_sequence(cfg);
        }
        return py::make_tuple(from_poses(r.trajectory), from_mesh(r.mesh));
      },
      py::arg("input"), py::arg("format") = "kitti-bin", py::arg("options") = py::dict(),
      "Runs a directory of scans; returns (trajectory, (vertices, faces)).");

  m.def(
      "synth",
      [](const std::string& scene, std::size_t frames, std::uint64_t seed, const std::filesystem::path& out,
         double noise, double gt_range, double gt_spacing) {
        SynthOptions opts;
        opts.scene = parse_scene_kind(scene);
        opts.frames = frames;
        opts.seed = seed;
        opts.pattern.noise_sigma = noise;
        opts.gt_max_range = gt_range;
        opts.gt_spacing = gt_spacing;
        py::gil_scoped_release release;
        write_synthetic_dataset(opts, out);
      },
      py::arg("scene"), py::arg("frames"), py::arg("seed"), py::arg("out"), py::arg("noise") = 0.02,
      py::arg("gt_range") = 30.0, py::arg("gt_spacing") = 0.05);

  m.def(
      "relative_pose_error",
      [](const std::vector<Eigen::Matrix4d>& est, const std::vector<Eigen::Matrix4d>& gt) {
        const RelativePoseError e = relative_pose_error(to_poses(est), to_poses(gt));
        return py::make_tuple(e.translation_pct, e.rotation_deg_per_100m, e.segments);
      },
      py::arg("est"), py::arg("gt"), "(translation %, deg / 100 m, segments).");
  m.def(
      "absolute_trajectory_rmse",
      [](const std::vector<Eigen::Matrix4d>& est, const std::vector<Eigen::Matrix4d>& gt) {
        return absolute_trajectory_rmse(to_poses(est), to_poses(gt));
      },
      py::arg("est"), py::arg("gt"));
  m.def("f1_score", &f1_score, py::arg("precision"), py::arg("recall"));
  m.def(
      "mesh_prf",
      [](const PointArray& vertices, const FaceArray& faces,
         const PointArray& gt_cloud, double d, double density, std::uint64_t seed) {
        const MeshScore s = mesh_prf(to_mesh(vertices, faces), to_points(gt_cloud), d, density, seed);
        return py::make_tuple(s.precision, s.recall, s.f1);
      },
      py::arg("vertices"), py::arg("faces"), py::arg("gt_cloud"), py::arg("d") = 0.3, py::arg("density") = 100.0,
      py::arg("seed") = 0, "(precision, recall, f1) in percent.");

  m.def("read_kitti_bin", [](const std::filesystem::path& p) { return from_points(read_kitti_bin(p).points); });
  m.def("read_point_cloud_ply", [](const std::filesystem::path& p) { return from_points(read_point_cloud_ply(p)); });
  m.def("read_mesh_ply", [](const std::filesystem::path& p) { return from_mesh(read_mesh_ply(p)); });
  m.def("read_trajectory_kitti",
        [](const std::filesystem::path& p) { return from_poses(read_trajectory_kitti(p)); });
}
