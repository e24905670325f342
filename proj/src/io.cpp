#include "slamesh/io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <unordered_map>

#include <Eigen/Geometry>

#include "slamesh/error.hpp"

namespace slamesh {

namespace fs = std::filesystem;

std::string_view axis_name(Axis a) {
  switch (a) {
    case Axis::kX: return "X";
    case Axis::kY: return "Y";
    case Axis::kZ: return "Z";
  }
  return "?";
}

Vec3 TriangleMesh::face_normal(std::size_t f) const {
  const Face& face = faces.at(f);
  const Vec3 n = (vertices[face[1]] - vertices[face[0]]).cross(vertices[face[2]] - vertices[face[0]]);
  const double len = n.norm();
  if (len <= 1e-12) throw Error(ErrorCode::kDegenerateFace, "face " + std::to_string(f) + " has zero area");
  return n / len;
}

double TriangleMesh::face_area(std::size_t f) const {
  const Face& face = faces.at(f);
  return 0.5 * (vertices[face[1]] - vertices[face[0]]).cross(vertices[face[2]] - vertices[face[0]]).norm();
}

// ---------------------------------------------------------------------------

std::vector<Point3> downsample(std::span<const Point3> points, double resolution, DownsampleMode mode) {
  if (!(resolution > 0.0)) throw Error(ErrorCode::kInvalidParam, "downsample resolution must be > 0");
  std::unordered_map<CellIndex, std::size_t, CellIndexHash> slot;
  slot.reserve(points.size());
  std::vector<Point3> out;
  std::vector<std::size_t> counts;
  for (const Point3& p : points) {
    auto [it, inserted] = slot.try_emplace(CellIndex::of(p, resolution), out.size());
    if (inserted) {
      out.push_back(p);
      counts.push_back(1);
    } else if (mode == DownsampleMode::kCentroid) {
      out[it->second] += p;
      ++counts[it->second];
    }
  }
  if (mode == DownsampleMode::kCentroid) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] /= static_cast<double>(counts[i]);
  }
  return out;
}

RawScan downsample(const RawScan& scan, double resolution, DownsampleMode mode) {
  RawScan out = scan;
  out.points = downsample(scan.points, resolution, mode);
  return out;
}

std::vector<Point3> filter_range(std::span<const Point3> points, double min_range, double max_range) {
  if (min_range < 0.0 || max_range < min_range) throw Error(ErrorCode::kInvalidParam, "bad range limits");
  const double lo = min_range * min_range, hi = max_range * max_range;
  std::vector<Point3> out;
  out.reserve(points.size());
  for (const Point3& p : points) {
    const double d2 = p.squaredNorm();
    if (d2 >= lo && d2 <= hi) out.push_back(p);
  }
  return out;
}

std::vector<Point3> transform_points(const Pose& T, std::span<const Point3> points) {
  std::vector<Point3> out;
  out.reserve(points.size());
  for (const Point3& p : points) out.push_back(transform_point(T, p));
  return out;
}

CellBuckets assign_to_cells(std::span<const Point3> points, double cell_size) {
  if (!(cell_size > 0.0)) throw Error(ErrorCode::kInvalidParam, "cell_size must be > 0");
  CellBuckets buckets;
  for (const Point3& p : points) buckets[CellIndex::of(p, cell_size)].push_back(p);
  return buckets;
}

// ---------------------------------------------------------------------------
// Little-endian helpers

namespace {

template <typename T>
T from_le(const char* bytes) {
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    char buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    std::reverse(buf, buf + sizeof(T));
    std::memcpy(&value, buf, sizeof(T));
  }
  return value;
}

template <typename T>
void put_le(std::ostream& os, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  os.write(buf, sizeof(T));
}

std::ofstream open_out(const fs::path& path, bool binary) {
  std::ofstream os(path, binary ? std::ios::binary | std::ios::trunc : std::ios::trunc);
  if (!os) throw Error(ErrorCode::kIoError, "cannot open for writing: " + path.string());
  return os;
}

std::ifstream open_in(const fs::path& path, bool binary) {
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) throw Error(ErrorCode::kIoError, "no such file: " + path.string());
  std::ifstream is(path, binary ? std::ios::binary : std::ios::in);
  if (!is) throw Error(ErrorCode::kIoError, "cannot open for reading: " + path.string());
  return is;
}

}  // namespace

RawScan read_kitti_bin(const fs::path& path) {
  std::ifstream is = open_in(path, true);
  std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (is.bad()) throw Error(ErrorCode::kIoError, "read failed: " + path.string());
  if (bytes.size() % 16 != 0) {
    throw Error(ErrorCode::kFormatError,
                path.string() + ": length " + std::to_string(bytes.size()) + " is not a multiple of 16");
  }
  RawScan scan;
  scan.points.reserve(bytes.size() / 16);
  for (std::size_t off = 0; off < bytes.size(); off += 16) {
    const Point3 p(from_le<float>(&bytes[off]), from_le<float>(&bytes[off + 4]), from_le<float>(&bytes[off + 8]));
    if (p.allFinite()) scan.points.push_back(p);
  }
  return scan;
}

void write_kitti_bin(std::span<const Point3> points, const fs::path& path) {
  std::ofstream os = open_out(path, true);
  for (const Point3& p : points) {
    put_le<float>(os, static_cast<float>(p.x()));
    put_le<float>(os, static_cast<float>(p.y()));
    put_le<float>(os, static_cast<float>(p.z()));
    put_le<float>(os, 0.0f);
  }
  if (!os) throw Error(ErrorCode::kIoError, "write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// PLY

void write_mesh_ply(const TriangleMesh& mesh, const fs::path& path, PlyFormat format) {
  const std::size_t nv = mesh.vertices.size();
  if (!mesh.variances.empty() && mesh.variances.size() != nv) {
    throw Error(ErrorCode::kInvalidMesh, "variance count does not match vertex count");
  }
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    for (std::uint32_t idx : mesh.faces[f]) {
      if (idx >= nv) {
        throw Error(ErrorCode::kInvalidMesh,
                    "face " + std::to_string(f) + " references vertex " + std::to_string(idx) + " of " +
                        std::to_string(nv));
      }
    }
  }
  const bool binary = format == PlyFormat::kBinary;
  std::ofstream os = open_out(path, binary);
  os << "ply\n"
     << "format " << (binary ? "binary_little_endian" : "ascii") << " 1.0\n"
     << "element vertex " << nv << "\n"
     << "property float x\nproperty float y\nproperty float z\nproperty float quality\n"
     << "element face " << mesh.faces.size() << "\n"
     << "property list uchar int vertex_indices\n"
     << "end_header\n";
  auto quality = [&](std::size_t i) { return mesh.variances.empty() ? 0.0f : static_cast<float>(mesh.variances[i]); };
  if (binary) {
    for (std::size_t i = 0; i < nv; ++i) {
      for (int k = 0; k < 3; ++k) put_le<float>(os, static_cast<float>(mesh.vertices[i][k]));
      put_le<float>(os, quality(i));
    }
    for (const Face& f : mesh.faces) {
      put_le<std::uint8_t>(os, 3);
      for (std::uint32_t idx : f) put_le<std::int32_t>(os, static_cast<std::int32_t>(idx));
    }
  } else {
    os << std::setprecision(std::numeric_limits<float>::max_digits10);
    for (std::size_t i = 0; i < nv; ++i) {
      os << static_cast<float>(mesh.vertices[i].x()) << ' ' << static_cast<float>(mesh.vertices[i].y()) << ' '
         << static_cast<float>(mesh.vertices[i].z()) << ' ' << quality(i) << '\n';
    }
    for (const Face& f : mesh.faces) os << "3 " << f[0] << ' ' << f[1] << ' ' << f[2] << '\n';
  }
  if (!os) throw Error(ErrorCode::kIoError, "write failed: " + path.string());
}

namespace {

enum class PlyType { kInt8, kUInt8, kInt16, kUInt16, kInt32, kUInt32, kFloat32, kFloat64 };

PlyType parse_ply_type(const std::string& name) {
  static const std::unordered_map<std::string, PlyType> kTypes{
      {"char", PlyType::kInt8},     {"int8", PlyType::kInt8},       {"uchar", PlyType::kUInt8},
      {"uint8", PlyType::kUInt8},   {"short", PlyType::kInt16},     {"int16", PlyType::kInt16},
      {"ushort", PlyType::kUInt16}, {"uint16", PlyType::kUInt16},   {"int", PlyType::kInt32},
      {"int32", PlyType::kInt32},   {"uint", PlyType::kUInt32},     {"uint32", PlyType::kUInt32},
      {"float", PlyType::kFloat32}, {"float32", PlyType::kFloat32}, {"double", PlyType::kFloat64},
      {"float64", PlyType::kFloat64}};
  auto it = kTypes.find(name);
  if (it == kTypes.end()) throw Error(ErrorCode::kFormatError, "unknown PLY type '" + name + "'");
  return it->second;
}

std::size_t ply_size(PlyType t) {
  switch (t) {
    case PlyType::kInt8:
    case PlyType::kUInt8: return 1;
    case PlyType::kInt16:
    case PlyType::kUInt16: return 2;
    case PlyType::kInt32:
    case PlyType::kUInt32:
    case PlyType::kFloat32: return 4;
    case PlyType::kFloat64: return 8;
  }
  return 0;
}

struct PlyProperty {
  std::string name;
  PlyType type = PlyType::kFloat32;
  bool is_list = false;
  PlyType count_type = PlyType::kUInt8;
};

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<PlyProperty> properties;
};

/// Sequential reader over either the ascii token stream or the binary payload.
class PlyCursor {
 public:
  PlyCursor(std::istream& is, bool binary) : is_(is), binary_(binary) {}

  double read(PlyType t) {
    if (!binary_) {
      double v = 0.0;
      if (!(is_ >> v)) throw Error(ErrorCode::kFormatError, "truncated PLY ascii body");
      return v;
    }
    char buf[8];
    const std::size_t n = ply_size(t);
    if (!is_.read(buf, static_cast<std::streamsize>(n))) throw Error(ErrorCode::kFormatError, "truncated PLY binary body");
    switch (t) {
      case PlyType::kInt8: return from_le<std::int8_t>(buf);
      case PlyType::kUInt8: return from_le<std::uint8_t>(buf);
      case PlyType::kInt16: return from_le<std::int16_t>(buf);
      case PlyType::kUInt16: return from_le<std::uint16_t>(buf);
      case PlyType::kInt32: return from_le<std::int32_t>(buf);
      case PlyType::kUInt32: return from_le<std::uint32_t>(buf);
      case PlyType::kFloat32: return from_le<float>(buf);
      case PlyType::kFloat64: return from_le<double>(buf);
    }
    return 0.0;
  }

 private:
  std::istream& is_;
  bool binary_;
};

}  // namespace

TriangleMesh read_mesh_ply(const fs::path& path) {
  std::ifstream is = open_in(path, true);
  std::string line;
  if (!std::getline(is, line) || line.rfind("ply", 0) != 0) {
    throw Error(ErrorCode::kFormatError, path.string() + ": missing 'ply' magic");
  }
  bool binary = false;
  std::vector<PlyElement> elements;
  bool header_done = false;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string keyword;
    ls >> keyword;
    if (keyword == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt == "ascii") {
        binary = false;
      } else if (fmt == "binary_little_endian") {
        binary = true;
      } else {
        throw Error(ErrorCode::kFormatError, "unsupported PLY format '" + fmt + "'");
      }
    } else if (keyword == "element") {
      PlyElement e;
      ls >> e.name >> e.count;
      elements.push_back(std::move(e));
    } else if (keyword == "property") {
      if (elements.empty()) throw Error(ErrorCode::kFormatError, "PLY property before element");
      PlyProperty p;
      std::string type;
      ls >> type;
      if (type == "list") {
        std::string count_type, item_type;
        ls >> count_type >> item_type >> p.name;
        p.is_list = true;
        p.count_type = parse_ply_type(count_type);
        p.type = parse_ply_type(item_type);
      } else {
        p.type = parse_ply_type(type);
        ls >> p.name;
      }
      elements.back().properties.push_back(std::move(p));
    } else if (keyword == "end_header") {
      header_done = true;
      break;
    }
  }
  if (!header_done) throw Error(ErrorCode::kFormatError, path.string() + ": missing end_header");

  TriangleMesh mesh;
  PlyCursor cursor(is, binary);
  for (const PlyElement& e : elements) {
    const bool is_vertex = e.name == "vertex";
    const bool is_face = e.name == "face";
    if (is_vertex) {
      mesh.vertices.reserve(e.count);
      bool has_quality = std::any_of(e.properties.begin(), e.properties.end(),
                                     [](const PlyProperty& p) { return p.name == "quality"; });
      if (has_quality) mesh.variances.reserve(e.count);
    }
    for (std::size_t i = 0; i < e.count; ++i) {
      Point3 p = Point3::Zero();
      for (const PlyProperty& prop : e.properties) {
        if (prop.is_list) {
          const auto n = static_cast<std::size_t>(cursor.read(prop.count_type));
          std::vector<std::uint32_t> idx(n);
          for (std::size_t k = 0; k < n; ++k) idx[k] = static_cast<std::uint32_t>(cursor.read(prop.type));
          if (is_face && (prop.name == "vertex_indices" || prop.name == "vertex_index")) {
            // Fan-triangulate polygons.
            for (std::size_t k = 1; k + 1 < n; ++k) mesh.faces.push_back({idx[0], idx[k], idx[k + 1]});
          }
          continue;
        }
        const double v = cursor.read(prop.type);
        if (!is_vertex) continue;
        if (prop.name == "x") p.x() = v;
        else if (prop.name == "y") p.y() = v;
        else if (prop.name == "z") p.z() = v;
        else if (prop.name == "quality") mesh.variances.push_back(v);
      }
      if (is_vertex) mesh.vertices.push_back(p);
    }
  }
  return mesh;
}

void write_point_cloud_ply(std::span<const Point3> points, const fs::path& path, PlyFormat format) {
  TriangleMesh cloud;
  cloud.vertices.assign(points.begin(), points.end());
  write_mesh_ply(cloud, path, format);
}

std::vector<Point3> read_point_cloud_ply(const fs::path& path) { return read_mesh_ply(path).vertices; }

// ---------------------------------------------------------------------------
// Trajectories

std::string format_kitti_pose(const Pose& pose) {
  std::ostringstream os;
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  const Mat3& r = pose.rotation();
  const Vec3& t = pose.translation();
  for (int row = 0; row < 3; ++row) {
    for (int col = 0; col < 4; ++col) {
      if (row != 0 || col != 0) os << ' ';
      os << (col < 3 ? r(row, col) : t(row));
    }
  }
  return os.str();
}

void write_trajectory_kitti(std::span<const Pose> poses, const fs::path& path) {
  std::ofstream os = open_out(path, false);
  for (const Pose& p : poses) os << format_kitti_pose(p) << '\n';
  if (!os) throw Error(ErrorCode::kIoError, "write failed: " + path.string());
}

std::vector<Pose> read_trajectory_kitti(const fs::path& path) {
  std::ifstream is = open_in(path, false);
  std::vector<Pose> poses;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    double v[12];
    for (double& x : v) {
      if (!(ls >> x)) {
        throw Error(ErrorCode::kFormatError, path.string() + ":" + std::to_string(line_no) + ": expected 12 numbers");
      }
    }
    poses.push_back(Pose::from_row_major(v));
  }
  return poses;
}

void write_trajectory_tum(std::span<const Pose> poses, std::span<const double> timestamps, const fs::path& path) {
  if (!timestamps.empty() && timestamps.size() != poses.size()) {
    throw Error(ErrorCode::kInvalidParam, "timestamp count does not match pose count");
  }
  std::ofstream os = open_out(path, false);
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (std::size_t i = 0; i < poses.size(); ++i) {
    const Eigen::Quaterniond q(poses[i].rotation());
    const Vec3& t = poses[i].translation();
    os << (timestamps.empty() ? static_cast<double>(i) : timestamps[i]) << ' ' << t.x() << ' ' << t.y() << ' '
       << t.z() << ' ' << q.x() << ' ' << q.y() << ' ' << q.z() << ' ' << q.w() << '\n';
  }
  if (!os) throw Error(ErrorCode::kIoError, "write failed: " + path.string());
}

std::vector<Pose> read_trajectory_tum(const fs::path& path, std::vector<double>* timestamps) {
  std::ifstream is = open_in(path, false);
  std::vector<Pose> poses;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    double ts, tx, ty, tz, qx, qy, qz, qw;
    if (!(ls >> ts >> tx >> ty >> tz >> qx >> qy >> qz >> qw)) {
      throw Error(ErrorCode::kFormatError, path.string() + ": expected 8 numbers per line");
    }
    const Eigen::Quaterniond q(qw, qx, qy, qz);
    poses.emplace_back(q.normalized().toRotationMatrix(), Vec3(tx, ty, tz));
    if (timestamps != nullptr) timestamps->push_back(ts);
  }
  return poses;
}

// ---------------------------------------------------------------------------
// Sequence directories

SequenceFormat parse_sequence_format(std::string_view name) {
  if (name == "kitti-bin") return SequenceFormat::kKittiBin;
  if (name == "ply-dir") return SequenceFormat::kPlyDir;
  throw Error(ErrorCode::kConfigError, "unknown input format '" + std::string(name) + "'");
}

std::vector<fs::path> list_frames(const fs::path& dir, SequenceFormat format) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw Error(ErrorCode::kIoError, "not a directory: " + dir.string());
  const std::string ext = format == SequenceFormat::kKittiBin ? ".bin" : ".ply";
  std::vector<std::pair<std::uint64_t, fs::path>> numbered;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ext) continue;
    const std::string stem = entry.path().stem().string();
    std::uint64_t n = 0;
    auto [ptr, err] = std::from_chars(stem.data(), stem.data() + stem.size(), n);
    if (err != std::errc() || ptr != stem.data() + stem.size()) continue;
    numbered.emplace_back(n, entry.path());
  }
  std::sort(numbered.begin(), numbered.end());
  std::vector<fs::path> out;
  out.reserve(numbered.size());
  for (auto& [n, p] : numbered) out.push_back(std::move(p));
  return out;
}

RawScan read_frame(const fs::path& path, SequenceFormat format, std::size_t frame_index) {
  RawScan scan;
  if (format == SequenceFormat::kKittiBin) {
    scan = read_kitti_bin(path);
  } else {
    for (const Point3& p : read_point_cloud_ply(path)) {
      if (p.allFinite()) scan.points.push_back(p);
    }
  }
  scan.frame_index = frame_index;
  return scan;
}

}  // namespace slamesh
