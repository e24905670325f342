#include "slamesh/geometry.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/SVD>

#include "slamesh/error.hpp"

namespace slamesh {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kFormatError: return "FormatError";
    case ErrorCode::kInvalidParam: return "InvalidParam";
    case ErrorCode::kInvalidMesh: return "InvalidMesh";
    case ErrorCode::kSingularSystem: return "SingularSystem";
    case ErrorCode::kTooFewPoints: return "TooFewPoints";
    case ErrorCode::kDegenerateFace: return "DegenerateFace";
    case ErrorCode::kNoValidFace: return "NoValidFace";
    case ErrorCode::kNoOverlap: return "NoOverlap";
    case ErrorCode::kDegenerateProblem: return "DegenerateProblem";
    case ErrorCode::kGridMismatch: return "GridMismatch";
    case ErrorCode::kConfigError: return "ConfigError";
    case ErrorCode::kTrajectoryMismatch: return "TrajectoryMismatch";
    case ErrorCode::kEmptyInput: return "EmptyInput";
  }
  return "Unknown";
}

namespace {
constexpr double kDriftTolerance = 1e-9;
constexpr double kSmallAngle = 1e-8;
}  // namespace

Pose Pose::from_yaw(double radians, const Vec3& t) {
  Mat3 r;
  const double c = std::cos(radians), s = std::sin(radians);
  r << c, -s, 0, s, c, 0, 0, 0, 1;
  return {r, t};
}

Pose Pose::from_row_major(const double* twelve) {
  Mat3 r;
  Vec3 t;
  for (int row = 0; row < 3; ++row) {
    for (int col = 0; col < 3; ++col) r(row, col) = twelve[row * 4 + col];
    t(row) = twelve[row * 4 + 3];
  }
  return {r, t};
}

Eigen::Matrix4d Pose::matrix() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = rotation_;
  m.topRightCorner<3, 1>() = translation_;
  return m;
}

double Pose::orthonormality_drift() const {
  const double ortho = (rotation_.transpose() * rotation_ - Mat3::Identity()).cwiseAbs().maxCoeff();
  return std::max(ortho, std::abs(rotation_.determinant() - 1.0));
}

bool Pose::is_valid(double tol) const {
  return rotation_.allFinite() && translation_.allFinite() && orthonormality_drift() <= tol;
}

Pose Pose::orthonormalized() const {
  // Nearest rotation in the Frobenius sense (polar decomposition).
  Eigen::JacobiSVD<Mat3> svd(rotation_, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 u = svd.matrixU();
  const Mat3& v = svd.matrixV();
  if ((u * v.transpose()).determinant() < 0.0) u.col(2) *= -1.0;
  return {u * v.transpose(), translation_};
}

Pose compose(const Pose& a, const Pose& b) {
  Pose out(a.rotation() * b.rotation(), a.rotation() * b.translation() + a.translation());
  if (out.orthonormality_drift() > kDriftTolerance) return out.orthonormalized();
  return out;
}

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

Mat3 so3_exp(const Vec3& omega) {
  const double theta = omega.norm();
  const Mat3 k = skew(omega);
  if (theta < kSmallAngle) return Mat3::Identity() + k + 0.5 * k * k;
  const double a = std::sin(theta) / theta;
  const double b = (1.0 - std::cos(theta)) / (theta * theta);
  return Mat3::Identity() + a * k + b * k * k;
}

double rotation_angle(const Mat3& R) {
  const double c = std::clamp(0.5 * (R.trace() - 1.0), -1.0, 1.0);
  // acos loses precision near 0; use the skew part for small angles.
  const Vec3 w(R(2, 1) - R(1, 2), R(0, 2) - R(2, 0), R(1, 0) - R(0, 1));
  return std::atan2(0.5 * w.norm(), c);
}

Vec3 so3_log(const Mat3& R) {
  const Vec3 w(R(2, 1) - R(1, 2), R(0, 2) - R(2, 0), R(1, 0) - R(0, 1));
  const double theta = rotation_angle(R);
  if (theta < kSmallAngle) return 0.5 * w;
  if (M_PI - theta < 1e-6) {
    // Near pi the skew part vanishes; recover the axis from the symmetric part.
    const Mat3 b = 0.5 * (R + Mat3::Identity());
    int k = 0;
    b.diagonal().maxCoeff(&k);
    Vec3 axis = b.col(k) / std::sqrt(std::max(b(k, k), 1e-300));
    if (axis.dot(w) < 0.0) axis = -axis;
    return theta * axis.normalized();
  }
  return theta / (2.0 * std::sin(theta)) * w;
}

Pose exp_twist(const Twist& xi) { return {so3_exp(xi.rotation), xi.translation}; }

Pose retract(const Pose& T, const Twist& xi) { return compose(exp_twist(xi), T); }

Pose constant_velocity_guess(const Pose& prev, const Pose& prev2) {
  return compose(prev, compose(prev2.inverse(), prev));
}

}  // namespace slamesh
