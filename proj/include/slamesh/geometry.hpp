#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace slamesh {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Point3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Row6 = Eigen::Matrix<double, 1, 6>;

/// Local 6-DoF increment. The solver applies it on the left of a pose:
/// R <- Exp(rotation) * R, t <- Exp(rotation) * t + translation.
struct Twist {
  Vec3 rotation = Vec3::Zero();     // radians
  Vec3 translation = Vec3::Zero();  // meters

  static Twist from_vector(const Vec6& v) { return {v.head<3>(), v.tail<3>()}; }
  Vec6 as_vector() const {
    Vec6 v;
    v << rotation, translation;
    return v;
  }
};

/// Rigid transform in SE(3). Construction does not re-orthonormalize; use
/// orthonormalized() when the rotation came from accumulated arithmetic.
class Pose {
 public:
  Pose() = default;
  Pose(const Mat3& rotation, const Vec3& translation) : rotation_(rotation), translation_(translation) {}

  static Pose identity() { return {}; }
  static Pose from_translation(const Vec3& t) { return {Mat3::Identity(), t}; }
  static Pose from_rotation(const Mat3& r) { return {r, Vec3::Zero()}; }
  /// Rotation about +z by `radians`, optionally followed by a translation.
  static Pose from_yaw(double radians, const Vec3& t = Vec3::Zero());
  /// Builds a pose from the 12 row-major entries of [R|t].
  static Pose from_row_major(const double* twelve);

  const Mat3& rotation() const { return rotation_; }
  const Vec3& translation() const { return translation_; }

  Pose inverse() const { return {rotation_.transpose(), -rotation_.transpose() * translation_}; }
  Eigen::Matrix4d matrix() const;

  /// max |RᵀR − I| and |det R − 1| both within `tol`.
  bool is_valid(double tol = 1e-9) const;
  double orthonormality_drift() const;
  Pose orthonormalized() const;

 private:
  Mat3 rotation_ = Mat3::Identity();
  Vec3 translation_ = Vec3::Zero();
};

/// Applies b then a.
Pose compose(const Pose& a, const Pose& b);
inline Pose operator*(const Pose& a, const Pose& b) { return compose(a, b); }

inline Point3 transform_point(const Pose& T, const Point3& p) { return T.rotation() * p + T.translation(); }

Mat3 skew(const Vec3& v);

/// Rodrigues formula; angles below 1e-8 rad use the second-order series.
Mat3 so3_exp(const Vec3& omega);
Vec3 so3_log(const Mat3& R);
/// Angle of the rotation in [0, pi].
double rotation_angle(const Mat3& R);

/// Pose with R = Exp(rotation), t = translation (the decoupled SO(3) x R^3
/// exponential matching the left-perturbation Jacobian).
Pose exp_twist(const Twist& xi);
/// exp_twist(xi) ∘ T.
Pose retract(const Pose& T, const Twist& xi);

/// Extrapolates the last relative motion: prev ∘ (prev2⁻¹ ∘ prev).
Pose constant_velocity_guess(const Pose& prev, const Pose& prev2);

}  // namespace slamesh
