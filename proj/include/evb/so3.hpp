#pragma once

#include <Eigen/Core>

#include <string_view>

namespace evb {

using Mat3 = Eigen::Matrix3d;
using Vec3 = Eigen::Vector3d;

constexpr double kPi = 3.14159265358979323846;

inline double deg_to_rad(double deg) { return deg * kPi / 180.0; }
inline double rad_to_deg(double rad) { return rad * 180.0 / kPi; }

/// Element of SO(3). Construction through from_matrix() validates
/// orthonormality and det = +1 (tolerance 1e-9 per entry).
class RotationSO3 {
 public:
  RotationSO3() : m_(Mat3::Identity()) {}

  static RotationSO3 identity() { return {}; }
  static RotationSO3 from_matrix(const Mat3& m, double tol = 1e-9);
  /// Rodrigues' formula. axis need not be normalized; a zero axis yields I.
  static RotationSO3 from_axis_angle(const Vec3& axis, double angle_rad);
  /// exp map of a rotation vector (axis * angle).
  static RotationSO3 exp(const Vec3& omega);
  static RotationSO3 about_x_deg(double deg);
  static RotationSO3 about_y_deg(double deg);
  static RotationSO3 about_z_deg(double deg);

  const Mat3& matrix() const { return m_; }
  RotationSO3 transpose() const { return RotationSO3(m_.transpose(), Unchecked{}); }
  RotationSO3 operator*(const RotationSO3& rhs) const {
    return RotationSO3(m_ * rhs.m_, Unchecked{});
  }
  Vec3 operator*(const Vec3& v) const { return m_ * v; }

  /// Rotation angle in [0, pi] and the unit axis (x-axis when the angle is 0).
  double angle_rad() const;
  Vec3 log() const;

  static bool is_valid(const Mat3& m, double tol = 1e-9);

 private:
  struct Unchecked {};
  RotationSO3(const Mat3& m, Unchecked) : m_(m) {}

  Mat3 m_;
};

/// Scalar-first unit quaternion. The constructor normalizes and flips to the
/// w >= 0 hemisphere; a (near) zero-norm input throws DegenerateInput.
class UnitQuaternion {
 public:
  UnitQuaternion() = default;
  UnitQuaternion(double w, double x, double y, double z);

  double w() const { return w_; }
  double x() const { return x_; }
  double y() const { return y_; }
  double z() const { return z_; }

 private:
  double w_ = 1.0, x_ = 0.0, y_ = 0.0, z_ = 0.0;
};

using Translation3 = Vec3;

RotationSO3 quat_to_matrix(const UnitQuaternion& q);
/// Raw overload: accepts any non-zero 4-vector (renormalized internally).
RotationSO3 quat_to_matrix(double w, double x, double y, double z);
UnitQuaternion matrix_to_quat(const RotationSO3& r);

double geodesic_rad(const RotationSO3& a, const RotationSO3& b);
/// arccos((tr(a^T b) - 1) / 2) in degrees, argument clamped to [-1, 1].
double geodesic_deg(const RotationSO3& a, const RotationSO3& b);

/// r2 * r1^T: maps camera-1 coordinates to camera-2 coordinates when both
/// inputs are world-to-camera rotations.
RotationSO3 relative_rotation(const RotationSO3& r1, const RotationSO3& r2);

/// Translation of the relative pose cam1 -> cam2 for world-to-camera poses:
/// t2 - (r2 r1^T) t1.
Translation3 relative_translation(const RotationSO3& r1, const Translation3& t1,
                                  const RotationSO3& r2, const Translation3& t2);

enum class EulerConvention {
  kYXZ,  // R = Ry(yaw) Rx(pitch) Rz(roll)
  kXYZ,  // R = Rx(pitch) Ry(yaw) Rz(roll)
};

EulerConvention parse_euler_convention(std::string_view name);
std::string_view to_string(EulerConvention c);

struct YawPitch {
  double yaw_deg = 0.0;
  double pitch_deg = 0.0;
  double roll_deg = 0.0;
  bool gimbal_lock = false;
};

/// Intrinsic Euler decomposition in the camera frame (+x right, +y up,
/// +z forward). Yaw is about y, pitch about x. In gimbal lock the roll is
/// pinned to 0 and the flag is set.
YawPitch yaw_pitch_deg(const RotationSO3& rel,
                       EulerConvention convention = EulerConvention::kYXZ);

/// arccos(|t.t*| / (|t||t*|)) in degrees, in [0, 90]. Throws DegenerateInput
/// when either norm is below 1e-12.
double translation_angle_deg(const Translation3& t, const Translation3& t_star);

/// |t_gt| / |t_pred|. Throws DegenerateInput for a zero prediction.
double translation_scale(const Translation3& t_pred, const Translation3& t_gt);

constexpr double kDegenerateNorm = 1e-12;

}  // namespace evb
