#include "evb/so3.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <string>

#include "evb/error.hpp"

namespace evb {

bool RotationSO3::is_valid(const Mat3& m, double tol) {
  if (!m.allFinite()) return false;
  const Mat3 gram = m.transpose() * m;
  if ((gram - Mat3::Identity()).cwiseAbs().maxCoeff() > tol) return false;
  return std::abs(m.determinant() - 1.0) <= tol;
}

RotationSO3 RotationSO3::from_matrix(const Mat3& m, double tol) {
  if (!is_valid(m, tol)) {
    throw InvalidArgument("matrix is not a proper rotation (R^T R != I or det != +1)");
  }
  return RotationSO3(m, Unchecked{});
}

RotationSO3 RotationSO3::from_axis_angle(const Vec3& axis, double angle_rad) {
  const double n = axis.norm();
  if (n == 0.0) return identity();
  return RotationSO3(Eigen::AngleAxisd(angle_rad, axis / n).toRotationMatrix(),
                     Unchecked{});
}

RotationSO3 RotationSO3::exp(const Vec3& omega) {
  return from_axis_angle(omega, omega.norm());
}

RotationSO3 RotationSO3::about_x_deg(double deg) {
  return from_axis_angle(Vec3::UnitX(), deg_to_rad(deg));
}
RotationSO3 RotationSO3::about_y_deg(double deg) {
  return from_axis_angle(Vec3::UnitY(), deg_to_rad(deg));
}
RotationSO3 RotationSO3::about_z_deg(double deg) {
  return from_axis_angle(Vec3::UnitZ(), deg_to_rad(deg));
}

double RotationSO3::angle_rad() const {
  return Eigen::AngleAxisd(m_).angle();
}

Vec3 RotationSO3::log() const {
  const Eigen::AngleAxisd aa(m_);
  return aa.axis() * aa.angle();
}

UnitQuaternion::UnitQuaternion(double w, double x, double y, double z) {
  // Pre-scale by the largest magnitude so tiny or huge inputs normalize cleanly.
  const double m = std::max({std::abs(w), std::abs(x), std::abs(y), std::abs(z)});
  if (!std::isfinite(m) || m == 0.0) {
    throw DegenerateInput("quaternion has zero or non-finite norm");
  }
  w /= m;
  x /= m;
  y /= m;
  z /= m;
  const double n = std::sqrt(w * w + x * x + y * y + z * z);
  const double sign = w < 0.0 ? -1.0 : 1.0;
  w_ = sign * w / n;
  x_ = sign * x / n;
  y_ = sign * y / n;
  z_ = sign * z / n;
}

RotationSO3 quat_to_matrix(const UnitQuaternion& q) {
  const double w = q.w(), x = q.x(), y = q.y(), z = q.z();
  Mat3 m;
  m << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return RotationSO3::from_matrix(m, 1e-9);
}

RotationSO3 quat_to_matrix(double w, double x, double y, double z) {
  return quat_to_matrix(UnitQuaternion(w, x, y, z));
}

UnitQuaternion matrix_to_quat(const RotationSO3& r) {
  const Mat3& m = r.matrix();
  const double tr = m.trace();
  double w, x, y, z;
  // Shepperd: pivot on the largest of (tr, m00, m11, m22).
  if (tr >= m(0, 0) && tr >= m(1, 1) && tr >= m(2, 2)) {
    const double s = 2.0 * std::sqrt(1.0 + tr);
    w = 0.25 * s;
    x = (m(2, 1) - m(1, 2)) / s;
    y = (m(0, 2) - m(2, 0)) / s;
    z = (m(1, 0) - m(0, 1)) / s;
  } else if (m(0, 0) >= m(1, 1) && m(0, 0) >= m(2, 2)) {
    const double s = 2.0 * std::sqrt(1.0 + m(0, 0) - m(1, 1) - m(2, 2));
    w = (m(2, 1) - m(1, 2)) / s;
    x = 0.25 * s;
    y = (m(0, 1) + m(1, 0)) / s;
    z = (m(0, 2) + m(2, 0)) / s;
  } else if (m(1, 1) >= m(2, 2)) {
    const double s = 2.0 * std::sqrt(1.0 + m(1, 1) - m(0, 0) - m(2, 2));
    w = (m(0, 2) - m(2, 0)) / s;
    x = (m(0, 1) + m(1, 0)) / s;
    y = 0.25 * s;
    z = (m(1, 2) + m(2, 1)) / s;
  } else {
    const double s = 2.0 * std::sqrt(1.0 + m(2, 2) - m(0, 0) - m(1, 1));
    w = (m(1, 0) - m(0, 1)) / s;
    x = (m(0, 2) + m(2, 0)) / s;
    y = (m(1, 2) + m(2, 1)) / s;
    z = 0.25 * s;
  }
  return UnitQuaternion(w, x, y, z);
}

double geodesic_rad(const RotationSO3& a, const RotationSO3& b) {
  const double tr = (a.matrix().transpose() * b.matrix()).trace();
  const double c = std::clamp(0.5 * (tr - 1.0), -1.0, 1.0);
  return std::acos(c);
}

double geodesic_deg(const RotationSO3& a, const RotationSO3& b) {
  return rad_to_deg(geodesic_rad(a, b));
}

RotationSO3 relative_rotation(const RotationSO3& r1, const RotationSO3& r2) {
  return r2 * r1.transpose();
}

Translation3 relative_translation(const RotationSO3& r1, const Translation3& t1,
                                  const RotationSO3& r2, const Translation3& t2) {
  return t2 - relative_rotation(r1, r2) * t1;
}

EulerConvention parse_euler_convention(std::string_view name) {
  if (name == "yxz" || name == "YXZ") return EulerConvention::kYXZ;
  if (name == "xyz" || name == "XYZ") return EulerConvention::kXYZ;
  throw InvalidArgument("unknown Euler convention '" + std::string(name) +
                        "' (expected yxz or xyz)");
}

std::string_view to_string(EulerConvention c) {
  return c == EulerConvention::kYXZ ? "yxz" : "xyz";
}

namespace {

constexpr double kGimbalTolDeg = 1e-6;

// Maps -180 to +180 so every angle lies in (-180, 180].
double wrap_half_open(double deg) { return deg <= -180.0 ? deg + 360.0 : deg; }

}  // namespace

YawPitch yaw_pitch_deg(const RotationSO3& rel, EulerConvention convention) {
  const Mat3& m = rel.matrix();
  YawPitch out;
  if (convention == EulerConvention::kYXZ) {
    // Ry(g) Rx(b) Rz(r): m(1,2) = -sin b, column 2 = (sg cb, -sb, cg cb).
    const double sb = std::clamp(-m(1, 2), -1.0, 1.0);
    out.pitch_deg = rad_to_deg(std::asin(sb));
    if (90.0 - std::abs(out.pitch_deg) < kGimbalTolDeg) {
      out.gimbal_lock = true;
      out.yaw_deg = rad_to_deg(std::atan2(-m(2, 0), m(0, 0)));
      out.roll_deg = 0.0;
    } else {
      out.yaw_deg = rad_to_deg(std::atan2(m(0, 2), m(2, 2)));
      out.roll_deg = rad_to_deg(std::atan2(m(1, 0), m(1, 1)));
    }
  } else {
    // Rx(b) Ry(g) Rz(r): m(0,2) = sin g, column 2 = (sg, -sb cg, cb cg).
    const double sg = std::clamp(m(0, 2), -1.0, 1.0);
    out.yaw_deg = rad_to_deg(std::asin(sg));
    if (90.0 - std::abs(out.yaw_deg) < kGimbalTolDeg) {
      out.gimbal_lock = true;
      out.pitch_deg = rad_to_deg(std::atan2(m(2, 1), m(1, 1)));
      out.roll_deg = 0.0;
    } else {
      out.pitch_deg = rad_to_deg(std::atan2(-m(1, 2), m(2, 2)));
      out.roll_deg = rad_to_deg(std::atan2(-m(0, 1), m(0, 0)));
    }
  }
  out.yaw_deg = wrap_half_open(out.yaw_deg);
  out.pitch_deg = wrap_half_open(out.pitch_deg);
  out.roll_deg = wrap_half_open(out.roll_deg);
  return out;
}

double translation_angle_deg(const Translation3& t, const Translation3& t_star) {
  const double nt = t.norm();
  const double ns = t_star.norm();
  if (!(nt >= kDegenerateNorm) || !(ns >= kDegenerateNorm)) {
    throw DegenerateInput("translation with norm below 1e-12");
  }
  const double c = std::clamp(std::abs(t.dot(t_star)) / (nt * ns), 0.0, 1.0);
  return rad_to_deg(std::acos(c));
}

double translation_scale(const Translation3& t_pred, const Translation3& t_gt) {
  const double np = t_pred.norm();
  if (!(np >= kDegenerateNorm)) {
    throw DegenerateInput("predicted translation is zero; scale undefined");
  }
  return t_gt.norm() / np;
}

}  // namespace evb
