#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>
#include <vector>

namespace gsavatar {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
/// Quaternion stored as (w, x, y, z) so residuals can be added componentwise.
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using MatX = Eigen::MatrixXd;
using VecX = Eigen::VectorXd;

inline double sigmoid(double x) {
  if (x >= 0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

inline Vec4 identity_quat() { return Vec4(1, 0, 0, 0); }

/// Hamilton product a*b, both (w, x, y, z).
inline Vec4 quat_mul(const Vec4& a, const Vec4& b) {
  return Vec4(a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
              a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
              a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
              a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]);
}

/// Matrix L(a) with quat_mul(a, b) == L(a) * b.
inline Mat4 quat_left_matrix(const Vec4& a) {
  Mat4 m;
  m << a[0], -a[1], -a[2], -a[3],
       a[1],  a[0], -a[3],  a[2],
       a[2],  a[3],  a[0], -a[1],
       a[3], -a[2],  a[1],  a[0];
  return m;
}

inline Vec4 quat_conjugate(const Vec4& q) { return Vec4(q[0], -q[1], -q[2], -q[3]); }

/// Rotation matrix of a unit quaternion (w, x, y, z).
inline Mat3 quat_to_matrix(const Vec4& q) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Mat3 r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
       2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
       2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

/// Gradient of <G, R(q)> with respect to the four components of q, where R
/// is quat_to_matrix applied to q as given (no normalization).
inline Vec4 quat_to_matrix_vjp(const Vec4& q, const Mat3& g) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Vec4 d;
  d[0] = 2 * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) + x * g(2, 1));
  d[1] = 2 * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2 * x * g(1, 1) - w * g(1, 2) +
              z * g(2, 0) + w * g(2, 1) - 2 * x * g(2, 2));
  d[2] = 2 * (-2 * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2) -
              w * g(2, 0) + z * g(2, 1) - 2 * y * g(2, 2));
  d[3] = 2 * (-2 * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) - 2 * z * g(1, 1) +
              y * g(1, 2) + x * g(2, 0) + y * g(2, 1));
  return d;
}

/// Vector-Jacobian product of v -> v / |v|.
template <typename V>
V normalize_vjp(const V& v, const V& upstream) {
  const double n = v.norm();
  const V u = v / n;
  return (upstream - u * u.dot(upstream)) / n;
}

inline Vec4 axis_angle_to_quat(const Vec3& aa) {
  const double angle = aa.norm();
  if (angle < 1e-300) return identity_quat();
  const Vec3 axis = aa / angle;
  const double s = std::sin(angle / 2);
  return Vec4(std::cos(angle / 2), axis.x() * s, axis.y() * s, axis.z() * s);
}

inline Vec3 quat_to_axis_angle(const Vec4& q_in) {
  Vec4 q = q_in.normalized();
  if (q[0] < 0) q = -q;
  const Vec3 v(q[1], q[2], q[3]);
  const double s = v.norm();
  if (s < 1e-300) return Vec3::Zero();
  const double angle = 2 * std::atan2(s, q[0]);
  return v / s * angle;
}

inline bool all_finite(const Eigen::Ref<const MatX>& m) { return m.allFinite(); }

}  // namespace gsavatar
