#pragma once

#include <numbers>

#include "gsavatar/common/error.hpp"
#include "gsavatar/common/math.hpp"
#include "gsavatar/core/gaussian_set.hpp"

namespace gsavatar::core {

struct ExpressionParams {
  VecX coefficients;

  int dim() const { return static_cast<int>(coefficients.size()); }
};

/// Head pose: axis-angle rotation (radians) and translation.
struct PoseParams {
  Vec3 rotation = Vec3::Zero();
  Vec3 translation = Vec3::Zero();

  /// The 6-vector that drives the pose residual fields.
  VecX driver() const {
    VecX d(kPoseDim);
    d << rotation, translation;
    return d;
  }
};

struct RigidTransform {
  Vec4 rotation = identity_quat();
  Vec3 translation = Vec3::Zero();

  static RigidTransform identity() { return {}; }

  static RigidTransform from_pose(const PoseParams& pose) {
    return {axis_angle_to_quat(pose.rotation), pose.translation};
  }

  Mat3 matrix() const { return quat_to_matrix(rotation); }

  Vec3 apply(const Vec3& p) const { return matrix() * p + translation; }

  RigidTransform inverse() const {
    const Vec4 inv = quat_conjugate(rotation);
    return {inv, -(quat_to_matrix(inv) * translation)};
  }

  /// (this * other)(p) == this(other(p))
  RigidTransform compose(const RigidTransform& other) const {
    return {quat_mul(rotation, other.rotation).normalized(), apply(other.translation)};
  }
};

inline void validate(const ExpressionParams& theta) {
  if (!theta.coefficients.allFinite()) throw Error(ErrorCode::NonFinite, "expression coefficients not finite");
}

inline void validate(const PoseParams& beta) {
  if (!beta.rotation.allFinite() || !beta.translation.allFinite())
    throw Error(ErrorCode::NonFinite, "pose parameters not finite");
  if (beta.rotation.norm() >= std::numbers::pi)
    throw Error(ErrorCode::InvalidArgument, "pose rotation magnitude must be below pi");
}

inline void validate(const RigidTransform& t) {
  if (std::abs(t.rotation.norm() - 1.0) > 1e-6)
    throw Error(ErrorCode::InvalidArgument, "rigid transform rotation is not a unit quaternion");
  if (!t.translation.allFinite()) throw Error(ErrorCode::NonFinite, "rigid transform translation not finite");
}

}  // namespace gsavatar::core
