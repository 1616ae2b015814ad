#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "gsavatar/common/math.hpp"
#include "gsavatar/control/control_config.hpp"
#include "gsavatar/control/split.hpp"
#include "gsavatar/core/gaussian_set.hpp"
#include "gsavatar/core/params.hpp"
#include "gsavatar/core/residual_field.hpp"

namespace gsavatar::core {

/// Deformed (pre-world) geometry: positions, unit rotations, log-scales and
/// opacity logits after the expression and pose residuals.
struct DeformedGeometry {
  std::vector<Vec3> positions;
  std::vector<Vec4> rotations;
  std::vector<Vec3> log_scales;
  std::vector<double> opacity_logits;
};

DeformedGeometry deform_geometry(const GaussianSet& g, const ExpressionParams& theta, const PoseParams& beta,
                                 const ResidualFieldBank& bank);

/// sigmoid(f_exp^color(F0, theta) + f_pose^color(F0, beta)) per Gaussian.
std::vector<Vec3> predict_colors(const GaussianSet& g, const ExpressionParams& theta, const PoseParams& beta,
                                 const ResidualFieldBank& bank);

struct WorldPose {
  std::vector<Vec3> positions;
  std::vector<Vec4> rotations;
};

WorldPose to_world(std::span<const Vec3> positions, std::span<const Vec4> rotations, const RigidTransform& t);

/// Where each world Gaussian came from.
struct Provenance {
  std::vector<std::size_t> source;          // canonical index per output
  std::vector<std::uint8_t> split_child;    // 1 if produced by a split
  std::vector<std::size_t> controls;        // canonical indices selected as controls
};

/// The renderable set: world positions and rotations, colors in [0,1],
/// log-scales and opacity logits.
struct WorldGaussians {
  std::vector<Vec3> positions;
  std::vector<Vec3> colors;
  std::vector<Vec4> rotations;
  std::vector<Vec3> log_scales;
  std::vector<double> opacity_logits;
  Provenance provenance;

  std::size_t size() const { return positions.size(); }
};

/// Gradients with respect to every WorldGaussians attribute.
struct WorldGradients {
  std::vector<Vec3> positions;
  std::vector<Vec3> colors;
  std::vector<Vec4> rotations;
  std::vector<Vec3> log_scales;
  std::vector<double> opacity_logits;

  static WorldGradients zeros(std::size_t n);
};

/// deform -> control propagation -> split -> to_world, colors alongside.
WorldGaussians assemble_avatar(const GaussianSet& g, const ExpressionParams& theta, const PoseParams& beta,
                               const RigidTransform& t, const ResidualFieldBank& bank,
                               const control::ControlConfig& ctl, control::SplitReport* split_report = nullptr);

/// Intermediates of a split-free assemble_avatar evaluation.
struct AvatarTape {
  VecX expression;
  VecX pose;
  RigidTransform transform;
  std::vector<Vec3> exp_disp;
  std::vector<Vec3> base;
  std::vector<Vec4> rot_raw;
  std::vector<Vec4> rot_local;
  std::vector<std::uint8_t> rot_passthrough;
  std::vector<Vec3> colors;
  std::vector<std::size_t> controls;
  std::vector<Vec3> control_disp;
  std::vector<std::vector<std::size_t>> memberships;
  control::ControlConfig ctl;
};

/// assemble_avatar without splitting that also records the tape.
WorldGaussians assemble_avatar_taped(const GaussianSet& g, const ExpressionParams& theta, const PoseParams& beta,
                                     const RigidTransform& t, const ResidualFieldBank& bank,
                                     const control::ControlConfig& ctl, AvatarTape& tape);

/// Gradients for every canonical parameter group and every field.
struct AvatarGradients {
  std::vector<Vec3> positions;
  MatX features;
  std::vector<Vec4> rotations;
  std::vector<Vec3> log_scales;
  std::vector<double> opacity_logits;
  std::array<std::vector<double>, 10> fields;

  static AvatarGradients zeros_like(const GaussianSet& g, const ResidualFieldBank& bank);
  void add(const AvatarGradients& other);
  void scale(double s);
};

/// Backpropagates world-space gradients to the canonical set and the bank.
AvatarGradients assemble_avatar_backward(const GaussianSet& g, const ResidualFieldBank& bank,
                                         const AvatarTape& tape, const WorldGradients& upstream);

}  // namespace gsavatar::core
