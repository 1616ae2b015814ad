#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "gsavatar/common/math.hpp"
#include "gsavatar/control/control_config.hpp"
#include "gsavatar/control/spatial_index.hpp"
#include "gsavatar/core/params.hpp"
#include "gsavatar/core/residual_field.hpp"

namespace gsavatar::control {

/// f_exp^def(x_i, theta) for every Gaussian.
std::vector<Vec3> expression_displacements(std::span<const Vec3> positions, const core::ExpressionParams& theta,
                                           const core::ResidualFieldBank& bank);

/// |f_exp^def(x_i, theta)|; the pose field does not contribute.
std::vector<double> displacement_magnitudes(std::span<const Vec3> positions, const core::ExpressionParams& theta,
                                            const core::ResidualFieldBank& bank);

/// {i : delta_i > tau}, ascending.
std::vector<std::size_t> select_controls(std::span<const double> delta, double tau);

/// Per control (same order as `controls`): non-control j != i within the
/// open ball of radius cfg.radius, ascending.
std::vector<std::vector<std::size_t>> neighborhoods(std::span<const Vec3> positions,
                                                    std::span<const std::size_t> controls, const ControlConfig& cfg,
                                                    const SpatialIndex& index);

/// Inverts neighborhoods: result[j] lists the controls affecting j, ascending.
std::vector<std::vector<std::size_t>> memberships(std::size_t count, std::span<const std::size_t> controls,
                                                  const std::vector<std::vector<std::size_t>>& neighbors);

/// Normalized Gaussian-kernel weights of the controls in controls_of_j.
std::vector<double> propagation_weights(std::span<const Vec3> positions, std::size_t j,
                                        std::span<const std::size_t> controls_of_j, double sigma);

/// x'_j = base_j + sum_i w_ij d_i for Gaussians with controls; everything
/// else (including the controls) keeps base_j. control_displacements is
/// aligned with `controls`.
std::vector<Vec3> propagate(std::span<const Vec3> base_deformed, std::span<const Vec3> canonical,
                            std::span<const std::size_t> controls, std::span<const Vec3> control_displacements,
                            const std::vector<std::vector<std::size_t>>& memberships, const ControlConfig& cfg);

struct PropagationGradients {
  std::vector<Vec3> control_displacements;  // aligned with controls
  std::vector<Vec3> canonical;              // through the kernel weights
};

/// Vector-Jacobian product of propagate() for the adjustment term
/// sum_i w_ij d_i; the identity path from base_deformed is left to the caller.
PropagationGradients propagate_vjp(std::span<const Vec3> canonical, std::span<const std::size_t> controls,
                                   std::span<const Vec3> control_displacements,
                                   const std::vector<std::vector<std::size_t>>& memberships, const ControlConfig& cfg,
                                   std::span<const Vec3> upstream);

}  // namespace gsavatar::control
