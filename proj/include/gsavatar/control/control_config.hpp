#pragma once

#include <cstddef>

namespace gsavatar::control {

/// Thresholds and geometry of the controllable-Gaussian mechanism. Distances
/// are canonical head units.
struct ControlConfig {
  double tau_control = 0.3;
  double tau_split = 0.2;
  double radius = 0.05;
  double sigma = 0.025;
  std::size_t max_gaussians = 1u << 20;
  double split_epsilon = 0.25;
  double split_scale_factor = 0.8;

  bool enable_control = true;
  /// Per-evaluation splitting inside assemble_avatar.
  bool enable_split = false;
  /// Training cadence for persistent splits (iterations); 0 disables.
  int split_interval = 500;
  /// A Gaussian created by this many successive splits is not split again.
  int split_generations = 1;

  /// Throws on any violated invariant; current_count is the live N.
  void validate(std::size_t current_count) const;
};

}  // namespace gsavatar::control
