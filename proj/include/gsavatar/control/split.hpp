#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "gsavatar/common/math.hpp"
#include "gsavatar/control/control_config.hpp"
#include "gsavatar/core/gaussian_set.hpp"

namespace gsavatar::control {

struct SplitReport {
  std::vector<std::size_t> parents;
  /// Two entries per parent: the in-place child then the appended child.
  std::vector<std::size_t> children;
  std::vector<double> magnitudes;
  /// Parents whose displacement direction was zero (offset along +x).
  std::vector<std::size_t> degenerate;
  long iteration = 0;

  bool empty() const { return parents.empty(); }
};

struct SplitResult {
  core::GaussianSet set;
  SplitReport report;
};

/// Replaces every i with magnitudes[i] > cfg.tau_split by two children at
/// x_i +/- eps * mean_scale_i * dir_i. The first child takes index i, the
/// second is appended in parent order. Children copy features, rotation and
/// opacity; their scales are multiplied by cfg.split_scale_factor.
/// `eligible` (optional) masks Gaussians that may split.
SplitResult split_gaussians(const core::GaussianSet& set, std::span<const double> magnitudes,
                            std::span<const Vec3> directions, const ControlConfig& cfg, long iteration = 0,
                            std::span<const std::uint8_t> eligible = {});

/// Parent indices that split_gaussians would split, ascending.
std::vector<std::size_t> split_candidates(std::span<const double> magnitudes, double tau_split,
                                          std::span<const std::uint8_t> eligible = {});

}  // namespace gsavatar::control
