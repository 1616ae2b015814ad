#pragma once

#include <cstddef>
#include <vector>

#include "gsavatar/common/math.hpp"

namespace gsavatar::core {

inline constexpr int kDefaultFeatureDim = 16;
inline constexpr int kDefaultExpressionDim = 32;
inline constexpr int kPoseDim = 6;

/// Canonical (neutral) Gaussian primitives. Scales are stored as logs and
/// opacities as logits; features is N x d_F.
struct GaussianSet {
  std::vector<Vec3> positions;
  MatX features;
  std::vector<Vec4> rotations;
  std::vector<Vec3> log_scales;
  std::vector<double> opacity_logits;

  std::size_t size() const { return positions.size(); }
  int feature_dim() const { return static_cast<int>(features.cols()); }

  Vec3 decoded_scale(std::size_t i) const { return log_scales[i].array().exp(); }
  double decoded_opacity(std::size_t i) const { return sigmoid(opacity_logits[i]); }
};

/// Checks every invariant. Quaternions within 1e-3 of unit norm are
/// renormalized; anything further out is rejected.
GaussianSet validate_neutral_set(GaussianSet g);

/// N Gaussians with identity rotations, zero log-scales and logits.
GaussianSet make_gaussian_set(std::size_t n, int feature_dim = kDefaultFeatureDim);

}  // namespace gsavatar::core
