#include "gsavatar/core/gaussian_set.hpp"

#include <cmath>
#include <string>

#include "gsavatar/common/error.hpp"

namespace gsavatar::core {

GaussianSet make_gaussian_set(std::size_t n, int feature_dim) {
  GaussianSet g;
  g.positions.assign(n, Vec3::Zero());
  g.features = MatX::Zero(static_cast<Eigen::Index>(n), feature_dim);
  g.rotations.assign(n, identity_quat());
  g.log_scales.assign(n, Vec3::Zero());
  g.opacity_logits.assign(n, 0.0);
  return g;
}

GaussianSet validate_neutral_set(GaussianSet g) {
  const std::size_t n = g.positions.size();
  if (n == 0) throw Error(ErrorCode::InvalidArgument, "gaussian set is empty");
  if (static_cast<std::size_t>(g.features.rows()) != n || g.rotations.size() != n ||
      g.log_scales.size() != n || g.opacity_logits.size() != n) {
    throw Error(ErrorCode::LengthMismatch,
                "length mismatch: positions " + std::to_string(n) + ", features " +
                    std::to_string(g.features.rows()) + ", rotations " + std::to_string(g.rotations.size()) +
                    ", scales " + std::to_string(g.log_scales.size()) + ", opacities " +
                    std::to_string(g.opacity_logits.size()));
  }
  if (!g.features.allFinite()) throw Error(ErrorCode::NonFinite, "non-finite feature value");
  for (std::size_t i = 0; i < n; ++i) {
    if (!g.positions[i].allFinite() || !g.rotations[i].allFinite() || !g.log_scales[i].allFinite() ||
        !std::isfinite(g.opacity_logits[i])) {
      throw Error(ErrorCode::NonFinite, "non-finite value at gaussian " + std::to_string(i));
    }
    const double norm = g.rotations[i].norm();
    if (norm == 0.0) throw Error(ErrorCode::InvalidArgument, "zero quaternion at gaussian " + std::to_string(i));
    if (std::abs(norm - 1.0) > 1e-3) {
      throw Error(ErrorCode::InvalidArgument,
                  "quaternion norm " + std::to_string(norm) + " outside unit band at gaussian " + std::to_string(i));
    }
    g.rotations[i] /= norm;
    // exp/sigmoid of finite values can still round to the boundary.
    const Vec3 s = g.decoded_scale(i);
    if (!(s.array() > 0.0).all() || !s.allFinite())
      throw Error(ErrorCode::NonFinite, "decoded scale not positive at gaussian " + std::to_string(i));
    const double o = g.decoded_opacity(i);
    if (!(o > 0.0 && o < 1.0))
      throw Error(ErrorCode::NonFinite, "decoded opacity saturates at gaussian " + std::to_string(i));
  }
  return g;
}

}  // namespace gsavatar::core
