#include "gsavatar/render/silhouette.hpp"

#include <cmath>

#include "gsavatar/common/error.hpp"

namespace gsavatar::render {

ImageLoss silhouette_loss(std::span<const double> alpha, std::span<const double> mask) {
  if (alpha.size() != mask.size()) throw Error(ErrorCode::LengthMismatch, "length mismatch: alpha vs mask");
  if (alpha.empty()) throw Error(ErrorCode::InvalidArgument, "empty silhouette");
  const double inv = 1.0 / static_cast<double>(alpha.size());
  ImageLoss out;
  out.grad.resize(alpha.size());
  for (std::size_t k = 0; k < alpha.size(); ++k) {
    const double d = alpha[k] - mask[k];
    out.loss += std::abs(d) * inv;
    out.grad[k] = d > 0 ? inv : (d < 0 ? -inv : 0.0);
  }
  return out;
}

}  // namespace gsavatar::render
