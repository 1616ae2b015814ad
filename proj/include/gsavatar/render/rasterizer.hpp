#pragma once

#include <cstddef>

#include "gsavatar/core/avatar.hpp"
#include "gsavatar/render/camera.hpp"

namespace gsavatar::render {

inline constexpr double kAlphaMax = 0.99;
inline constexpr double kTransmittanceMin = 1e-4;
/// A splat covers the pixels with Mahalanobis distance q <= 9 (3 sigma).
inline constexpr double kSupportQ = 9.0;
inline constexpr int kTileSize = 16;

struct RasterStats {
  std::size_t visible = 0;
  std::size_t culled = 0;    // at or behind the near plane
  std::size_t singular = 0;  // 2D covariance determinant < 1e-12
  std::size_t offscreen = 0;
};

/// Front-to-back splatting of a world set over a constant background.
/// alpha_k = min(0.99, o_k exp(-q/2)) inside q <= 9 and 0 outside; a pixel
/// stops compositing right after transmittance falls below 1e-4.
Frame rasterize(const core::WorldGaussians& g, const Camera& cam, const Vec3& background,
                RasterStats* stats = nullptr);

/// Exact gradient of the forward above (piecewise: the support, the alpha
/// clamp and the transmittance cutoff are treated as locally constant).
core::WorldGradients rasterize_backward(const core::WorldGaussians& g, const Camera& cam, const Vec3& background,
                                        const FrameGradient& upstream);

}  // namespace gsavatar::render
