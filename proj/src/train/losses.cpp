#include "gsavatar/train/losses.hpp"

#include <cmath>

#include "gsavatar/common/error.hpp"
#include "gsavatar/train/metrics.hpp"

namespace gsavatar::train {

void LossWeights::validate() const {
  for (double v : {rgb, sil, offset, lmk, lap, mesh, rgb2, perc})
    if (!(v >= 0)) throw Error(ErrorCode::InvalidArgument, "loss weights must be non-negative");
}

render::ImageLoss rgb_loss(const render::Frame& rendered, const render::Frame& target) {
  if (rendered.width != target.width || rendered.height != target.height || rendered.rgb.size() != target.rgb.size())
    throw Error(ErrorCode::LengthMismatch, "length mismatch: frame shapes differ");
  // L1 over pixels and channels has the same form as the silhouette term.
  return render::silhouette_loss(rendered.rgb, target.rgb);
}

OffsetLoss offset_loss(std::span<const Vec3> residuals) {
  OffsetLoss out;
  out.grad.assign(residuals.size(), Vec3::Zero());
  if (residuals.empty()) return out;
  const double inv = 1.0 / static_cast<double>(residuals.size());
  for (std::size_t i = 0; i < residuals.size(); ++i) {
    out.loss += residuals[i].squaredNorm() * inv;
    out.grad[i] = 2.0 * inv * residuals[i];
  }
  return out;
}

double SsimPatchLoss::evaluate(const render::Frame& rendered, const render::Frame& target, const PatchRect& r,
                               std::vector<double>& grad_rgb) const {
  const std::size_t n = static_cast<std::size_t>(r.size) * r.size;
  std::vector<double> a(n * 3), b(n * 3), g;
  for (int y = 0; y < r.size; ++y)
    for (int x = 0; x < r.size; ++x) {
      const std::size_t src = (static_cast<std::size_t>(r.y + y) * rendered.width + r.x + x) * 3;
      const std::size_t dst = (static_cast<std::size_t>(y) * r.size + x) * 3;
      for (int c = 0; c < 3; ++c) {
        a[dst + c] = rendered.rgb[src + c];
        b[dst + c] = target.rgb[src + c];
      }
    }
  const double s = ssim_rgb(a, b, r.size, r.size, &g);
  for (int y = 0; y < r.size; ++y)
    for (int x = 0; x < r.size; ++x) {
      const std::size_t src = (static_cast<std::size_t>(r.y + y) * rendered.width + r.x + x) * 3;
      const std::size_t dst = (static_cast<std::size_t>(y) * r.size + x) * 3;
      for (int c = 0; c < 3; ++c) grad_rgb[src + c] -= g[dst + c];
    }
  return 1.0 - s;
}

std::vector<PatchRect> sample_patches(int width, int height, const PatchConfig& cfg, std::mt19937_64& rng) {
  const int size = std::min({cfg.size, width, height});
  std::vector<PatchRect> out;
  for (int k = 0; k < cfg.count; ++k) {
    // Drawn from raw 64-bit output so crops do not depend on the library's
    // distribution implementation.
    const int x = static_cast<int>(rng() % static_cast<std::uint64_t>(width - size + 1));
    const int y = static_cast<int>(rng() % static_cast<std::uint64_t>(height - size + 1));
    out.push_back({x, y, size});
  }
  return out;
}

Stage2Loss stage2_loss(const render::Frame& rendered, const render::Frame& target, const LossWeights& w,
                       const PatchLoss* perceptual, std::span<const PatchRect> patches) {
  w.validate();
  Stage2Loss out;
  const auto l1 = rgb_loss(rendered, target);
  out.rgb = l1.loss;
  out.grad = render::FrameGradient::zeros(rendered);
  for (std::size_t k = 0; k < l1.grad.size(); ++k) out.grad.rgb[k] = w.rgb2 * l1.grad[k];
  out.total = w.rgb2 * out.rgb;
  if (perceptual && w.perc > 0 && !patches.empty()) {
    std::vector<double> g(rendered.rgb.size(), 0.0);
    for (const auto& p : patches) out.perc += perceptual->evaluate(rendered, target, p, g);
    const double inv = 1.0 / static_cast<double>(patches.size());
    out.perc *= inv;
    for (std::size_t k = 0; k < g.size(); ++k) out.grad.rgb[k] += w.perc * inv * g[k];
    out.total += w.perc * out.perc;
  }
  return out;
}

}  // namespace gsavatar::train
