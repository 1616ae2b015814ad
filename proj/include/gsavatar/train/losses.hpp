#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <vector>

#include "gsavatar/common/math.hpp"
#include "gsavatar/render/camera.hpp"
#include "gsavatar/render/silhouette.hpp"

namespace gsavatar::train {

struct LossWeights {
  // stage I
  double rgb = 1.0;
  double sil = 0.1;
  double offset = 0.01;
  double lmk = 0.1;
  double lap = 100.0;
  double mesh = 1.0;
  // stage II
  double rgb2 = 1.0;
  double perc = 0.1;

  void validate() const;
};

/// Mean absolute RGB difference and its gradient on `rendered`.
render::ImageLoss rgb_loss(const render::Frame& rendered, const render::Frame& target);

struct OffsetLoss {
  double loss = 0.0;
  std::vector<Vec3> grad;
};

/// Mean squared norm of position residuals.
OffsetLoss offset_loss(std::span<const Vec3> residuals);

struct PatchRect {
  int x, y, size;
};

/// Loss evaluated on a square RGB patch; adds d loss / d rendered into grad.
class PatchLoss {
 public:
  virtual ~PatchLoss() = default;
  virtual double evaluate(const render::Frame& rendered, const render::Frame& target, const PatchRect& rect,
                          std::vector<double>& grad_rgb) const = 0;
};

/// 1 - SSIM on the patch.
class SsimPatchLoss final : public PatchLoss {
 public:
  double evaluate(const render::Frame& rendered, const render::Frame& target, const PatchRect& rect,
                  std::vector<double>& grad_rgb) const override;
};

struct PatchConfig {
  int size = 64;
  int count = 4;
};

/// Seeded crops; patches larger than the frame shrink to fit.
std::vector<PatchRect> sample_patches(int width, int height, const PatchConfig& cfg, std::mt19937_64& rng);

struct Stage1Terms {
  double rgb = 0, sil = 0, offset = 0, lmk = 0, lap = 0, mesh = 0;
  double total(const LossWeights& w) const {
    return w.rgb * rgb + w.sil * sil + w.offset * offset + w.lmk * lmk + w.lap * lap + w.mesh * mesh;
  }
};

struct Stage2Loss {
  double rgb = 0.0;
  double perc = 0.0;
  double total = 0.0;
  render::FrameGradient grad;
};

/// w.rgb2 * L1 + w.perc * mean patch loss over the crops.
Stage2Loss stage2_loss(const render::Frame& rendered, const render::Frame& target, const LossWeights& w,
                       const PatchLoss* perceptual, std::span<const PatchRect> patches);

}  // namespace gsavatar::train
