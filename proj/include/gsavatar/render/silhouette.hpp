#pragma once

#include <span>
#include <vector>

namespace gsavatar::render {

struct ImageLoss {
  double loss = 0.0;
  std::vector<double> grad;
};

/// Mean |alpha - mask| with its (sub)gradient; sign(0) is taken as 0.
ImageLoss silhouette_loss(std::span<const double> alpha, std::span<const double> mask);

}  // namespace gsavatar::render
