#include "gsavatar/train/adam.hpp"

#include <cmath>
#include <string>

#include "gsavatar/common/error.hpp"
#include "gsavatar/simd/kernels.hpp"

namespace gsavatar::train {

void AdamState::resize(std::size_t n) {
  m.resize(n, 0.0);
  v.resize(n, 0.0);
}

void adam_step(std::string_view group, std::span<double> params, std::span<const double> grads, AdamState& state,
               double lr, const AdamConfig& cfg) {
  if (params.size() != grads.size())
    throw Error(ErrorCode::LengthMismatch, "length mismatch: " + std::string(group) + " gradient");
  for (double g : grads)
    if (!std::isfinite(g)) throw Error(ErrorCode::Divergence, "non-finite gradient in group " + std::string(group));
  if (state.m.size() != params.size()) state.resize(params.size());
  ++state.step;
  const simd::AdamArgs args{lr, cfg.beta1, cfg.beta2, cfg.eps,
                            1.0 - std::pow(cfg.beta1, static_cast<double>(state.step)),
                            1.0 - std::pow(cfg.beta2, static_cast<double>(state.step))};
  simd::active().adam_update(params.data(), grads.data(), state.m.data(), state.v.data(), params.size(), args);
}

}  // namespace gsavatar::train
