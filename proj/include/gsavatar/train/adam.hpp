#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "gsavatar/common/math.hpp"

static_assert(sizeof(gsavatar::Vec3) == 3 * sizeof(double));
static_assert(sizeof(gsavatar::Vec4) == 4 * sizeof(double));

namespace gsavatar::train {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<double> m, v;
  long step = 0;

  /// Grows (zero moments) or shrinks to n scalars.
  void resize(std::size_t n);
};

/// One bias-corrected Adam update. A non-finite gradient throws a
/// Divergence error naming `group`; params are left untouched then.
void adam_step(std::string_view group, std::span<double> params, std::span<const double> grads, AdamState& state,
               double lr, const AdamConfig& cfg);

inline std::span<double> flat(std::vector<Vec3>& v) { return {reinterpret_cast<double*>(v.data()), v.size() * 3}; }
inline std::span<const double> flat(const std::vector<Vec3>& v) { return {reinterpret_cast<const double*>(v.data()), v.size() * 3}; }
inline std::span<double> flat(std::vector<Vec4>& v) { return {reinterpret_cast<double*>(v.data()), v.size() * 4}; }
inline std::span<const double> flat(const std::vector<Vec4>& v) { return {reinterpret_cast<const double*>(v.data()), v.size() * 4}; }
inline std::span<double> flat(MatX& m) { return {m.data(), static_cast<std::size_t>(m.size())}; }
inline std::span<const double> flat(const MatX& m) { return {m.data(), static_cast<std::size_t>(m.size())}; }

}  // namespace gsavatar::train
