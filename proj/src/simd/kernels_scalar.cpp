#include <cmath>

#include "gsavatar/simd/kernels.hpp"

namespace gsavatar::simd {
namespace {

void adam_update_scalar(double* params, const double* grads, double* m, double* v, std::size_t n,
                        const AdamArgs& args) {
  const double one_minus_b1 = 1.0 - args.beta1;
  const double one_minus_b2 = 1.0 - args.beta2;
  for (std::size_t i = 0; i < n; ++i) {
    const double g = grads[i];
    m[i] = args.beta1 * m[i] + one_minus_b1 * g;
    v[i] = args.beta2 * v[i] + one_minus_b2 * (g * g);
    const double m_hat = m[i] / args.bias1;
    const double v_hat = v[i] / args.bias2;
    params[i] = params[i] - args.lr * m_hat / (std::sqrt(v_hat) + args.eps);
  }
}

void squared_distances_scalar(const double* xs, const double* ys, const double* zs, std::size_t n,
                              double qx, double qy, double qz, double* out) {
  for (std::size_t k = 0; k < n; ++k) {
    const double dx = xs[k] - qx;
    const double dy = ys[k] - qy;
    const double dz = zs[k] - qz;
    out[k] = dx * dx + dy * dy + dz * dz;
  }
}

void splat_power_row_scalar(double a, double b, double c, double dx0, double dy, std::size_t n,
                            double* out) {
  const double cross = 2.0 * b * dy;
  const double tail = c * dy * dy;
  for (std::size_t k = 0; k < n; ++k) {
    const double dx = static_cast<double>(k) + dx0;
    out[k] = -0.5 * (a * dx * dx + cross * dx + tail);
  }
}

void filter_row_scalar(const double* in, std::size_t out_count, const double* taps,
                       std::size_t tap_count, double* out) {
  for (std::size_t i = 0; i < out_count; ++i) {
    double acc = 0.0;
    for (std::size_t t = 0; t < tap_count; ++t) acc = acc + taps[t] * in[i + t];
    out[i] = acc;
  }
}

}  // namespace

const Kernels& scalar_kernels() {
  static const Kernels table{Level::Scalar, adam_update_scalar, squared_distances_scalar,
                             splat_power_row_scalar, filter_row_scalar};
  return table;
}

}  // namespace gsavatar::simd
