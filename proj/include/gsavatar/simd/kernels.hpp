#pragma once

// Data-parallel inner loops shared by the optimizer, the neighbor and ICP
// searches, the splat rasterizer and the SSIM filter. Every kernel has a
// scalar reference and (on x86-64) an AVX2 variant; the variant is chosen
// once at startup from CPUID and may be forced with GSAVATAR_SIMD=scalar.
//
// All variants perform the same IEEE operations in the same order per output
// element, so they agree bitwise. The build disables FMA contraction.

#include <cstddef>

namespace gsavatar::simd {

enum class Level { Scalar, Avx2 };

struct AdamArgs {
  double lr;
  double beta1;
  double beta2;
  double eps;
  double bias1;  // 1 - beta1^t
  double bias2;  // 1 - beta2^t
};

struct Kernels {
  Level level;
  /// m = b1 m + (1-b1) g; v = b2 v + (1-b2) g^2; p -= lr (m/bias1) / (sqrt(v/bias2) + eps)
  void (*adam_update)(double* params, const double* grads, double* m, double* v, std::size_t n,
                      const AdamArgs& args);
  /// out[k] = (xs[k]-qx)^2 + (ys[k]-qy)^2 + (zs[k]-qz)^2
  void (*squared_distances)(const double* xs, const double* ys, const double* zs, std::size_t n,
                            double qx, double qy, double qz, double* out);
  /// out[k] = -0.5 * (a dx^2 + 2 b dx dy + c dy^2) with dx = dx0 + k.
  void (*splat_power_row)(double a, double b, double c, double dx0, double dy, std::size_t n,
                          double* out);
  /// Valid correlation: out[i] = sum_t taps[t] * in[i + t], i < out_count.
  void (*filter_row)(const double* in, std::size_t out_count, const double* taps,
                     std::size_t tap_count, double* out);
};

const Kernels& scalar_kernels();
/// nullptr when the CPU (or the build target) lacks AVX2.
const Kernels* avx2_kernels();

const Kernels& active();
Level active_level();
void set_level(Level level);

const char* to_string(Level level);

namespace detail {
const Kernels* avx2_table();
}

}  // namespace gsavatar::simd
