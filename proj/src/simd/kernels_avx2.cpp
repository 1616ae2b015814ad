// AVX2 variants. Only <immintrin.h> and the kernel declarations are included
// here so no inline library code is emitted with the AVX2 target attribute.
#include "gsavatar/simd/kernels.hpp"

#if defined(__x86_64__) && (defined(__GNUC__) || defined(__clang__))
#include <immintrin.h>
#define GSAVATAR_HAVE_AVX2_BUILD 1
#define GSAVATAR_AVX2 __attribute__((target("avx2")))
#else
#define GSAVATAR_HAVE_AVX2_BUILD 0
#endif

namespace gsavatar::simd {

#if GSAVATAR_HAVE_AVX2_BUILD
namespace {

GSAVATAR_AVX2 void adam_update_avx2(double* params, const double* grads, double* m, double* v,
                                    std::size_t n, const AdamArgs& args) {
  const double one_minus_b1 = 1.0 - args.beta1;
  const double one_minus_b2 = 1.0 - args.beta2;
  const __m256d b1 = _mm256_set1_pd(args.beta1);
  const __m256d b2 = _mm256_set1_pd(args.beta2);
  const __m256d c1 = _mm256_set1_pd(one_minus_b1);
  const __m256d c2 = _mm256_set1_pd(one_minus_b2);
  const __m256d bias1 = _mm256_set1_pd(args.bias1);
  const __m256d bias2 = _mm256_set1_pd(args.bias2);
  const __m256d lr = _mm256_set1_pd(args.lr);
  const __m256d eps = _mm256_set1_pd(args.eps);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d g = _mm256_loadu_pd(grads + i);
    __m256d mi = _mm256_loadu_pd(m + i);
    __m256d vi = _mm256_loadu_pd(v + i);
    mi = _mm256_add_pd(_mm256_mul_pd(b1, mi), _mm256_mul_pd(c1, g));
    vi = _mm256_add_pd(_mm256_mul_pd(b2, vi), _mm256_mul_pd(c2, _mm256_mul_pd(g, g)));
    _mm256_storeu_pd(m + i, mi);
    _mm256_storeu_pd(v + i, vi);
    const __m256d m_hat = _mm256_div_pd(mi, bias1);
    const __m256d v_hat = _mm256_div_pd(vi, bias2);
    const __m256d step =
        _mm256_div_pd(_mm256_mul_pd(lr, m_hat), _mm256_add_pd(_mm256_sqrt_pd(v_hat), eps));
    _mm256_storeu_pd(params + i, _mm256_sub_pd(_mm256_loadu_pd(params + i), step));
  }
  for (; i < n; ++i) {
    const double g = grads[i];
    m[i] = args.beta1 * m[i] + one_minus_b1 * g;
    v[i] = args.beta2 * v[i] + one_minus_b2 * (g * g);
    const double m_hat = m[i] / args.bias1;
    const double v_hat = v[i] / args.bias2;
    // Scalar sqrt through the same instruction family as the vector lanes.
    const __m128d s = _mm_sqrt_sd(_mm_set_sd(v_hat), _mm_set_sd(v_hat));
    params[i] = params[i] - args.lr * m_hat / (_mm_cvtsd_f64(s) + args.eps);
  }
}

GSAVATAR_AVX2 void squared_distances_avx2(const double* xs, const double* ys, const double* zs,
                                          std::size_t n, double qx, double qy, double qz,
                                          double* out) {
  const __m256d vx = _mm256_set1_pd(qx);
  const __m256d vy = _mm256_set1_pd(qy);
  const __m256d vz = _mm256_set1_pd(qz);
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) {
    const __m256d dx = _mm256_sub_pd(_mm256_loadu_pd(xs + k), vx);
    const __m256d dy = _mm256_sub_pd(_mm256_loadu_pd(ys + k), vy);
    const __m256d dz = _mm256_sub_pd(_mm256_loadu_pd(zs + k), vz);
    const __m256d acc = _mm256_add_pd(_mm256_add_pd(_mm256_mul_pd(dx, dx), _mm256_mul_pd(dy, dy)),
                                      _mm256_mul_pd(dz, dz));
    _mm256_storeu_pd(out + k, acc);
  }
  for (; k < n; ++k) {
    const double dx = xs[k] - qx;
    const double dy = ys[k] - qy;
    const double dz = zs[k] - qz;
    out[k] = dx * dx + dy * dy + dz * dz;
  }
}

GSAVATAR_AVX2 void splat_power_row_avx2(double a, double b, double c, double dx0, double dy,
                                        std::size_t n, double* out) {
  const double cross = 2.0 * b * dy;
  const double tail = c * dy * dy;
  const __m256d va = _mm256_set1_pd(a);
  const __m256d vcross = _mm256_set1_pd(cross);
  const __m256d vtail = _mm256_set1_pd(tail);
  const __m256d vdx0 = _mm256_set1_pd(dx0);
  const __m256d half = _mm256_set1_pd(-0.5);
  const __m256d four = _mm256_set1_pd(4.0);
  __m256d kk = _mm256_set_pd(3.0, 2.0, 1.0, 0.0);
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) {
    const __m256d dx = _mm256_add_pd(kk, vdx0);
    const __m256d quad = _mm256_mul_pd(_mm256_mul_pd(va, dx), dx);
    const __m256d sum = _mm256_add_pd(_mm256_add_pd(quad, _mm256_mul_pd(vcross, dx)), vtail);
    _mm256_storeu_pd(out + k, _mm256_mul_pd(half, sum));
    kk = _mm256_add_pd(kk, four);
  }
  for (; k < n; ++k) {
    const double dx = static_cast<double>(k) + dx0;
    out[k] = -0.5 * (a * dx * dx + cross * dx + tail);
  }
}

GSAVATAR_AVX2 void filter_row_avx2(const double* in, std::size_t out_count, const double* taps,
                                   std::size_t tap_count, double* out) {
  std::size_t i = 0;
  for (; i + 4 <= out_count; i += 4) {
    __m256d acc = _mm256_setzero_pd();
    for (std::size_t t = 0; t < tap_count; ++t) {
      acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_set1_pd(taps[t]), _mm256_loadu_pd(in + i + t)));
    }
    _mm256_storeu_pd(out + i, acc);
  }
  for (; i < out_count; ++i) {
    double acc = 0.0;
    for (std::size_t t = 0; t < tap_count; ++t) acc = acc + taps[t] * in[i + t];
    out[i] = acc;
  }
}

}  // namespace

namespace detail {
const Kernels* avx2_table() {
  static const Kernels table{Level::Avx2, adam_update_avx2, squared_distances_avx2,
                             splat_power_row_avx2, filter_row_avx2};
  return &table;
}
}  // namespace detail

#else

namespace detail {
const Kernels* avx2_table() { return nullptr; }
}  // namespace detail

#endif

}  // namespace gsavatar::simd
