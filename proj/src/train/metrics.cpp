#include "gsavatar/train/metrics.hpp"

#include <cmath>

#include "gsavatar/common/error.hpp"
#include "gsavatar/simd/kernels.hpp"

namespace gsavatar::train {

double psnr_from_mse(double mse) {
  if (!(mse > 0)) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double psnr(const render::Frame& a, const render::Frame& b) {
  if (a.width != b.width || a.height != b.height || a.rgb.size() != b.rgb.size())
    throw Error(ErrorCode::LengthMismatch, "length mismatch: frame shapes differ");
  if (a.rgb.empty()) throw Error(ErrorCode::InvalidArgument, "empty frame");
  double sum = 0.0;
  for (std::size_t k = 0; k < a.rgb.size(); ++k) {
    const double d = a.rgb[k] - b.rgb[k];
    sum += d * d;
  }
  return psnr_from_mse(sum / static_cast<double>(a.rgb.size()));
}

std::vector<double> gaussian_taps(int window, double sigma) {
  std::vector<double> taps(static_cast<std::size_t>(window));
  const int half = window / 2;
  double sum = 0.0;
  for (int t = 0; t < window; ++t) {
    taps[t] = std::exp(-0.5 * (t - half) * (t - half) / (sigma * sigma));
    sum += taps[t];
  }
  for (auto& t : taps) t /= sum;
  return taps;
}

namespace {

/// Separable valid correlation of a w x h image; output (w-n+1) x (h-n+1).
std::vector<double> filter_valid(const std::vector<double>& img, int w, int h, const std::vector<double>& taps) {
  const auto& k = simd::active();
  const int n = static_cast<int>(taps.size());
  const int ow = w - n + 1, oh = h - n + 1;
  // Horizontal pass, written transposed so the vertical pass is also a row filter.
  std::vector<double> tmp(static_cast<std::size_t>(ow) * h), row(static_cast<std::size_t>(ow));
  for (int y = 0; y < h; ++y) {
    k.filter_row(img.data() + static_cast<std::size_t>(y) * w, ow, taps.data(), taps.size(), row.data());
    for (int x = 0; x < ow; ++x) tmp[static_cast<std::size_t>(x) * h + y] = row[x];
  }
  std::vector<double> out(static_cast<std::size_t>(ow) * oh), col(static_cast<std::size_t>(oh));
  for (int x = 0; x < ow; ++x) {
    k.filter_row(tmp.data() + static_cast<std::size_t>(x) * h, oh, taps.data(), taps.size(), col.data());
    for (int y = 0; y < oh; ++y) out[static_cast<std::size_t>(y) * ow + x] = col[y];
  }
  return out;
}

/// Adjoint of filter_valid: scatters an (w-n+1) x (h-n+1) map back to w x h.
std::vector<double> filter_adjoint(const std::vector<double>& map, int w, int h, const std::vector<double>& taps) {
  const int n = static_cast<int>(taps.size());
  const int ow = w - n + 1, oh = h - n + 1;
  std::vector<double> tmp(static_cast<std::size_t>(ow) * h, 0.0);
  for (int y = 0; y < oh; ++y)
    for (int t = 0; t < n; ++t)
      for (int x = 0; x < ow; ++x)
        tmp[static_cast<std::size_t>(y + t) * ow + x] += taps[t] * map[static_cast<std::size_t>(y) * ow + x];
  std::vector<double> out(static_cast<std::size_t>(w) * h, 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x)
      for (int t = 0; t < n; ++t)
        out[static_cast<std::size_t>(y) * w + x + t] += taps[t] * tmp[static_cast<std::size_t>(y) * ow + x];
  return out;
}

}  // namespace

double ssim_channel(std::span<const double> a, std::span<const double> b, int width, int height,
                    const SsimOptions& opt, std::vector<double>* grad_a) {
  const std::size_t np = static_cast<std::size_t>(width) * height;
  if (a.size() != np || b.size() != np) throw Error(ErrorCode::LengthMismatch, "length mismatch: ssim planes");
  if (width < opt.window || height < opt.window)
    throw Error(ErrorCode::InvalidArgument, "frame smaller than the ssim window");
  const auto taps = gaussian_taps(opt.window, opt.sigma);
  const double c1 = std::pow(opt.k1 * opt.data_range, 2), c2 = std::pow(opt.k2 * opt.data_range, 2);

  std::vector<double> va(a.begin(), a.end()), vb(b.begin(), b.end()), aa(np), bb(np), ab(np);
  for (std::size_t k = 0; k < np; ++k) {
    aa[k] = va[k] * va[k];
    bb[k] = vb[k] * vb[k];
    ab[k] = va[k] * vb[k];
  }
  const auto mu_a = filter_valid(va, width, height, taps), mu_b = filter_valid(vb, width, height, taps);
  const auto e_aa = filter_valid(aa, width, height, taps), e_bb = filter_valid(bb, width, height, taps);
  const auto e_ab = filter_valid(ab, width, height, taps);

  const std::size_t m = mu_a.size();
  const double inv = 1.0 / static_cast<double>(m);
  std::vector<double> g1, g2, g3;
  if (grad_a) {
    g1.resize(m);
    g2.resize(m);
    g3.resize(m);
  }
  double total = 0.0;
  for (std::size_t p = 0; p < m; ++p) {
    const double ma = mu_a[p], mb = mu_b[p];
    const double saa = e_aa[p] - ma * ma, sbb = e_bb[p] - mb * mb, sab = e_ab[p] - ma * mb;
    const double n1 = 2 * ma * mb + c1, n2 = 2 * sab + c2;
    const double d1 = ma * ma + mb * mb + c1, d2 = saa + sbb + c2;
    const double s = (n1 * n2) / (d1 * d2);
    total += s;
    if (grad_a) {
      // d log s over the moments E[a], E[a^2], E[ab].
      g1[p] = inv * s * (2 * mb / n1 - 2 * mb / n2 - 2 * ma / d1 + 2 * ma / d2);
      g2[p] = inv * s * (-1.0 / d2);
      g3[p] = inv * s * (2.0 / n2);
    }
  }
  if (grad_a) {
    const auto G1 = filter_adjoint(g1, width, height, taps);
    const auto G2 = filter_adjoint(g2, width, height, taps);
    const auto G3 = filter_adjoint(g3, width, height, taps);
    grad_a->resize(np);
    for (std::size_t k = 0; k < np; ++k) (*grad_a)[k] = G1[k] + 2 * va[k] * G2[k] + vb[k] * G3[k];
  }
  return total * inv;
}

double ssim_rgb(std::span<const double> a, std::span<const double> b, int width, int height,
                std::vector<double>* grad_a, const SsimOptions& opt) {
  const std::size_t np = static_cast<std::size_t>(width) * height;
  if (a.size() != np * 3 || b.size() != np * 3) throw Error(ErrorCode::LengthMismatch, "length mismatch: ssim");
  if (grad_a) grad_a->assign(np * 3, 0.0);
  std::vector<double> pa(np), pb(np), g;
  double total = 0.0;
  for (int c = 0; c < 3; ++c) {
    for (std::size_t k = 0; k < np; ++k) {
      pa[k] = a[k * 3 + c];
      pb[k] = b[k * 3 + c];
    }
    total += ssim_channel(pa, pb, width, height, opt, grad_a ? &g : nullptr) / 3.0;
    if (grad_a)
      for (std::size_t k = 0; k < np; ++k) (*grad_a)[k * 3 + c] = g[k] / 3.0;
  }
  return total;
}

double ssim(const render::Frame& a, const render::Frame& b, const SsimOptions& opt) {
  if (a.width != b.width || a.height != b.height) throw Error(ErrorCode::LengthMismatch, "length mismatch: frame shapes differ");
  return ssim_rgb(a.rgb, b.rgb, a.width, a.height, nullptr, opt);
}

}  // namespace gsavatar::train
