#pragma once

#include <span>
#include <vector>

#include "gsavatar/render/camera.hpp"

namespace gsavatar::train {

inline constexpr double kPsnrCap = 99.0;

/// 10 log10(1 / MSE) over RGB; identical frames report kPsnrCap.
double psnr(const render::Frame& a, const render::Frame& b);
double psnr_from_mse(double mse);

struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double data_range = 1.0;
};

/// Normalised 1D Gaussian taps.
std::vector<double> gaussian_taps(int window, double sigma);

/// Mean SSIM over the valid window positions of one channel (row-major
/// width x height, arbitrary stride between samples).
double ssim_channel(std::span<const double> a, std::span<const double> b, int width, int height,
                    const SsimOptions& opt = {}, std::vector<double>* grad_a = nullptr);

/// Mean over RGB channels of ssim_channel.
double ssim(const render::Frame& a, const render::Frame& b, const SsimOptions& opt = {});

/// SSIM of interleaved RGB planes plus d SSIM / d a (same layout as a).
double ssim_rgb(std::span<const double> a, std::span<const double> b, int width, int height,
                std::vector<double>* grad_a, const SsimOptions& opt = {});

}  // namespace gsavatar::train
