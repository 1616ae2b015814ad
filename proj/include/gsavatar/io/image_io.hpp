#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "gsavatar/render/camera.hpp"

namespace gsavatar::io {

/// 8-bit quantisation: clamp to [0,1], scale by 255, round half away from zero.
std::uint8_t quantize(double v);

/// RGB PNG of the frame (alpha is not stored).
void write_png(const render::Frame& f, const std::filesystem::path& path);
/// Grayscale PNG of a [0,1] plane (e.g. a silhouette mask).
void write_png_gray(const std::vector<double>& plane, int width, int height, const std::filesystem::path& path);
/// Reads RGB or RGBA PNG; alpha defaults to 1 without an alpha channel.
render::Frame read_png(const std::filesystem::path& path);

struct NpyArray {
  std::vector<std::size_t> shape;
  std::vector<double> data;  // values widened from float32
};

/// NumPy .npy v1.0, '<f4', C order.
void write_npy(const std::filesystem::path& path, const std::vector<std::size_t>& shape,
               const std::vector<double>& data);
NpyArray read_npy(const std::filesystem::path& path);

/// H x W x 4 float32 (RGB then alpha).
void write_frame_npy(const render::Frame& f, const std::filesystem::path& path);
render::Frame read_frame_npy(const std::filesystem::path& path);

/// Dispatches on extension (.png or .npy).
render::Frame read_frame(const std::filesystem::path& path);

}  // namespace gsavatar::io
