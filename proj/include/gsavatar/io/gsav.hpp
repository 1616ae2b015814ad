#pragma once

#include <filesystem>
#include <string>

#include "gsavatar/core/gaussian_set.hpp"

namespace gsavatar::io {

/// Binary container:
///   "GSAV" | u32 version (1) | u32 N | u32 d_F |
///   f32 positions[N*3] | f32 features[N*d_F] | f32 rotations[N*4] (w,x,y,z) |
///   f32 log_scales[N*3] | f32 opacity_logits[N]
/// All integers and floats little-endian; arrays row-major per Gaussian.
inline constexpr std::uint32_t kGsavVersion = 1;

void save_gsav(const core::GaussianSet& g, const std::filesystem::path& path);
core::GaussianSet load_gsav(const std::filesystem::path& path);

/// Lossless JSON debug form (doubles round-trip exactly).
std::string gaussians_to_json(const core::GaussianSet& g);
core::GaussianSet gaussians_from_json(const std::string& text);

}  // namespace gsavatar::io
