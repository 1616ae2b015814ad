#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "gsavatar/control/control_config.hpp"
#include "gsavatar/train/stage1.hpp"
#include "gsavatar/train/stage2.hpp"

namespace gsavatar::io {

struct ModelConfig {
  int feature_dim = 16;
  int expression_dim = 32;
  int grid_resolution = 32;
  int eta_dim = 8;
  std::string field_kind = "linear_blend";  // or "radial_basis"
  int rbf_centers = 64;
};

/// Every tunable constant, grouped as in the TOML file.
struct AppConfig {
  ModelConfig model;
  control::ControlConfig control;
  train::LossWeights weights;
  train::Stage1Config stage1;
  train::Stage2Config stage2;
  train::AdamConfig adam;
  Vec3 background = Vec3::Zero();
};

/// Full-default TOML document for cfg (every key present).
std::string to_toml(const AppConfig& cfg);

/// Overrides defaults with the keys present in `text`. Supports tables,
/// `key = value` with numbers, booleans, strings and numeric arrays, and
/// `#` comments. Unknown keys and type mismatches are errors naming the line.
AppConfig parse_toml(const std::string& text, const AppConfig& base = {});
AppConfig load_config(const std::filesystem::path& path);

}  // namespace gsavatar::io
