#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "gsavatar/control/split.hpp"
#include "gsavatar/core/residual_field.hpp"
#include "gsavatar/geometry/sdf_grid.hpp"
#include "gsavatar/train/stage2.hpp"

namespace gsavatar::io {

nlohmann::json gaussians_json(const core::GaussianSet& g);
core::GaussianSet gaussians_from_json_value(const nlohmann::json& j);

nlohmann::json bank_json(const core::ResidualFieldBank& bank);
core::ResidualFieldBank bank_from_json(const nlohmann::json& j);

nlohmann::json split_report_json(const control::SplitReport& r);
control::SplitReport split_report_from_json(const nlohmann::json& j);

nlohmann::json grid_json(const geometry::SdfGrid& g);
geometry::SdfGrid grid_from_json(const nlohmann::json& j);

/// Avatar file: canonical set, residual bank and split generations.
void save_avatar(const train::AvatarState& s, const std::filesystem::path& path);
train::AvatarState load_avatar(const std::filesystem::path& path);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);
nlohmann::json read_json(const std::filesystem::path& path);

}  // namespace gsavatar::io
