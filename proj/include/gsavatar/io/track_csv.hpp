#pragma once

#include <filesystem>
#include <vector>

#include "gsavatar/core/params.hpp"

namespace gsavatar::io {

/// One row of a parameter track: theta, beta and the head transform.
struct TrackRow {
  core::ExpressionParams theta;
  core::PoseParams beta;
  core::RigidTransform transform;
};

/// CSV columns: frame, theta_0..theta_{d-1}, beta_rx..beta_tz,
/// T_qw, T_qx, T_qy, T_qz, T_tx, T_ty, T_tz.
void save_track(const std::vector<TrackRow>& rows, const std::filesystem::path& path);
std::vector<TrackRow> load_track(const std::filesystem::path& path);

}  // namespace gsavatar::io
