#include "gsavatar/control/split.hpp"

#include <cmath>
#include <string>

#include "gsavatar/common/error.hpp"

namespace gsavatar::control {

std::vector<std::size_t> split_candidates(std::span<const double> magnitudes, double tau_split,
                                          std::span<const std::uint8_t> eligible) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < magnitudes.size(); ++i) {
    if (!eligible.empty() && !eligible[i]) continue;
    if (magnitudes[i] > tau_split) out.push_back(i);
  }
  return out;
}

SplitResult split_gaussians(const core::GaussianSet& set, std::span<const double> magnitudes,
                            std::span<const Vec3> directions, const ControlConfig& cfg, long iteration,
                            std::span<const std::uint8_t> eligible) {
  const std::size_t n = set.size();
  if (magnitudes.size() != n || directions.size() != n || (!eligible.empty() && eligible.size() != n))
    throw Error(ErrorCode::LengthMismatch, "split inputs are not aligned with the set");
  const auto parents = split_candidates(magnitudes, cfg.tau_split, eligible);
  if (n + parents.size() > cfg.max_gaussians)
    throw Error(ErrorCode::CapacityExceeded, "split would grow the set to " + std::to_string(n + parents.size()) +
                                                 " > max_gaussians " + std::to_string(cfg.max_gaussians));

  SplitResult result;
  result.report.iteration = iteration;
  core::GaussianSet& out = result.set;
  out = set;
  const std::size_t total = n + parents.size();
  out.positions.resize(total);
  out.rotations.resize(total);
  out.log_scales.resize(total);
  out.opacity_logits.resize(total);
  out.features.conservativeResize(static_cast<Eigen::Index>(total), set.features.cols());

  const double log_factor = std::log(cfg.split_scale_factor);
  for (std::size_t k = 0; k < parents.size(); ++k) {
    const std::size_t p = parents[k];
    const std::size_t appended = n + k;
    Vec3 dir = directions[p];
    const double len = dir.norm();
    if (!(len > 0) || !std::isfinite(len)) {
      dir = Vec3::UnitX();
      result.report.degenerate.push_back(p);
    } else {
      dir /= len;
    }
    const Vec3 offset = cfg.split_epsilon * set.decoded_scale(p).mean() * dir;
    const Vec3 child_scale = set.log_scales[p] + Vec3::Constant(log_factor);

    out.positions[p] = set.positions[p] + offset;
    out.log_scales[p] = child_scale;

    out.positions[appended] = set.positions[p] - offset;
    out.rotations[appended] = set.rotations[p];
    out.log_scales[appended] = child_scale;
    out.opacity_logits[appended] = set.opacity_logits[p];
    out.features.row(static_cast<Eigen::Index>(appended)) = set.features.row(static_cast<Eigen::Index>(p));

    result.report.parents.push_back(p);
    result.report.children.push_back(p);
    result.report.children.push_back(appended);
    result.report.magnitudes.push_back(magnitudes[p]);
  }
  return result;
}

}  // namespace gsavatar::control
