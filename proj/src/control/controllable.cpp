#include "gsavatar/control/controllable.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gsavatar/common/error.hpp"

namespace gsavatar::control {

void ControlConfig::validate(std::size_t current_count) const {
  if (!(tau_control > 0)) throw Error(ErrorCode::InvalidArgument, "tau_control must be positive");
  if (!(tau_split > 0)) throw Error(ErrorCode::InvalidArgument, "tau_split must be positive");
  if (!(radius > 0)) throw Error(ErrorCode::InvalidArgument, "radius must be positive");
  if (!(sigma > 0)) throw Error(ErrorCode::InvalidArgument, "sigma must be positive");
  if (max_gaussians < current_count) throw Error(ErrorCode::CapacityExceeded, "max_gaussians below current count");
  if (!(split_scale_factor > 0 && split_scale_factor <= 1))
    throw Error(ErrorCode::InvalidArgument, "split_scale_factor must lie in (0, 1]");
  if (!(split_epsilon >= 0)) throw Error(ErrorCode::InvalidArgument, "split_epsilon must be non-negative");
  if (split_interval < 0 || split_generations < 0)
    throw Error(ErrorCode::InvalidArgument, "split cadence values must be non-negative");
}

std::vector<Vec3> expression_displacements(std::span<const Vec3> positions, const core::ExpressionParams& theta,
                                           const core::ResidualFieldBank& bank) {
  const auto& field = bank.field(core::Attribute::Def, core::Driver::Expression);
  if (field.driver_dim() != theta.dim())
    throw Error(ErrorCode::LengthMismatch, "expression dimension does not match the deformation field");
  if (field.per_instance() && field.instance_count() != positions.size())
    throw Error(ErrorCode::LengthMismatch, "deformation field instance count != position count");
  std::vector<Vec3> out(positions.size());
  const std::span<const double> drv(theta.coefficients.data(), static_cast<std::size_t>(theta.dim()));
  for (std::size_t i = 0; i < positions.size(); ++i)
    field.evaluate(i, {positions[i].data(), 3}, drv, {out[i].data(), 3});
  return out;
}

std::vector<double> displacement_magnitudes(std::span<const Vec3> positions, const core::ExpressionParams& theta,
                                            const core::ResidualFieldBank& bank) {
  const auto disp = expression_displacements(positions, theta, bank);
  std::vector<double> out(disp.size());
  for (std::size_t i = 0; i < disp.size(); ++i) out[i] = disp[i].norm();
  return out;
}

std::vector<std::size_t> select_controls(std::span<const double> delta, double tau) {
  std::vector<std::size_t> c;
  for (std::size_t i = 0; i < delta.size(); ++i)
    if (delta[i] > tau) c.push_back(i);
  return c;
}

std::vector<std::vector<std::size_t>> neighborhoods(std::span<const Vec3> positions,
                                                    std::span<const std::size_t> controls, const ControlConfig& cfg,
                                                    const SpatialIndex& index) {
  if (index.point_count() != positions.size())
    throw Error(ErrorCode::LengthMismatch, "spatial index built over a different point set");
  std::vector<std::vector<std::size_t>> out(controls.size());
  for (std::size_t c = 0; c < controls.size(); ++c) {
    const std::size_t i = controls[c];
    for (std::size_t j : index.query_radius(positions[i], cfg.radius)) {
      if (j == i || std::binary_search(controls.begin(), controls.end(), j)) continue;
      out[c].push_back(j);
    }
  }
  return out;
}

std::vector<std::vector<std::size_t>> memberships(std::size_t count, std::span<const std::size_t> controls,
                                                  const std::vector<std::vector<std::size_t>>& neighbors) {
  std::vector<std::vector<std::size_t>> of(count);
  // Controls are ascending, so each list comes out ascending.
  for (std::size_t c = 0; c < controls.size(); ++c)
    for (std::size_t j : neighbors[c]) of[j].push_back(controls[c]);
  return of;
}

std::vector<double> propagation_weights(std::span<const Vec3> positions, std::size_t j,
                                        std::span<const std::size_t> controls_of_j, double sigma) {
  if (controls_of_j.empty()) throw Error(ErrorCode::InvalidArgument, "propagation weights need at least one control");
  const double inv_s2 = 1.0 / (sigma * sigma);
  std::vector<double> u(controls_of_j.size());
  for (std::size_t k = 0; k < u.size(); ++k)
    u[k] = -(positions[j] - positions[controls_of_j[k]]).squaredNorm() * inv_s2;
  // Shift by the max exponent; the normalized weights are unchanged.
  const double top = *std::max_element(u.begin(), u.end());
  double total = 0.0;
  for (double& v : u) {
    v = std::exp(v - top);
    total += v;
  }
  for (double& v : u) v /= total;
  return u;
}

namespace {

std::size_t control_slot(std::span<const std::size_t> controls, std::size_t i) {
  const auto it = std::lower_bound(controls.begin(), controls.end(), i);
  if (it == controls.end() || *it != i)
    throw Error(ErrorCode::InvalidArgument, "membership references non-control index " + std::to_string(i));
  return static_cast<std::size_t>(it - controls.begin());
}

}  // namespace

std::vector<Vec3> propagate(std::span<const Vec3> base_deformed, std::span<const Vec3> canonical,
                            std::span<const std::size_t> controls, std::span<const Vec3> control_displacements,
                            const std::vector<std::vector<std::size_t>>& memberships, const ControlConfig& cfg) {
  if (base_deformed.size() != canonical.size() || memberships.size() != canonical.size() ||
      controls.size() != control_displacements.size())
    throw Error(ErrorCode::LengthMismatch, "propagate inputs disagree in length");
  std::vector<Vec3> out(base_deformed.begin(), base_deformed.end());
  for (std::size_t j = 0; j < out.size(); ++j) {
    const auto& cj = memberships[j];
    if (cj.empty()) continue;
    const auto w = propagation_weights(canonical, j, cj, cfg.sigma);
    Vec3 adj = Vec3::Zero();
    for (std::size_t k = 0; k < cj.size(); ++k) adj += w[k] * control_displacements[control_slot(controls, cj[k])];
    out[j] += adj;
  }
  return out;
}

PropagationGradients propagate_vjp(std::span<const Vec3> canonical, std::span<const std::size_t> controls,
                                   std::span<const Vec3> control_displacements,
                                   const std::vector<std::vector<std::size_t>>& memberships, const ControlConfig& cfg,
                                   std::span<const Vec3> upstream) {
  PropagationGradients g;
  g.control_displacements.assign(controls.size(), Vec3::Zero());
  g.canonical.assign(canonical.size(), Vec3::Zero());
  const double inv_s2 = 1.0 / (cfg.sigma * cfg.sigma);
  for (std::size_t j = 0; j < canonical.size(); ++j) {
    const auto& cj = memberships[j];
    if (cj.empty()) continue;
    const auto w = propagation_weights(canonical, j, cj, cfg.sigma);
    std::vector<double> dw(cj.size());
    double mean_dw = 0.0;
    for (std::size_t k = 0; k < cj.size(); ++k) {
      const std::size_t slot = control_slot(controls, cj[k]);
      g.control_displacements[slot] += w[k] * upstream[j];
      dw[k] = upstream[j].dot(control_displacements[slot]);
      mean_dw += w[k] * dw[k];
    }
    // Softmax over u_k = -|x_j - x_k|^2 / sigma^2.
    for (std::size_t k = 0; k < cj.size(); ++k) {
      const double du = w[k] * (dw[k] - mean_dw);
      const Vec3 diff = canonical[j] - canonical[cj[k]];
      g.canonical[j] += du * (-2.0 * inv_s2) * diff;
      g.canonical[cj[k]] += du * (2.0 * inv_s2) * diff;
    }
  }
  return g;
}

}  // namespace gsavatar::control
