#include "gsavatar/core/avatar.hpp"

#include <cmath>
#include <string>

#include "gsavatar/common/error.hpp"
#include "gsavatar/control/controllable.hpp"
#include "gsavatar/control/spatial_index.hpp"

namespace gsavatar::core {
namespace {

struct Drivers {
  VecX expression;
  VecX pose;

  std::span<const double> of(Driver d) const {
    const VecX& v = d == Driver::Expression ? expression : pose;
    return {v.data(), static_cast<std::size_t>(v.size())};
  }
};

Drivers make_drivers(const GaussianSet& g, const ExpressionParams& theta, const PoseParams& beta,
                     const ResidualFieldBank& bank) {
  validate(theta);
  validate(beta);
  bank.check_compatible(g, theta.dim());
  return {theta.coefficients, beta.driver()};
}

// Sum of the expression and pose residuals of one attribute at Gaussian i.
template <int Dim>
Eigen::Matrix<double, Dim, 1> residual_sum(const ResidualFieldBank& bank, Attribute a, const GaussianSet& g,
                                           std::size_t i, const Drivers& drv, std::vector<double>& scratch) {
  Eigen::Matrix<double, Dim, 1> total = Eigen::Matrix<double, Dim, 1>::Zero();
  Eigen::Matrix<double, Dim, 1> part;
  const auto input = attribute_input(g, a, i, scratch);
  for (Driver d : kDrivers) {
    bank.field(a, d).evaluate(i, input, drv.of(d), {part.data(), Dim});
    total += part;
  }
  if (!total.allFinite())
    throw Error(ErrorCode::NonFinite, std::string("non-finite ") + to_string(a) + " residual at gaussian " +
                                          std::to_string(i));
  return total;
}

template <int Dim>
void field_backward(const ResidualFieldBank& bank, Attribute a, const GaussianSet& g, std::size_t i,
                    const Drivers& drv, const Eigen::Matrix<double, Dim, 1>& upstream, AvatarGradients& out,
                    std::span<double> input_grad, std::vector<double>& scratch) {
  const auto input = attribute_input(g, a, i, scratch);
  const std::span<const double> up(upstream.data(), Dim);
  for (Driver d : kDrivers) {
    const ResidualField& f = bank.field(a, d);
    auto& pg = out.fields[ResidualFieldBank::index(a, d)];
    f.accumulate_param_grad(i, input, drv.of(d), up, pg);
    f.accumulate_input_grad(i, input, drv.of(d), up, input_grad);
  }
}

Vec4 unit_or_throw(const Vec4& q, std::size_t i) {
  const double n = q.norm();
  if (!(n > 0) || !std::isfinite(n))
    throw Error(ErrorCode::NonFinite, "degenerate deformed rotation at gaussian " + std::to_string(i));
  return q / n;
}

}  // namespace

DeformedGeometry deform_geometry(const GaussianSet& g, const ExpressionParams& theta, const PoseParams& beta,
                                 const ResidualFieldBank& bank) {
  const Drivers drv = make_drivers(g, theta, beta, bank);
  const std::size_t n = g.size();
  DeformedGeometry out;
  out.positions.resize(n);
  out.rotations.resize(n);
  out.log_scales.resize(n);
  out.opacity_logits.resize(n);
  std::vector<double> scratch;
  for (std::size_t i = 0; i < n; ++i) {
    out.positions[i] = g.positions[i] + residual_sum<3>(bank, Attribute::Def, g, i, drv, scratch);
    const Vec4 dq = residual_sum<4>(bank, Attribute::Rot, g, i, drv, scratch);
    // Zero residual keeps Q0 untouched; otherwise renormalize the sum.
    out.rotations[i] = dq.isZero(0) ? g.rotations[i] : unit_or_throw(g.rotations[i] + dq, i);
    out.log_scales[i] = g.log_scales[i] + residual_sum<3>(bank, Attribute::Scale, g, i, drv, scratch);
    out.opacity_logits[i] = g.opacity_logits[i] + residual_sum<1>(bank, Attribute::Alpha, g, i, drv, scratch)[0];
  }
  return out;
}

std::vector<Vec3> predict_colors(const GaussianSet& g, const ExpressionParams& theta, const PoseParams& beta,
                                 const ResidualFieldBank& bank) {
  const Drivers drv = make_drivers(g, theta, beta, bank);
  std::vector<Vec3> out(g.size());
  std::vector<double> scratch;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const Vec3 z = residual_sum<3>(bank, Attribute::Color, g, i, drv, scratch);
    out[i] = Vec3(sigmoid(z[0]), sigmoid(z[1]), sigmoid(z[2]));
  }
  return out;
}

WorldPose to_world(std::span<const Vec3> positions, std::span<const Vec4> rotations, const RigidTransform& t) {
  validate(t);
  if (positions.size() != rotations.size()) throw Error(ErrorCode::LengthMismatch, "to_world length mismatch");
  WorldPose out;
  if (t.rotation == identity_quat() && t.translation.isZero(0)) {
    out.positions.assign(positions.begin(), positions.end());
    out.rotations.assign(rotations.begin(), rotations.end());
    return out;
  }
  const Mat3 r = t.matrix();
  out.positions.reserve(positions.size());
  out.rotations.reserve(rotations.size());
  for (std::size_t i = 0; i < positions.size(); ++i) {
    out.positions.push_back(r * positions[i] + t.translation);
    out.rotations.push_back(quat_mul(t.rotation, rotations[i]).normalized());
  }
  return out;
}

WorldGradients WorldGradients::zeros(std::size_t n) {
  WorldGradients g;
  g.positions.assign(n, Vec3::Zero());
  g.colors.assign(n, Vec3::Zero());
  g.rotations.assign(n, Vec4::Zero());
  g.log_scales.assign(n, Vec3::Zero());
  g.opacity_logits.assign(n, 0.0);
  return g;
}

WorldGaussians assemble_avatar(const GaussianSet& g, const ExpressionParams& theta, const PoseParams& beta,
                               const RigidTransform& t, const ResidualFieldBank& bank,
                               const control::ControlConfig& ctl, control::SplitReport* split_report) {
  ctl.validate(g.size());
  validate(t);
  DeformedGeometry deformed = deform_geometry(g, theta, beta, bank);
  std::vector<Vec3> colors = predict_colors(g, theta, beta, bank);
  const std::size_t n = g.size();

  Provenance prov;
  std::vector<Vec3> exp_disp;
  std::vector<double> magnitudes;
  if (ctl.enable_control || ctl.enable_split) {
    exp_disp = control::expression_displacements(g.positions, theta, bank);
    magnitudes.resize(n);
    for (std::size_t i = 0; i < n; ++i) magnitudes[i] = exp_disp[i].norm();
  }
  if (ctl.enable_control) {
    prov.controls = control::select_controls(magnitudes, ctl.tau_control);
    const control::SpatialIndex index(g.positions, ctl.radius);
    const auto nbrs = control::neighborhoods(g.positions, prov.controls, ctl, index);
    const auto members = control::memberships(n, prov.controls, nbrs);
    std::vector<Vec3> control_disp;
    control_disp.reserve(prov.controls.size());
    for (std::size_t i : prov.controls) control_disp.push_back(exp_disp[i]);
    deformed.positions = control::propagate(deformed.positions, g.positions, prov.controls, control_disp, members, ctl);
  }

  prov.source.resize(n);
  for (std::size_t i = 0; i < n; ++i) prov.source[i] = i;
  prov.split_child.assign(n, 0);

  if (ctl.enable_split) {
    // Split the deformed set; colors ride along in the feature slot.
    GaussianSet staged;
    staged.positions = std::move(deformed.positions);
    staged.rotations = std::move(deformed.rotations);
    staged.log_scales = std::move(deformed.log_scales);
    staged.opacity_logits = std::move(deformed.opacity_logits);
    staged.features.resize(static_cast<Eigen::Index>(n), 3);
    for (std::size_t i = 0; i < n; ++i) staged.features.row(static_cast<Eigen::Index>(i)) = colors[i].transpose();
    control::SplitResult split = control::split_gaussians(staged, magnitudes, exp_disp, ctl);
    for (std::size_t k = 0; k < split.report.parents.size(); ++k) {
      const std::size_t p = split.report.parents[k];
      prov.split_child[p] = 1;
      prov.source.push_back(p);
      prov.split_child.push_back(1);
    }
    deformed.positions = std::move(split.set.positions);
    deformed.rotations = std::move(split.set.rotations);
    deformed.log_scales = std::move(split.set.log_scales);
    deformed.opacity_logits = std::move(split.set.opacity_logits);
    colors.resize(deformed.positions.size());
    for (std::size_t i = 0; i < colors.size(); ++i)
      colors[i] = split.set.features.row(static_cast<Eigen::Index>(i)).transpose();
    if (split_report != nullptr) *split_report = std::move(split.report);
  }

  WorldPose world = to_world(deformed.positions, deformed.rotations, t);
  WorldGaussians out;
  out.positions = std::move(world.positions);
  out.rotations = std::move(world.rotations);
  out.colors = std::move(colors);
  out.log_scales = std::move(deformed.log_scales);
  out.opacity_logits = std::move(deformed.opacity_logits);
  out.provenance = std::move(prov);
  return out;
}

WorldGaussians assemble_avatar_taped(const GaussianSet& g, const ExpressionParams& theta, const PoseParams& beta,
                                     const RigidTransform& t, const ResidualFieldBank& bank,
                                     const control::ControlConfig& ctl, AvatarTape& tape) {
  if (ctl.enable_split) throw Error(ErrorCode::InvalidArgument, "taped assembly does not split");
  ctl.validate(g.size());
  validate(t);
  const Drivers drv = make_drivers(g, theta, beta, bank);
  const std::size_t n = g.size();
  tape = AvatarTape{};
  tape.expression = drv.expression;
  tape.pose = drv.pose;
  tape.transform = t;
  tape.ctl = ctl;
  tape.exp_disp.resize(n);
  tape.base.resize(n);
  tape.rot_raw.resize(n);
  tape.rot_local.resize(n);
  tape.rot_passthrough.resize(n);
  tape.colors.resize(n);

  WorldGaussians out;
  out.log_scales.resize(n);
  out.opacity_logits.resize(n);
  std::vector<double> scratch;
  const auto& exp_def = bank.field(Attribute::Def, Driver::Expression);
  const auto& pose_def = bank.field(Attribute::Def, Driver::Pose);
  for (std::size_t i = 0; i < n; ++i) {
    Vec3 pose_disp;
    exp_def.evaluate(i, {g.positions[i].data(), 3}, drv.of(Driver::Expression), {tape.exp_disp[i].data(), 3});
    pose_def.evaluate(i, {g.positions[i].data(), 3}, drv.of(Driver::Pose), {pose_disp.data(), 3});
    tape.base[i] = g.positions[i] + tape.exp_disp[i] + pose_disp;
    if (!tape.base[i].allFinite()) throw Error(ErrorCode::NonFinite, "non-finite def residual at gaussian " + std::to_string(i));

    const Vec4 dq = residual_sum<4>(bank, Attribute::Rot, g, i, drv, scratch);
    tape.rot_raw[i] = g.rotations[i] + dq;
    tape.rot_passthrough[i] = dq.isZero(0) ? 1 : 0;
    tape.rot_local[i] = tape.rot_passthrough[i] ? g.rotations[i] : unit_or_throw(tape.rot_raw[i], i);
    out.log_scales[i] = g.log_scales[i] + residual_sum<3>(bank, Attribute::Scale, g, i, drv, scratch);
    out.opacity_logits[i] = g.opacity_logits[i] + residual_sum<1>(bank, Attribute::Alpha, g, i, drv, scratch)[0];
    const Vec3 z = residual_sum<3>(bank, Attribute::Color, g, i, drv, scratch);
    tape.colors[i] = Vec3(sigmoid(z[0]), sigmoid(z[1]), sigmoid(z[2]));
  }

  std::vector<Vec3> adjusted = tape.base;
  Provenance prov;
  if (ctl.enable_control) {
    std::vector<double> magnitudes(n);
    for (std::size_t i = 0; i < n; ++i) magnitudes[i] = tape.exp_disp[i].norm();
    tape.controls = control::select_controls(magnitudes, ctl.tau_control);
    const control::SpatialIndex index(g.positions, ctl.radius);
    const auto nbrs = control::neighborhoods(g.positions, tape.controls, ctl, index);
    tape.memberships = control::memberships(n, tape.controls, nbrs);
    for (std::size_t i : tape.controls) tape.control_disp.push_back(tape.exp_disp[i]);
    adjusted = control::propagate(tape.base, g.positions, tape.controls, tape.control_disp, tape.memberships, ctl);
  } else {
    tape.memberships.assign(n, {});
  }
  prov.controls = tape.controls;
  prov.source.resize(n);
  for (std::size_t i = 0; i < n; ++i) prov.source[i] = i;
  prov.split_child.assign(n, 0);

  WorldPose world = to_world(adjusted, tape.rot_local, t);
  out.positions = std::move(world.positions);
  out.rotations = std::move(world.rotations);
  out.colors = tape.colors;
  out.provenance = std::move(prov);
  return out;
}

AvatarGradients AvatarGradients::zeros_like(const GaussianSet& g, const ResidualFieldBank& bank) {
  AvatarGradients a;
  a.positions.assign(g.size(), Vec3::Zero());
  a.features = MatX::Zero(g.features.rows(), g.features.cols());
  a.rotations.assign(g.size(), Vec4::Zero());
  a.log_scales.assign(g.size(), Vec3::Zero());
  a.opacity_logits.assign(g.size(), 0.0);
  for (std::size_t k = 0; k < a.fields.size(); ++k) a.fields[k].assign(bank.fields()[k].params().size(), 0.0);
  return a;
}

void AvatarGradients::add(const AvatarGradients& o) {
  for (std::size_t i = 0; i < positions.size(); ++i) {
    positions[i] += o.positions[i];
    rotations[i] += o.rotations[i];
    log_scales[i] += o.log_scales[i];
    opacity_logits[i] += o.opacity_logits[i];
  }
  features += o.features;
  for (std::size_t k = 0; k < fields.size(); ++k)
    for (std::size_t p = 0; p < fields[k].size(); ++p) fields[k][p] += o.fields[k][p];
}

void AvatarGradients::scale(double s) {
  for (auto& v : positions) v *= s;
  for (auto& v : rotations) v *= s;
  for (auto& v : log_scales) v *= s;
  for (auto& v : opacity_logits) v *= s;
  features *= s;
  for (auto& f : fields)
    for (auto& v : f) v *= s;
}

AvatarGradients assemble_avatar_backward(const GaussianSet& g, const ResidualFieldBank& bank,
                                         const AvatarTape& tape, const WorldGradients& up) {
  const std::size_t n = g.size();
  if (up.positions.size() != n || tape.base.size() != n)
    throw Error(ErrorCode::LengthMismatch, "backward inputs do not match the taped evaluation");
  AvatarGradients out = AvatarGradients::zeros_like(g, bank);
  const Drivers drv{tape.expression, tape.pose};
  const Mat3 r_t = tape.transform.matrix();
  const Mat4 l_t = quat_left_matrix(tape.transform.rotation);
  const bool identity_t = tape.transform.rotation == identity_quat() && tape.transform.translation.isZero(0);
  std::vector<double> scratch;
  std::vector<double> input_grad;

  std::vector<Vec3> d_adjusted(n);
  for (std::size_t i = 0; i < n; ++i) {
    d_adjusted[i] = r_t.transpose() * up.positions[i];

    // World rotation = normalize(L(q_T) q_local).
    const Vec4 world_raw = l_t * tape.rot_local[i];
    const Vec4 d_local =
        identity_t ? Vec4(up.rotations[i]) : Vec4(l_t.transpose() * normalize_vjp(world_raw, up.rotations[i]));
    const Vec4 d_raw = tape.rot_passthrough[i] ? d_local : normalize_vjp(tape.rot_raw[i], d_local);
    out.rotations[i] += d_raw;
    field_backward<4>(bank, Attribute::Rot, g, i, drv, d_raw, out, {out.rotations[i].data(), 4}, scratch);

    const Vec3 d_ls = up.log_scales[i];
    out.log_scales[i] += d_ls;
    field_backward<3>(bank, Attribute::Scale, g, i, drv, d_ls, out, {out.log_scales[i].data(), 3}, scratch);

    const Eigen::Matrix<double, 1, 1> d_a(up.opacity_logits[i]);
    out.opacity_logits[i] += d_a[0];
    field_backward<1>(bank, Attribute::Alpha, g, i, drv, d_a, out, {&out.opacity_logits[i], 1}, scratch);

    const Vec3& c = tape.colors[i];
    const Vec3 d_z = up.colors[i].cwiseProduct(c.cwiseProduct(Vec3::Ones() - c));
    input_grad.assign(static_cast<std::size_t>(g.features.cols()), 0.0);
    field_backward<3>(bank, Attribute::Color, g, i, drv, d_z, out, input_grad, scratch);
    for (Eigen::Index k = 0; k < g.features.cols(); ++k) out.features(static_cast<Eigen::Index>(i), k) += input_grad[k];

    // Base position X0 + e + p.
    out.positions[i] += d_adjusted[i];
    field_backward<3>(bank, Attribute::Def, g, i, drv, d_adjusted[i], out, {out.positions[i].data(), 3}, scratch);
  }

  if (!tape.controls.empty()) {
    const auto pg = control::propagate_vjp(g.positions, tape.controls, tape.control_disp, tape.memberships, tape.ctl,
                                           d_adjusted);
    const auto& exp_def = bank.field(Attribute::Def, Driver::Expression);
    auto& field_grad = out.fields[ResidualFieldBank::index(Attribute::Def, Driver::Expression)];
    for (std::size_t i = 0; i < n; ++i) out.positions[i] += pg.canonical[i];
    for (std::size_t c = 0; c < tape.controls.size(); ++c) {
      const std::size_t i = tape.controls[c];
      const std::span<const double> upc(pg.control_displacements[c].data(), 3);
      exp_def.accumulate_param_grad(i, {g.positions[i].data(), 3}, drv.of(Driver::Expression), upc, field_grad);
      exp_def.accumulate_input_grad(i, {g.positions[i].data(), 3}, drv.of(Driver::Expression), upc,
                                    {out.positions[i].data(), 3});
    }
  }
  return out;
}

}  // namespace gsavatar::core
