#include "gsavatar/core/residual_field.hpp"

#include <algorithm>
#include <cmath>

#include "gsavatar/common/error.hpp"

namespace gsavatar::core {

const char* to_string(Attribute a) {
  switch (a) {
    case Attribute::Def: return "def";
    case Attribute::Color: return "color";
    case Attribute::Rot: return "rot";
    case Attribute::Scale: return "scale";
    case Attribute::Alpha: return "alpha";
  }
  return "?";
}

const char* to_string(Driver d) { return d == Driver::Expression ? "exp" : "pose"; }

int attribute_output_dim(Attribute a) {
  switch (a) {
    case Attribute::Def: return 3;
    case Attribute::Color: return 3;
    case Attribute::Rot: return 4;
    case Attribute::Scale: return 3;
    case Attribute::Alpha: return 1;
  }
  return 0;
}

int attribute_input_dim(Attribute a, int feature_dim) {
  switch (a) {
    case Attribute::Def: return 3;
    case Attribute::Color: return feature_dim;
    case Attribute::Rot: return 4;
    case Attribute::Scale: return 3;
    case Attribute::Alpha: return 1;
  }
  return 0;
}

namespace {

std::size_t projection_size(int output_dim, int input_dim, bool projection) {
  return projection ? static_cast<std::size_t>(output_dim) * static_cast<std::size_t>(input_dim) : 0;
}

double rbf_weight(const RadialBasisField& f, Eigen::Index k, std::span<const double> x) {
  double d2 = 0.0;
  for (int c = 0; c < f.input_dim; ++c) {
    const double d = x[c] - f.centers(k, c);
    d2 += d * d;
  }
  return std::exp(-d2 / (2.0 * f.bandwidth * f.bandwidth));
}

// Shared projection P (output x input, row-major) starting at `offset`.
void add_projection(const std::vector<double>& params, std::size_t offset, int output_dim, int input_dim,
                    std::span<const double> input, std::span<double> out) {
  for (int o = 0; o < output_dim; ++o) {
    double acc = 0.0;
    for (int k = 0; k < input_dim; ++k) acc += params[offset + o * input_dim + k] * input[k];
    out[o] += acc;
  }
}

}  // namespace

ResidualField ResidualField::linear_blend(std::size_t count, int input_dim, int output_dim, int driver_dim,
                                          bool projection) {
  LinearBlendField f;
  f.count = count;
  f.input_dim = input_dim;
  f.output_dim = output_dim;
  f.driver_dim = driver_dim;
  f.projection = projection;
  f.params.assign(count * output_dim * driver_dim + projection_size(output_dim, input_dim, projection), 0.0);
  return ResidualField(std::move(f));
}

ResidualField ResidualField::radial_basis(MatX centers, double bandwidth, int output_dim, int driver_dim,
                                          bool projection) {
  if (!(bandwidth > 0)) throw Error(ErrorCode::InvalidArgument, "rbf bandwidth must be positive");
  RadialBasisField f;
  f.input_dim = static_cast<int>(centers.cols());
  f.centers = std::move(centers);
  f.bandwidth = bandwidth;
  f.output_dim = output_dim;
  f.driver_dim = driver_dim;
  f.projection = projection;
  f.params.assign(static_cast<std::size_t>(f.centers.rows()) * output_dim * driver_dim +
                      projection_size(output_dim, f.input_dim, projection),
                  0.0);
  return ResidualField(std::move(f));
}

FieldKind ResidualField::kind() const {
  return std::holds_alternative<LinearBlendField>(impl_) ? FieldKind::LinearBlend : FieldKind::RadialBasis;
}

int ResidualField::input_dim() const {
  return std::visit([](const auto& f) { return f.input_dim; }, impl_);
}
int ResidualField::output_dim() const {
  return std::visit([](const auto& f) { return f.output_dim; }, impl_);
}
int ResidualField::driver_dim() const {
  return std::visit([](const auto& f) { return f.driver_dim; }, impl_);
}
bool ResidualField::has_projection() const {
  return std::visit([](const auto& f) { return f.projection; }, impl_);
}
std::vector<double>& ResidualField::params() {
  return std::visit([](auto& f) -> std::vector<double>& { return f.params; }, impl_);
}
const std::vector<double>& ResidualField::params() const {
  return std::visit([](const auto& f) -> const std::vector<double>& { return f.params; }, impl_);
}

std::size_t ResidualField::instance_count() const {
  if (const auto* lb = std::get_if<LinearBlendField>(&impl_)) return lb->count;
  return 0;
}

std::size_t ResidualField::instance_block() const {
  if (const auto* lb = std::get_if<LinearBlendField>(&impl_))
    return static_cast<std::size_t>(lb->output_dim) * lb->driver_dim;
  return 0;
}

void ResidualField::evaluate(std::size_t instance, std::span<const double> input, std::span<const double> driver,
                             std::span<double> out) const {
  std::fill(out.begin(), out.end(), 0.0);
  if (const auto* lb = std::get_if<LinearBlendField>(&impl_)) {
    if (instance >= lb->count) throw Error(ErrorCode::OutOfBounds, "linear blend instance out of range");
    const double* w = lb->params.data() + instance * lb->output_dim * lb->driver_dim;
    for (int o = 0; o < lb->output_dim; ++o) {
      double acc = 0.0;
      for (int d = 0; d < lb->driver_dim; ++d) acc += w[o * lb->driver_dim + d] * driver[d];
      out[o] = acc;
    }
    if (lb->projection)
      add_projection(lb->params, lb->count * lb->output_dim * lb->driver_dim, lb->output_dim, lb->input_dim,
                     input, out);
    return;
  }
  const auto& rb = std::get<RadialBasisField>(impl_);
  const std::size_t block = static_cast<std::size_t>(rb.output_dim) * rb.driver_dim;
  for (Eigen::Index k = 0; k < rb.centers.rows(); ++k) {
    const double phi = rbf_weight(rb, k, input);
    const double* v = rb.params.data() + k * block;
    for (int o = 0; o < rb.output_dim; ++o) {
      double acc = 0.0;
      for (int d = 0; d < rb.driver_dim; ++d) acc += v[o * rb.driver_dim + d] * driver[d];
      out[o] += phi * acc;
    }
  }
  if (rb.projection)
    add_projection(rb.params, static_cast<std::size_t>(rb.centers.rows()) * block, rb.output_dim, rb.input_dim,
                   input, out);
}

VecX ResidualField::evaluate(std::size_t instance, std::span<const double> input,
                             std::span<const double> driver) const {
  VecX out(output_dim());
  evaluate(instance, input, driver, std::span<double>(out.data(), static_cast<std::size_t>(out.size())));
  return out;
}

void ResidualField::accumulate_param_grad(std::size_t instance, std::span<const double> input,
                                          std::span<const double> driver, std::span<const double> upstream,
                                          std::span<double> grad) const {
  auto add_projection_grad = [&](std::size_t offset, int output_dim, int input_dim) {
    for (int o = 0; o < output_dim; ++o)
      for (int k = 0; k < input_dim; ++k) grad[offset + o * input_dim + k] += upstream[o] * input[k];
  };
  if (const auto* lb = std::get_if<LinearBlendField>(&impl_)) {
    double* w = grad.data() + instance * lb->output_dim * lb->driver_dim;
    for (int o = 0; o < lb->output_dim; ++o)
      for (int d = 0; d < lb->driver_dim; ++d) w[o * lb->driver_dim + d] += upstream[o] * driver[d];
    if (lb->projection) add_projection_grad(lb->count * lb->output_dim * lb->driver_dim, lb->output_dim, lb->input_dim);
    return;
  }
  const auto& rb = std::get<RadialBasisField>(impl_);
  const std::size_t block = static_cast<std::size_t>(rb.output_dim) * rb.driver_dim;
  for (Eigen::Index k = 0; k < rb.centers.rows(); ++k) {
    const double phi = rbf_weight(rb, k, input);
    double* v = grad.data() + k * block;
    for (int o = 0; o < rb.output_dim; ++o)
      for (int d = 0; d < rb.driver_dim; ++d) v[o * rb.driver_dim + d] += phi * upstream[o] * driver[d];
  }
  if (rb.projection)
    add_projection_grad(static_cast<std::size_t>(rb.centers.rows()) * block, rb.output_dim, rb.input_dim);
}

void ResidualField::accumulate_input_grad(std::size_t /*instance*/, std::span<const double> input,
                                          std::span<const double> driver, std::span<const double> upstream,
                                          std::span<double> grad_input) const {
  auto add_projection_grad = [&](const std::vector<double>& params, std::size_t offset, int output_dim,
                                 int input_dim) {
    for (int o = 0; o < output_dim; ++o)
      for (int k = 0; k < input_dim; ++k) grad_input[k] += params[offset + o * input_dim + k] * upstream[o];
  };
  if (const auto* lb = std::get_if<LinearBlendField>(&impl_)) {
    if (lb->projection)
      add_projection_grad(lb->params, lb->count * lb->output_dim * lb->driver_dim, lb->output_dim, lb->input_dim);
    return;
  }
  const auto& rb = std::get<RadialBasisField>(impl_);
  const std::size_t block = static_cast<std::size_t>(rb.output_dim) * rb.driver_dim;
  const double inv_h2 = 1.0 / (rb.bandwidth * rb.bandwidth);
  for (Eigen::Index k = 0; k < rb.centers.rows(); ++k) {
    const double phi = rbf_weight(rb, k, input);
    const double* v = rb.params.data() + k * block;
    double dot = 0.0;  // upstream . (V_k driver)
    for (int o = 0; o < rb.output_dim; ++o) {
      double acc = 0.0;
      for (int d = 0; d < rb.driver_dim; ++d) acc += v[o * rb.driver_dim + d] * driver[d];
      dot += upstream[o] * acc;
    }
    for (int c = 0; c < rb.input_dim; ++c) grad_input[c] += -phi * (input[c] - rb.centers(k, c)) * inv_h2 * dot;
  }
  if (rb.projection)
    add_projection_grad(rb.params, static_cast<std::size_t>(rb.centers.rows()) * block, rb.output_dim,
                        rb.input_dim);
}

MatX ResidualField::driver_jacobian(std::size_t instance, std::span<const double> input,
                                    std::span<const double> /*driver*/) const {
  if (const auto* lb = std::get_if<LinearBlendField>(&impl_)) {
    MatX j(lb->output_dim, lb->driver_dim);
    const double* w = lb->params.data() + instance * lb->output_dim * lb->driver_dim;
    for (int o = 0; o < lb->output_dim; ++o)
      for (int d = 0; d < lb->driver_dim; ++d) j(o, d) = w[o * lb->driver_dim + d];
    return j;
  }
  const auto& rb = std::get<RadialBasisField>(impl_);
  const std::size_t block = static_cast<std::size_t>(rb.output_dim) * rb.driver_dim;
  MatX j = MatX::Zero(rb.output_dim, rb.driver_dim);
  for (Eigen::Index k = 0; k < rb.centers.rows(); ++k) {
    const double phi = rbf_weight(rb, k, input);
    const double* v = rb.params.data() + k * block;
    for (int o = 0; o < rb.output_dim; ++o)
      for (int d = 0; d < rb.driver_dim; ++d) j(o, d) += phi * v[o * rb.driver_dim + d];
  }
  return j;
}

void ResidualField::duplicate_instances(std::span<const std::size_t> parents) {
  auto* lb = std::get_if<LinearBlendField>(&impl_);
  if (lb == nullptr || parents.empty()) return;
  const std::size_t block = static_cast<std::size_t>(lb->output_dim) * lb->driver_dim;
  const std::size_t instances_end = lb->count * block;
  std::vector<double> appended;
  appended.reserve(parents.size() * block);
  for (std::size_t p : parents) {
    if (p >= lb->count) throw Error(ErrorCode::OutOfBounds, "duplicate_instances parent out of range");
    appended.insert(appended.end(), lb->params.begin() + p * block, lb->params.begin() + (p + 1) * block);
  }
  lb->params.insert(lb->params.begin() + instances_end, appended.begin(), appended.end());
  lb->count += parents.size();
}

void ResidualField::permute_instances(std::span<const std::size_t> order) {
  auto* lb = std::get_if<LinearBlendField>(&impl_);
  if (lb == nullptr) return;
  if (order.size() != lb->count) throw Error(ErrorCode::LengthMismatch, "permutation size mismatch");
  const std::size_t block = static_cast<std::size_t>(lb->output_dim) * lb->driver_dim;
  std::vector<double> reordered(lb->params.size());
  for (std::size_t k = 0; k < order.size(); ++k)
    std::copy_n(lb->params.begin() + order[k] * block, block, reordered.begin() + k * block);
  std::copy(lb->params.begin() + lb->count * block, lb->params.end(), reordered.begin() + lb->count * block);
  lb->params = std::move(reordered);
}

void ResidualField::set_zero() {
  auto& p = params();
  std::fill(p.begin(), p.end(), 0.0);
}

bool ResidualField::all_zero() const {
  const auto& p = params();
  return std::all_of(p.begin(), p.end(), [](double v) { return v == 0.0; });
}

ResidualFieldBank ResidualFieldBank::linear_blend(std::size_t n, int feature_dim, int expression_dim,
                                                  bool color_projection) {
  ResidualFieldBank bank;
  for (Attribute a : kAttributes) {
    for (Driver d : kDrivers) {
      const bool proj = color_projection && a == Attribute::Color && d == Driver::Expression;
      bank.field(a, d) = ResidualField::linear_blend(n, attribute_input_dim(a, feature_dim), attribute_output_dim(a),
                                                     d == Driver::Expression ? expression_dim : kPoseDim, proj);
    }
  }
  return bank;
}

ResidualFieldBank ResidualFieldBank::radial_basis(const GaussianSet& g, int expression_dim, std::size_t centers,
                                                  bool color_projection) {
  if (g.size() == 0 || centers == 0) throw Error(ErrorCode::InvalidArgument, "rbf bank needs gaussians and centers");
  const std::size_t k = std::min(centers, g.size());
  const std::size_t stride = g.size() / k;
  ResidualFieldBank bank;
  std::vector<double> scratch;
  for (Attribute a : kAttributes) {
    const int in_dim = attribute_input_dim(a, g.feature_dim());
    MatX c(static_cast<Eigen::Index>(k), in_dim);
    for (std::size_t r = 0; r < k; ++r) {
      const auto x = attribute_input(g, a, r * stride, scratch);
      for (int col = 0; col < in_dim; ++col) c(static_cast<Eigen::Index>(r), col) = x[col];
    }
    // Bandwidth: RMS spread of the chosen centers, floored so identical inputs still work.
    const VecX mean = c.colwise().mean();
    const double spread = std::sqrt((c.rowwise() - mean.transpose()).squaredNorm() / static_cast<double>(k));
    const double h = std::max(spread, 1e-2);
    for (Driver d : kDrivers) {
      const bool proj = color_projection && a == Attribute::Color && d == Driver::Expression;
      bank.field(a, d) = ResidualField::radial_basis(c, h, attribute_output_dim(a),
                                                     d == Driver::Expression ? expression_dim : kPoseDim, proj);
    }
  }
  return bank;
}

void ResidualFieldBank::check_compatible(const GaussianSet& g, int expression_dim) const {
  for (Attribute a : kAttributes) {
    for (Driver d : kDrivers) {
      const ResidualField& f = field(a, d);
      const std::string name = field_name(a, d);
      if (f.output_dim() != attribute_output_dim(a))
        throw Error(ErrorCode::LengthMismatch, "field " + name + " has wrong output dimension");
      if (f.input_dim() != attribute_input_dim(a, g.feature_dim()))
        throw Error(ErrorCode::LengthMismatch, "field " + name + " has wrong input dimension");
      const int want = d == Driver::Expression ? expression_dim : kPoseDim;
      if (f.driver_dim() != want)
        throw Error(ErrorCode::LengthMismatch, "field " + name + " driver dimension " + std::to_string(f.driver_dim()) +
                                                   " != " + std::to_string(want));
      if (f.per_instance() && f.instance_count() != g.size())
        throw Error(ErrorCode::LengthMismatch, "field " + name + " instance count != gaussian count");
    }
  }
}

void ResidualFieldBank::duplicate_instances(std::span<const std::size_t> parents) {
  for (auto& f : fields_) f.duplicate_instances(parents);
}

void ResidualFieldBank::permute_instances(std::span<const std::size_t> order) {
  for (auto& f : fields_) f.permute_instances(order);
}

void ResidualFieldBank::set_zero() {
  for (auto& f : fields_) f.set_zero();
}

std::string ResidualFieldBank::field_name(Attribute a, Driver d) {
  return std::string(to_string(a)) + "_" + to_string(d);
}

std::span<const double> attribute_input(const GaussianSet& g, Attribute a, std::size_t i,
                                        std::vector<double>& scratch) {
  switch (a) {
    case Attribute::Def: return {g.positions[i].data(), 3};
    case Attribute::Color: {
      scratch.resize(static_cast<std::size_t>(g.features.cols()));
      for (Eigen::Index c = 0; c < g.features.cols(); ++c) scratch[c] = g.features(static_cast<Eigen::Index>(i), c);
      return {scratch.data(), scratch.size()};
    }
    case Attribute::Rot: return {g.rotations[i].data(), 4};
    case Attribute::Scale: return {g.log_scales[i].data(), 3};
    case Attribute::Alpha: return {&g.opacity_logits[i], 1};
  }
  return {};
}

}  // namespace gsavatar::core
