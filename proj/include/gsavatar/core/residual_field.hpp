#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "gsavatar/common/math.hpp"
#include "gsavatar/core/gaussian_set.hpp"

namespace gsavatar::core {

/// Attribute updated by a residual field.
enum class Attribute { Def = 0, Color = 1, Rot = 2, Scale = 3, Alpha = 4 };
/// Which driver vector feeds the field.
enum class Driver { Expression = 0, Pose = 1 };

inline constexpr std::array<Attribute, 5> kAttributes{Attribute::Def, Attribute::Color, Attribute::Rot,
                                                      Attribute::Scale, Attribute::Alpha};
inline constexpr std::array<Driver, 2> kDrivers{Driver::Expression, Driver::Pose};

const char* to_string(Attribute a);
const char* to_string(Driver d);

/// Output dimension of the residual for an attribute.
int attribute_output_dim(Attribute a);
/// Per-Gaussian input the field reads (X0, F0, Q0, S0 or A0).
int attribute_input_dim(Attribute a, int feature_dim);

enum class FieldKind { LinearBlend, RadialBasis };

/// residual_i = W_i * driver (+ P * input_i). W_i is a per-Gaussian
/// output x driver basis; the optional projection P is shared.
struct LinearBlendField {
  std::size_t count = 0;
  int input_dim = 0;
  int output_dim = 0;
  int driver_dim = 0;
  bool projection = false;
  std::vector<double> params;
};

/// residual(x) = sum_k phi_k(x) * V_k * driver (+ P * x), with
/// phi_k(x) = exp(-|x - c_k|^2 / (2 h^2)) around fixed centers.
struct RadialBasisField {
  MatX centers;  // K x input_dim
  double bandwidth = 1.0;
  int input_dim = 0;
  int output_dim = 0;
  int driver_dim = 0;
  bool projection = false;
  std::vector<double> params;
};

class ResidualField {
 public:
  ResidualField() = default;

  static ResidualField linear_blend(std::size_t count, int input_dim, int output_dim, int driver_dim,
                                    bool projection = false);
  static ResidualField radial_basis(MatX centers, double bandwidth, int output_dim, int driver_dim,
                                    bool projection = false);

  FieldKind kind() const;
  int input_dim() const;
  int output_dim() const;
  int driver_dim() const;
  bool has_projection() const;

  std::vector<double>& params();
  const std::vector<double>& params() const;

  /// Per-instance parameter blocks (LinearBlend) come first in params();
  /// shared parameters follow. RadialBasis has no per-instance block.
  bool per_instance() const { return kind() == FieldKind::LinearBlend; }
  std::size_t instance_count() const;
  std::size_t instance_block() const;

  void evaluate(std::size_t instance, std::span<const double> input, std::span<const double> driver,
                std::span<double> out) const;
  VecX evaluate(std::size_t instance, std::span<const double> input, std::span<const double> driver) const;

  /// grad += (d residual / d params)^T upstream
  void accumulate_param_grad(std::size_t instance, std::span<const double> input,
                             std::span<const double> driver, std::span<const double> upstream,
                             std::span<double> grad) const;
  /// grad_input += (d residual / d input)^T upstream
  void accumulate_input_grad(std::size_t instance, std::span<const double> input,
                             std::span<const double> driver, std::span<const double> upstream,
                             std::span<double> grad_input) const;
  /// output_dim x driver_dim
  MatX driver_jacobian(std::size_t instance, std::span<const double> input,
                       std::span<const double> driver) const;

  /// Appends one copy of each parent's per-instance block (no-op for RBF).
  void duplicate_instances(std::span<const std::size_t> parents);
  /// Reorders per-instance blocks so new instance k is old instance order[k].
  void permute_instances(std::span<const std::size_t> order);

  void set_zero();
  bool all_zero() const;

  const std::variant<LinearBlendField, RadialBasisField>& impl() const { return impl_; }

 private:
  explicit ResidualField(std::variant<LinearBlendField, RadialBasisField> impl) : impl_(std::move(impl)) {}

  std::variant<LinearBlendField, RadialBasisField> impl_;
};

/// The ten residual predictors: {def, color, rot, scale, alpha} x {expression, pose}.
class ResidualFieldBank {
 public:
  ResidualFieldBank() = default;

  /// Zero-initialised LinearBlend bank for n Gaussians. When
  /// color_projection is set the expression color field carries a shared
  /// feature-to-color projection, so colors depend on F0.
  static ResidualFieldBank linear_blend(std::size_t n, int feature_dim, int expression_dim,
                                        bool color_projection = true);

  /// Zero-initialised RBF bank; centers are picked from the set's own
  /// per-attribute inputs with a fixed stride.
  static ResidualFieldBank radial_basis(const GaussianSet& g, int expression_dim, std::size_t centers,
                                        bool color_projection = true);

  ResidualField& field(Attribute a, Driver d) { return fields_[index(a, d)]; }
  const ResidualField& field(Attribute a, Driver d) const { return fields_[index(a, d)]; }

  std::array<ResidualField, 10>& fields() { return fields_; }
  const std::array<ResidualField, 10>& fields() const { return fields_; }

  int expression_dim() const { return field(Attribute::Def, Driver::Expression).driver_dim(); }

  /// Throws on any dimension disagreement with the set or driver sizes.
  void check_compatible(const GaussianSet& g, int expression_dim) const;

  void duplicate_instances(std::span<const std::size_t> parents);
  void permute_instances(std::span<const std::size_t> order);
  void set_zero();

  static std::size_t index(Attribute a, Driver d) {
    return static_cast<std::size_t>(a) * 2 + static_cast<std::size_t>(d);
  }
  static std::string field_name(Attribute a, Driver d);

 private:
  std::array<ResidualField, 10> fields_;
};

/// Per-Gaussian input for attribute a (X0_i, F0_i, Q0_i, S0_i or A0_i).
std::span<const double> attribute_input(const GaussianSet& g, Attribute a, std::size_t i,
                                        std::vector<double>& scratch);

}  // namespace gsavatar::core
