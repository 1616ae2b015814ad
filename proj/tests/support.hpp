#pragma once

#include <unistd.h>

#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "gsavatar/common/math.hpp"
#include "gsavatar/core/gaussian_set.hpp"
#include "gsavatar/core/residual_field.hpp"

namespace testing {

using namespace gsavatar;

// Hand-rolled generators on top of a seeded 64-bit engine.
struct Gen {
  std::mt19937_64 rng;
  explicit Gen(std::uint64_t seed) : rng(seed) {}

  double uniform(double lo = 0.0, double hi = 1.0) {
    return lo + (hi - lo) * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
  }
  int integer(int lo, int hi) {  // inclusive
    return lo + static_cast<int>(rng() % static_cast<std::uint64_t>(hi - lo + 1));
  }
  double normal() {
    const double u1 = uniform(1e-300, 1.0), u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }
  Vec3 vec3(double a = 1.0) { return Vec3(uniform(-a, a), uniform(-a, a), uniform(-a, a)); }
  Vec3 unit3() {
    Vec3 v(normal(), normal(), normal());
    return v.normalized();
  }
  Vec4 quat() {
    Vec4 q(normal(), normal(), normal(), normal());
    return q.normalized();
  }
  /// Rotation by at most max_angle radians about a random axis.
  Vec4 rotation_within(double max_angle) { return axis_angle_to_quat(unit3() * uniform(0.0, max_angle)); }

  std::vector<double> values(std::size_t n, double a = 1.0) {
    std::vector<double> v(n);
    for (auto& x : v) x = uniform(-a, a);
    return v;
  }

  core::GaussianSet gaussians(std::size_t n, int feature_dim, double extent = 0.5) {
    auto g = core::make_gaussian_set(n, feature_dim);
    for (std::size_t i = 0; i < n; ++i) {
      g.positions[i] = vec3(extent);
      g.rotations[i] = quat();
      g.log_scales[i] = vec3(0.3) + Vec3::Constant(-2.5);
      g.opacity_logits[i] = uniform(-1.0, 2.0);
      for (int k = 0; k < feature_dim; ++k) g.features(static_cast<Eigen::Index>(i), k) = uniform(-1, 1);
    }
    return g;
  }

  void fill(core::ResidualField& f, double a) {
    for (auto& p : f.params()) p = uniform(-a, a);
  }
  void fill(core::ResidualFieldBank& bank, double a) {
    for (auto& f : bank.fields()) fill(f, a);
  }
};

/// Central difference of f around x[k].
inline double central_difference(const std::function<double()>& f, double& x, double h) {
  const double x0 = x;
  x = x0 + h;
  const double fp = f();
  x = x0 - h;
  const double fm = f();
  x = x0;
  return (fp - fm) / (2.0 * h);
}

/// |a - b| / max(|a|, |b|) over whole vectors (0 when both vanish).
inline double relative_error(std::span<const double> a, std::span<const double> b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double scale = std::sqrt(std::max(na, nb));
  return scale == 0.0 ? std::sqrt(diff) : std::sqrt(diff) / scale;
}

/// Finite-difference gradient of f over every entry of params.
inline std::vector<double> numeric_gradient(const std::function<double()>& f, std::span<double> params,
                                            double h) {
  std::vector<double> out(params.size());
  for (std::size_t k = 0; k < params.size(); ++k) out[k] = central_difference(f, params[k], h);
  return out;
}

inline std::span<double> as_span(std::vector<Vec3>& v) { return {reinterpret_cast<double*>(v.data()), v.size() * 3}; }
inline std::span<const double> as_span(const std::vector<Vec3>& v) {
  return {reinterpret_cast<const double*>(v.data()), v.size() * 3};
}

// Lopsided egg with a bump; point-to-point ICP has no spurious basins on it within 30 degrees.
inline std::vector<Vec3> asymmetric_cloud(std::size_t n, std::uint64_t seed = 99) {
  Gen gen(seed);
  std::vector<Vec3> pts(n);
  const Vec3 bump_dir = Vec3(0.3, -0.2, 0.93).normalized();
  for (auto& p : pts) {
    const Vec3 d = gen.unit3();
    const double bump = 0.3 * std::exp(-(d - bump_dir).squaredNorm() / 0.1);
    p = Vec3(0.25 * d.x(), 0.55 * d.y() * (1.0 + 0.3 * d.x()), 0.9 * d.z()) * (1.0 + bump);
  }
  return pts;
}

/// Fresh directory under the system temp dir, removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path = std::filesystem::temp_directory_path() /
           ("gsavatar_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  std::filesystem::path operator/(const std::string& name) const { return path / name; }
};

inline std::string file_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace testing
