#pragma once

#include <optional>
#include <vector>

#include "gsavatar/common/math.hpp"
#include "gsavatar/core/params.hpp"

namespace gsavatar::render {

/// Pinhole camera, OpenCV axes (x right, y down, looking along +z).
/// Pixel (x, y) has its center at integer coordinates (x, y).
struct Camera {
  double fx = 100, fy = 100, cx = 32, cy = 32;
  core::RigidTransform world_to_camera;
  int width = 64, height = 64;

  void validate() const;

  /// Camera at `eye` looking at `target`; `up` is the world up direction.
  static Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double focal, int width,
                        int height);
};

struct Frame {
  int width = 0, height = 0;
  std::vector<double> rgb;    // (y * width + x) * 3 + c
  std::vector<double> alpha;  // y * width + x

  static Frame filled(int width, int height, const Vec3& color, double alpha = 0.0);
  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * static_cast<std::size_t>(height); }
  void validate() const;
};

/// Gradient of a scalar loss with respect to every Frame channel.
struct FrameGradient {
  std::vector<double> rgb;
  std::vector<double> alpha;

  static FrameGradient zeros(const Frame& like);
};

inline constexpr double kNearPlane = 0.01;
inline constexpr double kAntiAlias = 0.3;  // px^2 added to the 2D covariance

struct Projection {
  Vec2 mean;
  Mat2 cov;
  double depth;
  Vec3 cam;   // camera-space mean
  Mat3 view;  // world-to-camera rotation
  Mat3 rot;   // Gaussian rotation (from the normalized quaternion)
  Vec3 scale;
  Mat3 sigma3;  // world covariance
  Eigen::Matrix<double, 2, 3> jac;
};

/// Projected footprint, or nullopt when the mean is not beyond the near plane.
std::optional<Projection> project_gaussian(const Vec3& mean, const Vec4& rotation, const Vec3& log_scale,
                                           const Camera& cam);

}  // namespace gsavatar::render
