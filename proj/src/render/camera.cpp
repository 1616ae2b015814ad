#include "gsavatar/render/camera.hpp"

#include "gsavatar/common/error.hpp"

namespace gsavatar::render {

void Camera::validate() const {
  if (!(fx > 0) || !(fy > 0)) throw Error(ErrorCode::InvalidArgument, "camera focal lengths must be positive");
  if (width <= 0 || height <= 0 || width > 4096 || height > 4096)
    throw Error(ErrorCode::InvalidArgument, "camera size must lie in (0, 4096]");
  if (!std::isfinite(cx) || !std::isfinite(cy)) throw Error(ErrorCode::NonFinite, "camera principal point");
  core::validate(world_to_camera);
}

Camera Camera::look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double focal, int width, int height) {
  const Vec3 z = (target - eye).normalized();
  const Vec3 y = -(up - up.dot(z) * z).normalized();
  const Vec3 x = y.cross(z);
  Mat3 r;
  r.row(0) = x;
  r.row(1) = y;
  r.row(2) = z;
  Eigen::Quaterniond q(r);
  q.normalize();
  Camera cam;
  cam.fx = cam.fy = focal;
  cam.cx = (width - 1) / 2.0;
  cam.cy = (height - 1) / 2.0;
  cam.width = width;
  cam.height = height;
  cam.world_to_camera.rotation = Vec4(q.w(), q.x(), q.y(), q.z());
  cam.world_to_camera.translation = -(cam.world_to_camera.matrix() * eye);
  return cam;
}

Frame Frame::filled(int width, int height, const Vec3& color, double alpha) {
  Frame f;
  f.width = width;
  f.height = height;
  f.rgb.resize(f.pixel_count() * 3);
  for (std::size_t p = 0; p < f.pixel_count(); ++p)
    for (int c = 0; c < 3; ++c) f.rgb[p * 3 + c] = color[c];
  f.alpha.assign(f.pixel_count(), alpha);
  return f;
}

void Frame::validate() const {
  if (rgb.size() != pixel_count() * 3 || alpha.size() != pixel_count())
    throw Error(ErrorCode::LengthMismatch, "length mismatch: frame buffers");
  for (double v : rgb)
    if (!(v >= 0.0 && v <= 1.0)) throw Error(ErrorCode::NonFinite, "frame rgb outside [0,1]");
  for (double v : alpha)
    if (!(v >= 0.0 && v <= 1.0)) throw Error(ErrorCode::NonFinite, "frame alpha outside [0,1]");
}

FrameGradient FrameGradient::zeros(const Frame& like) {
  return {std::vector<double>(like.rgb.size(), 0.0), std::vector<double>(like.alpha.size(), 0.0)};
}

std::optional<Projection> project_gaussian(const Vec3& mean, const Vec4& rotation, const Vec3& log_scale,
                                           const Camera& cam) {
  Projection p;
  p.view = cam.world_to_camera.matrix();
  p.cam = p.view * mean + cam.world_to_camera.translation;
  if (!(p.cam.z() > kNearPlane)) return std::nullopt;
  const double tx = p.cam.x(), ty = p.cam.y(), tz = p.cam.z();
  p.depth = tz;
  p.mean = Vec2(cam.fx * tx / tz + cam.cx, cam.fy * ty / tz + cam.cy);
  p.jac << cam.fx / tz, 0.0, -cam.fx * tx / (tz * tz), 0.0, cam.fy / tz, -cam.fy * ty / (tz * tz);
  p.rot = quat_to_matrix(rotation.normalized());
  p.scale = log_scale.array().exp();
  const Mat3 rs = p.rot * p.scale.asDiagonal();
  p.sigma3 = rs * rs.transpose();
  const Eigen::Matrix<double, 2, 3> jw = p.jac * p.view;
  p.cov = jw * p.sigma3 * jw.transpose() + kAntiAlias * Mat2::Identity();
  return p;
}

}  // namespace gsavatar::render
