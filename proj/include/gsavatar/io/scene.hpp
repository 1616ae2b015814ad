#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gsavatar/control/control_config.hpp"
#include "gsavatar/geometry/mesh.hpp"
#include "gsavatar/geometry/sdf_grid.hpp"
#include "gsavatar/render/camera.hpp"
#include "gsavatar/train/stage1.hpp"
#include "gsavatar/train/stage2.hpp"

namespace gsavatar::io {

enum class SceneShape { Sphere, BlendshapeHead };

const char* to_string(SceneShape s);
SceneShape scene_shape_from_string(const std::string& s);

struct SceneSpec {
  SceneShape shape = SceneShape::Sphere;
  std::size_t gaussians = 200;
  int views = 4;
  int frames = 4;
  std::uint64_t seed = 0;
  int width = 64;
  int height = 64;
  int expression_dim = 8;
  int feature_dim = 16;
  int eta_dim = 8;
  int grid_resolution = 32;
  /// Canonical offset of the head center.
  Vec3 center = Vec3::Zero();
  std::size_t landmarks = 16;
  Vec3 background = Vec3::Zero();

  void validate() const;
};

/// Ground truth kept alongside the bundle for oracle comparisons.
struct SceneTruth {
  train::AvatarState avatar;
  geometry::SdfGrid grid;
};

/// Cameras, targets, masks and landmarks per frame (inside `frames`), the
/// control settings the targets were rendered with, and the prior mesh.
struct SceneBundle {
  SceneSpec spec;
  control::ControlConfig control;
  std::vector<train::TrainFrame> frames;
  geometry::TriangleMesh prior;
  std::optional<SceneTruth> truth;
};

/// Unit-cube head radii used for each shape.
Vec3 shape_radii(SceneShape s);

/// Approximate signed distance to the shape surface around `center`.
double shape_sdf(SceneShape s, const Vec3& center, const Vec3& x);

/// `views` cameras on a ring at distance 3 around the origin, facing +z
/// side first, focal length 2 * width.
std::vector<render::Camera> camera_ring(int views, int width, int height);

/// Ground-truth grid whose leading eta channels hold the color logits.
geometry::SdfGrid shape_grid(const SceneSpec& spec);

SceneBundle make_synthetic_scene(const SceneSpec& spec, const control::ControlConfig& ctl = {});

/// Directory layout:
///   scene.json, track.csv, prior.obj,
///   targets/fFFF_vVV.npy (+ .png preview), masks/fFFF_vVV.npy (+ .png),
///   ground_truth/{avatar.json, gaussians.gsav, grid.json} when known.
void save_scene(const SceneBundle& b, const std::filesystem::path& dir);
SceneBundle load_scene(const std::filesystem::path& dir);

}  // namespace gsavatar::io
