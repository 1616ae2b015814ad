#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "gsavatar/common/error.hpp"
#include "gsavatar/core/params.hpp"
#include "gsavatar/core/residual_field.hpp"
#include "gsavatar/geometry/icp.hpp"
#include "gsavatar/geometry/mesh.hpp"
#include "gsavatar/geometry/mesh_losses.hpp"
#include "gsavatar/geometry/sdf_grid.hpp"
#include "gsavatar/render/camera.hpp"
#include "gsavatar/train/adam.hpp"
#include "gsavatar/train/losses.hpp"
#include "gsavatar/train/trace.hpp"

namespace gsavatar::train {

struct View {
  render::Camera camera;
  render::Frame target;
  std::vector<double> mask;  // per pixel; empty means target alpha
};

/// One captured instant: expression, head transform and its views.
/// Landmarks are canonical-space targets for the deformed surface.
struct TrainFrame {
  core::ExpressionParams theta;
  core::PoseParams beta;
  core::RigidTransform transform;
  std::vector<View> views;
  std::vector<Vec3> landmarks;
};

struct Stage1Config {
  int iterations = 300;
  int batch = 4;
  int extract_every = 1;
  double lr = 1e-3;
  AdamConfig adam;
  LossWeights weights;
  bool icp = true;
  geometry::IcpConfig icp_config;
  /// Vertex splat radius as a fraction of the mean lattice spacing.
  double vertex_scale = 0.5;
  double vertex_opacity = 0.9;
  Vec3 background = Vec3::Zero();
  std::uint64_t seed = 0;
  int psnr_every = 50;

  void validate() const;
};

/// Optimizable stage-I quantities.
struct Stage1State {
  geometry::SdfGrid grid;
  /// Optional expression deformation over canonical positions (RBF kind).
  std::optional<core::ResidualField> deformation;
};

struct Stage1Gradients {
  std::vector<double> sdf;
  std::vector<double> eta;
  std::vector<double> deformation;
};

struct Stage1Evaluation {
  Stage1Terms terms;
  double total = 0.0;
  double psnr = 0.0;  // mean over the evaluated views
  Stage1Gradients grad;
};

/// Which (frame, view) pairs an evaluation uses.
struct ViewRef {
  std::size_t frame;
  std::size_t view;
};

/// Stage-I objective on the surface extracted from `mesh` (which must
/// come from state.grid) for the given views.
Stage1Evaluation stage1_loss(const Stage1State& state, const geometry::TriangleMesh& mesh,
                             const geometry::CenterScale& prior, std::span<const TrainFrame> frames,
                             std::span<const ViewRef> views, const Stage1Config& cfg);

struct Stage1Result {
  Stage1State state;
  geometry::TriangleMesh mesh;
  geometry::TriangleMesh prior;  // after the optional ICP pre-alignment
  FitTrace trace;
};

/// Raised when the objective turns non-finite; carries the trace so far.
class FitDivergence : public Error {
 public:
  FitDivergence(const std::string& what, FitTrace trace)
      : Error(ErrorCode::Divergence, what), trace_(std::move(trace)) {}
  const FitTrace& trace() const { return trace_; }

 private:
  FitTrace trace_;
};

Stage1Result fit_stage1(Stage1State state, const geometry::TriangleMesh& prior, std::span<const TrainFrame> frames,
                        const Stage1Config& cfg);

/// Stage bridge: splats at the mesh vertices, eta seeding the leading
/// feature channels.
core::GaussianSet gaussians_from_mesh(const geometry::SdfGrid& grid, const geometry::TriangleMesh& mesh,
                                      int feature_dim, double log_scale, double opacity_logit);

/// The splat rendering of an extracted surface that stage I optimizes.
render::Frame render_surface(const Stage1State& state, const geometry::TriangleMesh& mesh, const TrainFrame& frame,
                             const render::Camera& camera, const Stage1Config& cfg);

/// Vertex splat log-scale used by stage I for this grid.
double vertex_log_scale(const geometry::SdfGrid& grid, const Stage1Config& cfg);

}  // namespace gsavatar::train
