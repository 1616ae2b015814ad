#include "gsavatar/train/stage1.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "gsavatar/geometry/marching_tets.hpp"
#include "gsavatar/render/rasterizer.hpp"
#include "gsavatar/render/silhouette.hpp"
#include "gsavatar/train/metrics.hpp"

namespace gsavatar::train {

void Stage1Config::validate() const {
  if (iterations < 0 || batch < 1 || extract_every < 1)
    throw Error(ErrorCode::InvalidArgument, "stage1 iterations >= 0, batch >= 1, extract_every >= 1");
  if (!(lr >= 0)) throw Error(ErrorCode::InvalidArgument, "stage1 learning rate must be non-negative");
  if (!(vertex_scale > 0) || !(vertex_opacity > 0 && vertex_opacity < 1))
    throw Error(ErrorCode::InvalidArgument, "stage1 vertex splat scale/opacity out of range");
  weights.validate();
}

double vertex_log_scale(const geometry::SdfGrid& grid, const Stage1Config& cfg) {
  return std::log(cfg.vertex_scale * grid.spacing().mean());
}

namespace {

int eta_color_channels(const geometry::SdfGrid& grid) { return std::min(3, grid.feature_dim); }

std::vector<Vec3> vertex_colors(const geometry::SdfGrid& grid, const std::vector<double>& feats, std::size_t m) {
  const auto d_eta = static_cast<std::size_t>(grid.feature_dim);
  const int color_ch = eta_color_channels(grid);
  std::vector<Vec3> colors(m);
  for (std::size_t v = 0; v < m; ++v)
    for (int c = 0; c < 3; ++c) colors[v][c] = c < color_ch ? sigmoid(feats[v * d_eta + c]) : 0.5;
  return colors;
}

std::vector<Vec3> deformation_residuals(const Stage1State& state, const geometry::TriangleMesh& mesh,
                                        const core::ExpressionParams& theta) {
  std::vector<Vec3> out(mesh.vertices.size(), Vec3::Zero());
  if (!state.deformation) return out;
  const auto& c = theta.coefficients;
  for (std::size_t v = 0; v < out.size(); ++v)
    state.deformation->evaluate(0, {mesh.vertices[v].data(), 3}, {c.data(), static_cast<std::size_t>(c.size())},
                                {out[v].data(), 3});
  return out;
}

core::WorldGaussians splats(const geometry::SdfGrid& grid, const geometry::TriangleMesh& mesh,
                            const std::vector<Vec3>& residuals, const std::vector<Vec3>& colors,
                            const core::RigidTransform& transform, const Stage1Config& cfg) {
  const std::size_t m = mesh.vertices.size();
  const Mat3 rot = transform.matrix();
  core::WorldGaussians wg;
  wg.positions.resize(m);
  for (std::size_t v = 0; v < m; ++v) wg.positions[v] = rot * (mesh.vertices[v] + residuals[v]) + transform.translation;
  wg.colors = colors;
  wg.rotations.assign(m, identity_quat());
  wg.log_scales.assign(m, Vec3::Constant(vertex_log_scale(grid, cfg)));
  wg.opacity_logits.assign(m, logit(cfg.vertex_opacity));
  return wg;
}

}  // namespace

render::Frame render_surface(const Stage1State& state, const geometry::TriangleMesh& mesh, const TrainFrame& frame,
                             const render::Camera& camera, const Stage1Config& cfg) {
  const auto feats = geometry::vertex_features(state.grid, mesh);
  const auto colors = vertex_colors(state.grid, feats, mesh.vertices.size());
  const auto res = deformation_residuals(state, mesh, frame.theta);
  return render::rasterize(splats(state.grid, mesh, res, colors, frame.transform, cfg), camera, cfg.background);
}

Stage1Evaluation stage1_loss(const Stage1State& state, const geometry::TriangleMesh& mesh,
                             const geometry::CenterScale& prior, std::span<const TrainFrame> frames,
                             std::span<const ViewRef> views, const Stage1Config& cfg) {
  const auto& grid = state.grid;
  const LossWeights& w = cfg.weights;
  if (mesh.empty()) throw Error(ErrorCode::DegenerateConfiguration, "extracted surface is empty");
  const std::size_t m = mesh.vertices.size();
  const auto d_eta = static_cast<std::size_t>(grid.feature_dim);
  const int color_ch = eta_color_channels(grid);
  const auto feats = geometry::vertex_features(grid, mesh);

  Stage1Evaluation ev;
  std::vector<Vec3> g_vert(m, Vec3::Zero());
  std::vector<double> g_feat(m * d_eta, 0.0);
  std::vector<double> g_field;
  if (state.deformation) g_field.assign(state.deformation->params().size(), 0.0);

  const auto colors = vertex_colors(grid, feats, m);

  // Deformed vertices and offset loss per distinct frame in the batch.
  std::vector<std::size_t> frame_ids;
  for (const auto& r : views)
    if (std::find(frame_ids.begin(), frame_ids.end(), r.frame) == frame_ids.end()) frame_ids.push_back(r.frame);
  std::vector<std::vector<Vec3>> residuals(frames.size());
  std::vector<std::vector<Vec3>> g_pos(frames.size());
  for (auto f : frame_ids) {
    residuals[f] = deformation_residuals(state, mesh, frames[f].theta);
    g_pos[f].assign(m, Vec3::Zero());
  }
  const double inv_frames = 1.0 / static_cast<double>(frame_ids.size());
  if (state.deformation)
    for (auto f : frame_ids) {
      const auto off = offset_loss(residuals[f]);
      ev.terms.offset += off.loss * inv_frames;
      for (std::size_t v = 0; v < m; ++v) g_pos[f][v] += (w.offset * inv_frames) * off.grad[v];
    }

  // Photometric and silhouette terms, averaged over the views.
  const double inv_views = 1.0 / static_cast<double>(views.size());
  double psnr_sum = 0.0;
  for (const auto& r : views) {
    const TrainFrame& fr = frames[r.frame];
    const View& view = fr.views[r.view];
    const Mat3 rot = fr.transform.matrix();
    const auto wg = splats(grid, mesh, residuals[r.frame], colors, fr.transform, cfg);
    const auto frame = render::rasterize(wg, view.camera, cfg.background);
    const auto rgb = rgb_loss(frame, view.target);
    const auto& mask = view.mask.empty() ? view.target.alpha : view.mask;
    const auto sil = render::silhouette_loss(frame.alpha, mask);
    ev.terms.rgb += rgb.loss * inv_views;
    ev.terms.sil += sil.loss * inv_views;
    psnr_sum += psnr(frame, view.target);

    render::FrameGradient up;
    up.rgb.resize(rgb.grad.size());
    up.alpha.resize(sil.grad.size());
    for (std::size_t k = 0; k < up.rgb.size(); ++k) up.rgb[k] = w.rgb * inv_views * rgb.grad[k];
    for (std::size_t k = 0; k < up.alpha.size(); ++k) up.alpha[k] = w.sil * inv_views * sil.grad[k];
    const auto g = render::rasterize_backward(wg, view.camera, cfg.background, up);
    for (std::size_t v = 0; v < m; ++v) {
      g_pos[r.frame][v] += rot.transpose() * g.positions[v];
      for (int c = 0; c < color_ch; ++c) {
        const double s = colors[v][c];
        g_feat[v * d_eta + c] += g.colors[v][c] * s * (1.0 - s);
      }
    }
  }
  ev.psnr = psnr_sum * inv_views;

  // Landmarks: each target pairs with its nearest deformed vertex.
  std::size_t lmk_frames = 0;
  for (auto f : frame_ids)
    if (!frames[f].landmarks.empty()) ++lmk_frames;
  for (auto f : frame_ids) {
    const auto& targets = frames[f].landmarks;
    if (targets.empty()) continue;
    std::vector<Vec3> pred(targets.size());
    std::vector<std::size_t> idx(targets.size());
    for (std::size_t k = 0; k < targets.size(); ++k) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t v = 0; v < m; ++v) {
        const double d = (mesh.vertices[v] + residuals[f][v] - targets[k]).squaredNorm();
        if (d < best) {
          best = d;
          idx[k] = v;
        }
      }
      pred[k] = mesh.vertices[idx[k]] + residuals[f][idx[k]];
    }
    const auto l = geometry::landmark_loss(pred, targets);
    const double share = 1.0 / static_cast<double>(lmk_frames);
    ev.terms.lmk += l.loss * share;
    for (std::size_t k = 0; k < targets.size(); ++k) g_pos[f][idx[k]] += (w.lmk * share) * l.grad[k];
  }

  // Deformed-position gradients flow to canonical vertices and the field.
  for (auto f : frame_ids) {
    const auto& theta = frames[f].theta.coefficients;
    const std::span<const double> drv{theta.data(), static_cast<std::size_t>(theta.size())};
    for (std::size_t v = 0; v < m; ++v) {
      g_vert[v] += g_pos[f][v];
      if (state.deformation) {
        const std::span<const double> in{mesh.vertices[v].data(), 3};
        const std::span<const double> up{g_pos[f][v].data(), 3};
        state.deformation->accumulate_param_grad(0, in, drv, up, g_field);
        state.deformation->accumulate_input_grad(0, in, drv, up, {g_vert[v].data(), 3});
      }
    }
  }

  if (w.lap > 0) {
    const auto lap = geometry::laplacian_loss(mesh);
    ev.terms.lap = lap.loss;
    for (std::size_t v = 0; v < m; ++v) g_vert[v] += w.lap * lap.grad[v];
  }
  {
    const auto al = geometry::mesh_alignment_loss(prior, mesh.vertices);
    ev.terms.mesh = al.loss;
    if (w.mesh > 0)
      for (std::size_t v = 0; v < m; ++v) g_vert[v] += w.mesh * al.grad[v];
  }

  ev.total = ev.terms.total(w);
  ev.grad.deformation = std::move(g_field);
  geometry::extract_surface_backward(grid, mesh, g_vert, g_feat, ev.grad.sdf, ev.grad.eta);
  return ev;
}

namespace {

std::vector<ViewRef> pick_views(std::span<const TrainFrame> frames, int batch, std::mt19937_64& rng) {
  std::vector<ViewRef> all;
  for (std::size_t f = 0; f < frames.size(); ++f)
    for (std::size_t v = 0; v < frames[f].views.size(); ++v) all.push_back({f, v});
  if (all.size() <= static_cast<std::size_t>(batch)) return all;
  // Partial Fisher-Yates on raw engine output.
  for (std::size_t k = 0; k < static_cast<std::size_t>(batch); ++k) {
    const std::size_t j = k + static_cast<std::size_t>(rng() % (all.size() - k));
    std::swap(all[k], all[j]);
  }
  all.resize(static_cast<std::size_t>(batch));
  return all;
}

/// Moves cached vertices along their lattice edges; false if any edge lost
/// its sign change (topology must be re-extracted).
bool refresh_vertices(const geometry::SdfGrid& grid, geometry::TriangleMesh& mesh) {
  for (auto& c : mesh.provenance) {
    const double sa = grid.sdf[c.inside], sb = grid.sdf[c.outside];
    if (!(sa < 0 && sb >= 0)) return false;
  }
  for (std::size_t v = 0; v < mesh.vertices.size(); ++v) {
    auto& c = mesh.provenance[v];
    const double sa = grid.sdf[c.inside], sb = grid.sdf[c.outside];
    c.t = sa / (sa - sb);
    const Vec3 pa = grid.vertex_position(c.inside), pb = grid.vertex_position(c.outside);
    mesh.vertices[v] = pa + c.t * (pb - pa);
  }
  return true;
}

}  // namespace

Stage1Result fit_stage1(Stage1State state, const geometry::TriangleMesh& prior, std::span<const TrainFrame> frames,
                        const Stage1Config& cfg) {
  cfg.validate();
  state.grid.validate();
  if (prior.empty()) throw Error(ErrorCode::InvalidArgument, "prior mesh is empty");
  const auto start = std::chrono::steady_clock::now();
  Stage1Result res;
  res.prior = prior;
  geometry::TriangleMesh mesh = geometry::extract_surface(state.grid);
  if (cfg.iterations == 0) {
    res.state = std::move(state);
    res.mesh = std::move(mesh);
    return res;
  }
  if (frames.empty()) throw Error(ErrorCode::InvalidArgument, "stage1 needs at least one frame");
  if (mesh.empty()) throw Error(ErrorCode::DegenerateConfiguration, "initial surface is empty");
  if (cfg.icp) {
    const auto icp = geometry::icp_align(prior, mesh, cfg.icp_config);
    res.prior = geometry::transformed(prior, icp.transform.matrix(), icp.transform.translation);
  }
  const auto prior_cs = geometry::mesh_center_scale(res.prior);

  std::mt19937_64 rng(cfg.seed);
  AdamState s_sdf, s_eta, s_field;
  for (int it = 0; it < cfg.iterations; ++it) {
    if (it > 0 && (it % cfg.extract_every == 0 || !refresh_vertices(state.grid, mesh)))
      mesh = geometry::extract_surface(state.grid);
    if (mesh.empty()) throw FitDivergence("surface vanished during stage I", res.trace);
    const auto views = pick_views(frames, cfg.batch, rng);
    const auto ev = stage1_loss(state, mesh, prior_cs, frames, views, cfg);

    TraceEntry e;
    e.iteration = it;
    e.loss = ev.total;
    e.components = {{"rgb", ev.terms.rgb},       {"sil", ev.terms.sil}, {"offset", ev.terms.offset},
                    {"lmk", ev.terms.lmk},       {"lap", ev.terms.lap}, {"mesh", ev.terms.mesh}};
    if (it % cfg.psnr_every == 0 || it + 1 == cfg.iterations) e.psnr = ev.psnr;
    e.gaussians = mesh.vertices.size();
    res.trace.record(std::move(e));
    if (!std::isfinite(ev.total)) throw FitDivergence("stage I loss is not finite", res.trace);

    try {
      adam_step("sdf", state.grid.sdf, ev.grad.sdf, s_sdf, cfg.lr, cfg.adam);
      adam_step("eta", state.grid.eta, ev.grad.eta, s_eta, cfg.lr, cfg.adam);
      if (state.deformation) adam_step("deformation", state.deformation->params(), ev.grad.deformation, s_field, cfg.lr, cfg.adam);
    } catch (const Error& err) {
      throw FitDivergence(err.what(), res.trace);
    }
  }
  res.mesh = geometry::extract_surface(state.grid);
  res.state = std::move(state);
  res.trace.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return res;
}

core::GaussianSet gaussians_from_mesh(const geometry::SdfGrid& grid, const geometry::TriangleMesh& mesh,
                                      int feature_dim, double log_scale, double opacity_logit) {
  if (mesh.empty()) throw Error(ErrorCode::InvalidArgument, "cannot seed gaussians from an empty mesh");
  auto g = core::make_gaussian_set(mesh.vertices.size(), feature_dim);
  const auto feats = geometry::vertex_features(grid, mesh);
  const int copy = std::min(feature_dim, grid.feature_dim);
  for (std::size_t v = 0; v < mesh.vertices.size(); ++v) {
    g.positions[v] = mesh.vertices[v];
    for (int f = 0; f < copy; ++f) g.features(static_cast<Eigen::Index>(v), f) = feats[v * grid.feature_dim + f];
    g.log_scales[v] = Vec3::Constant(log_scale);
    g.opacity_logits[v] = opacity_logit;
  }
  return g;
}

}  // namespace gsavatar::train
