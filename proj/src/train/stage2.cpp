#include "gsavatar/train/stage2.hpp"

#include <chrono>
#include <cmath>
#include <random>

#include "gsavatar/control/controllable.hpp"
#include "gsavatar/control/split.hpp"
#include "gsavatar/render/rasterizer.hpp"
#include "gsavatar/train/metrics.hpp"

namespace gsavatar::train {

Stage2Rates Stage2Rates::desk() { return {1e-3, 1e-3, 3e-2, 3e-3, 3e-3, 3e-2}; }

void Stage2Config::validate() const {
  if (iterations < 0 || batch < 1) throw Error(ErrorCode::InvalidArgument, "stage2 iterations >= 0 and batch >= 1");
  for (double v : {lr.fields, lr.positions, lr.features, lr.rotations, lr.scales, lr.opacity})
    if (!(v >= 0)) throw Error(ErrorCode::InvalidArgument, "stage2 learning rates must be non-negative");
  if (patches.size < 11 || patches.count < 0) throw Error(ErrorCode::InvalidArgument, "patch size must be >= 11");
  weights.validate();
}

namespace {

struct Optimizer {
  AdamState positions, features, rotations, scales, opacity;
  std::array<AdamState, 10> fields;

  void step(AvatarState& s, core::AvatarGradients& g, const Stage2Config& cfg) {
    adam_step("positions", flat(s.gaussians.positions), flat(g.positions), positions, cfg.lr.positions, cfg.adam);
    adam_step("features", flat(s.gaussians.features), flat(g.features), features, cfg.lr.features, cfg.adam);
    adam_step("rotations", flat(s.gaussians.rotations), flat(g.rotations), rotations, cfg.lr.rotations, cfg.adam);
    adam_step("scales", flat(s.gaussians.log_scales), flat(g.log_scales), scales, cfg.lr.scales, cfg.adam);
    adam_step("opacity", s.gaussians.opacity_logits, g.opacity_logits, opacity, cfg.lr.opacity, cfg.adam);
    for (std::size_t f = 0; f < 10; ++f)
      adam_step(core::ResidualFieldBank::field_name(core::kAttributes[f / 2], core::kDrivers[f % 2]),
                s.bank.fields()[f].params(), g.fields[f], fields[f], cfg.lr.fields, cfg.adam);
    // Projected step: canonical rotations stay unit quaternions.
    for (auto& q : s.gaussians.rotations) q.normalize();
  }

  /// Moments follow the split: in-place children keep the parent's slot,
  /// appended children start from zero.
  void grow(const AvatarState& s, std::size_t added) {
    auto extend = [](AdamState& st, std::size_t per) {
      if (!st.m.empty()) st.resize(st.m.size() + per);
    };
    extend(positions, 3 * added);
    extend(rotations, 4 * added);
    extend(scales, 3 * added);
    extend(opacity, added);
    if (!features.m.empty()) {
      // Column-major N x dF: each column gains `added` trailing rows.
      const std::size_t n_new = s.gaussians.size(), n_old = n_new - added;
      const std::size_t cols = static_cast<std::size_t>(s.gaussians.feature_dim());
      auto widen = [&](std::vector<double>& v) {
        std::vector<double> out(n_new * cols, 0.0);
        for (std::size_t c = 0; c < cols; ++c) std::copy_n(v.begin() + c * n_old, n_old, out.begin() + c * n_new);
        v = std::move(out);
      };
      widen(features.m);
      widen(features.v);
    }
    for (std::size_t f = 0; f < 10; ++f) {
      const auto& field = s.bank.fields()[f];
      auto& st = fields[f];
      if (st.m.empty() || !field.per_instance()) continue;
      const std::size_t block = field.instance_block();
      const std::size_t old_end = (field.instance_count() - added) * block;
      for (auto* v : {&st.m, &st.v}) v->insert(v->begin() + static_cast<std::ptrdiff_t>(old_end), added * block, 0.0);
    }
  }
};

std::vector<ViewRef> pick(std::span<const TrainFrame> frames, int batch, std::mt19937_64& rng) {
  std::vector<ViewRef> all;
  for (std::size_t f = 0; f < frames.size(); ++f)
    for (std::size_t v = 0; v < frames[f].views.size(); ++v) all.push_back({f, v});
  std::vector<ViewRef> out;
  for (int k = 0; k < batch; ++k) out.push_back(all[static_cast<std::size_t>(rng() % all.size())]);
  return out;
}

}  // namespace

void split_signal(const AvatarState& state, std::span<const TrainFrame> frames, std::vector<double>& magnitudes,
                  std::vector<Vec3>& directions) {
  const std::size_t n = state.gaussians.size();
  magnitudes.assign(n, 0.0);
  directions.assign(n, Vec3::Zero());
  for (const auto& fr : frames) {
    const auto disp = control::expression_displacements(state.gaussians.positions, fr.theta, state.bank);
    for (std::size_t i = 0; i < n; ++i) {
      const double m = disp[i].norm();
      if (m > magnitudes[i]) {
        magnitudes[i] = m;
        directions[i] = disp[i];
      }
    }
  }
}

Stage2Result fit_stage2(AvatarState state, std::span<const TrainFrame> frames, const control::ControlConfig& ctl_in,
                        const Stage2Config& cfg) {
  cfg.validate();
  state.gaussians = core::validate_neutral_set(std::move(state.gaussians));
  if (frames.empty()) throw Error(ErrorCode::InvalidArgument, "stage2 needs at least one frame");
  state.bank.check_compatible(state.gaussians, frames.front().theta.dim());
  if (state.generation.size() != state.gaussians.size()) state.generation.assign(state.gaussians.size(), 0);
  control::ControlConfig ctl = ctl_in;
  ctl.enable_split = false;  // splits persist through the cadence below
  ctl.validate(state.gaussians.size());

  const auto start = std::chrono::steady_clock::now();
  Stage2Result res;
  std::mt19937_64 rng(cfg.seed);
  Optimizer opt;
  const SsimPatchLoss ssim_patch;
  const double inv_batch = 1.0 / static_cast<double>(cfg.batch);

  for (int it = 0; it < cfg.iterations; ++it) {
    const auto views = pick(frames, cfg.batch, rng);
    auto grads = core::AvatarGradients::zeros_like(state.gaussians, state.bank);
    double loss = 0.0, rgb = 0.0, perc = 0.0, psnr_sum = 0.0;
    for (const auto& r : views) {
      const TrainFrame& fr = frames[r.frame];
      const View& view = fr.views[r.view];
      core::AvatarTape tape;
      const auto world =
          core::assemble_avatar_taped(state.gaussians, fr.theta, fr.beta, fr.transform, state.bank, ctl, tape);
      const auto frame = render::rasterize(world, view.camera, cfg.background);
      const auto patches = sample_patches(frame.width, frame.height, cfg.patches, rng);
      auto l = stage2_loss(frame, view.target, cfg.weights, cfg.perceptual ? &ssim_patch : nullptr, patches);
      loss += l.total * inv_batch;
      rgb += l.rgb * inv_batch;
      perc += l.perc * inv_batch;
      psnr_sum += psnr(frame, view.target);
      for (auto& v : l.grad.rgb) v *= inv_batch;
      const auto wg = render::rasterize_backward(world, view.camera, cfg.background, l.grad);
      grads.add(core::assemble_avatar_backward(state.gaussians, state.bank, tape, wg));
    }

    TraceEntry e;
    e.iteration = it;
    e.loss = loss;
    e.components = {{"rgb", rgb}, {"perc", perc}};
    if (it % cfg.psnr_every == 0 || it + 1 == cfg.iterations) e.psnr = psnr_sum * inv_batch;
    e.gaussians = state.gaussians.size();
    res.trace.record(std::move(e));
    if (!std::isfinite(loss)) throw FitDivergence("stage II loss is not finite", res.trace);
    try {
      opt.step(state, grads, cfg);
    } catch (const FitDivergence&) {
      throw;
    } catch (const Error& err) {
      if (err.code() == ErrorCode::Divergence) throw FitDivergence(err.what(), res.trace);
      throw;
    }

    if (ctl.split_interval > 0 && (it + 1) % ctl.split_interval == 0) {
      std::vector<double> mags;
      std::vector<Vec3> dirs;
      split_signal(state, frames, mags, dirs);
      std::vector<std::uint8_t> eligible(state.gaussians.size());
      for (std::size_t i = 0; i < eligible.size(); ++i)
        eligible[i] = state.generation[i] < static_cast<std::uint8_t>(ctl.split_generations);
      auto split = control::split_gaussians(state.gaussians, mags, dirs, ctl, it + 1, eligible);
      if (!split.report.empty()) {
        const std::size_t added = split.report.parents.size();
        state.gaussians = std::move(split.set);
        state.bank.duplicate_instances(split.report.parents);
        for (auto p : split.report.parents) ++state.generation[p];
        for (auto p : split.report.parents) state.generation.push_back(state.generation[p]);
        opt.grow(state, added);
        res.trace.splits.push_back({it + 1, added, state.gaussians.size()});
        res.splits.push_back(std::move(split.report));
      }
    }
  }
  res.state = std::move(state);
  res.trace.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return res;
}

double evaluate_psnr(const AvatarState& state, std::span<const TrainFrame> frames, const control::ControlConfig& ctl_in,
                     const Vec3& background) {
  control::ControlConfig ctl = ctl_in;
  ctl.enable_split = false;
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& fr : frames) {
    const auto world =
        core::assemble_avatar(state.gaussians, fr.theta, fr.beta, fr.transform, state.bank, ctl);
    for (const auto& v : fr.views) {
      sum += psnr(render::rasterize(world, v.camera, background), v.target);
      ++n;
    }
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

}  // namespace gsavatar::train
