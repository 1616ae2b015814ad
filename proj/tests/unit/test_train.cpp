#include <doctest.h>

#include <cmath>
#include <limits>

#include "gsavatar/common/error.hpp"
#include "gsavatar/geometry/marching_tets.hpp"
#include "gsavatar/geometry/mesh_losses.hpp"
#include "gsavatar/io/scene.hpp"
#include "gsavatar/render/rasterizer.hpp"
#include "gsavatar/train/adam.hpp"
#include "gsavatar/train/losses.hpp"
#include "gsavatar/train/metrics.hpp"
#include "gsavatar/train/stage1.hpp"
#include "gsavatar/train/stage2.hpp"
#include "gsavatar/train/trace.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace gsavatar;
using namespace gsavatar::train;
using testing::Gen;
using testing::reference_ssim;

namespace {

render::Frame random_frame(Gen& gen, int w, int h) {
  auto f = render::Frame::filled(w, h, Vec3::Zero());
  for (auto& v : f.rgb) v = gen.uniform();
  for (auto& v : f.alpha) v = gen.uniform();
  return f;
}

render::Frame smooth_frame(Gen& gen, int w, int h) {
  auto f = render::Frame::filled(w, h, Vec3::Zero());
  const Vec3 p(gen.uniform(0.05, 0.3), gen.uniform(0.05, 0.3), gen.uniform(0.05, 0.3));
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        f.rgb[(y * w + x) * 3 + c] = 0.5 + 0.3 * std::sin(p[c] * x + 0.7 * c) * std::cos(p[(c + 1) % 3] * y) +
                                     0.1 * gen.uniform(-1, 1);
  return f;
}

struct Stage1Fixture {
  Stage1State state;
  std::vector<TrainFrame> frames;
  geometry::CenterScale prior;
  Stage1Config cfg;
};

Stage1Fixture small_stage1(Gen& gen, bool deformation) {
  Stage1Fixture fx;
  fx.state.grid = geometry::SdfGrid::from_function(
      6, Vec3::Constant(-1), Vec3::Constant(1), [](const Vec3& x) { return x.norm() - 0.55; }, 3);
  for (auto& s : fx.state.grid.sdf) s += gen.uniform(-0.02, 0.02);
  for (auto& e : fx.state.grid.eta) e = gen.uniform(-1, 1);
  const auto mesh = geometry::extract_surface(fx.state.grid);
  if (deformation) {
    MatX centers(4, 3);
    for (int k = 0; k < 4; ++k) centers.row(k) = mesh.vertices[static_cast<std::size_t>(k) * 7].transpose();
    fx.state.deformation = core::ResidualField::radial_basis(centers, 0.4, 3, 2);
    for (auto& p : fx.state.deformation->params()) p = gen.uniform(-0.05, 0.05);
  }
  for (int f = 0; f < 2; ++f) {
    TrainFrame fr;
    fr.theta.coefficients = deformation ? VecX(Vec2(gen.uniform(), gen.uniform())) : VecX::Zero(2);
    fr.transform = {gen.rotation_within(0.2), gen.vec3(0.05)};
    for (int v = 0; v < 2; ++v) {
      View view;
      const double az = gen.uniform(-0.8, 0.8);
      view.camera = render::Camera::look_at(Vec3(3 * std::sin(az), 0.2, 3 * std::cos(az)), Vec3::Zero(),
                                            Vec3(0, 1, 0), 24, 12, 12);
      view.target = random_frame(gen, 12, 12);
      view.mask.resize(144);
      for (auto& m : view.mask) m = gen.uniform() < 0.5 ? 0.0 : 1.0;
      fr.views.push_back(view);
    }
    for (int k = 0; k < 3; ++k) fr.landmarks.push_back(gen.vec3(0.6));
    fx.frames.push_back(fr);
  }
  fx.prior = {Vec3(0.03, -0.02, 0.01), 0.5};
  fx.cfg.background = Vec3(0.2, 0.1, 0.3);
  return fx;
}

std::vector<ViewRef> all_views(const std::vector<TrainFrame>& frames) {
  std::vector<ViewRef> out;
  for (std::size_t f = 0; f < frames.size(); ++f)
    for (std::size_t v = 0; v < frames[f].views.size(); ++v) out.push_back({f, v});
  return out;
}

io::SceneBundle tiny_scene(std::uint64_t seed, std::size_t gaussians = 30) {
  io::SceneSpec spec;
  spec.shape = io::SceneShape::BlendshapeHead;
  spec.gaussians = gaussians;
  spec.views = 2;
  spec.frames = 2;
  spec.width = 24;
  spec.height = 24;
  spec.seed = seed;
  return io::make_synthetic_scene(spec);
}

}  // namespace

TEST_CASE("psnr cap and formula") {
  Gen gen(31);
  const auto a = random_frame(gen, 8, 8);
  CHECK(psnr(a, a) == kPsnrCap);
  CHECK(psnr_from_mse(0.01) == 20.0);
  CHECK(psnr_from_mse(1.0) == 0.0);
  CHECK(psnr_from_mse(0.0) == kPsnrCap);
  auto b = a;
  for (auto& v : b.rgb) v += 0.1;
  CHECK(std::abs(psnr(a, b) - 20.0) < 1e-9);
  auto white = render::Frame::filled(4, 4, Vec3::Ones()), black = render::Frame::filled(4, 4, Vec3::Zero());
  CHECK(psnr(white, black) == 0.0);
  double prev = std::numeric_limits<double>::infinity();
  for (double mse = 1e-6; mse < 1.0; mse *= 1.7) {
    CHECK(psnr_from_mse(mse) < prev);
    prev = psnr_from_mse(mse);
  }
  CHECK_THROWS_AS(psnr(a, render::Frame::filled(4, 8, Vec3::Zero())), Error);
}

TEST_CASE("ssim against the brute-force reference") {
  Gen gen(32);
  for (int trial = 0; trial < 20; ++trial) {
    const int w = gen.integer(11, 30), h = gen.integer(11, 30);
    const auto a = smooth_frame(gen, w, h);
    auto b = a;
    for (auto& v : b.rgb) v = std::clamp(v + gen.uniform(-0.2, 0.2), 0.0, 1.0);
    CHECK(std::abs(ssim(a, b) - reference_ssim(a, b)) < 1e-4);
    CHECK(std::abs(ssim(a, a) - 1.0) < 1e-12);
  }
  const auto a = smooth_frame(gen, 32, 32);
  auto shifted = a;
  for (auto& v : shifted.rgb) v += 0.1;
  CHECK(std::abs(ssim(a, shifted) - reference_ssim(a, shifted)) < 1e-4);

  const auto n1 = random_frame(gen, 64, 64), n2 = random_frame(gen, 64, 64);
  CHECK(ssim(n1, n2) < 0.2);
  CHECK_THROWS_AS(ssim(random_frame(gen, 10, 20), random_frame(gen, 10, 20)), Error);
}

TEST_CASE("ssim gradient matches finite differences") {
  Gen gen(33);
  const auto b = smooth_frame(gen, 14, 13);
  auto a = smooth_frame(gen, 14, 13);
  std::vector<double> grad;
  ssim_rgb(a.rgb, b.rgb, 14, 13, &grad);
  auto f = [&]() { return ssim_rgb(a.rgb, b.rgb, 14, 13, nullptr); };
  CHECK(testing::relative_error(grad, testing::numeric_gradient(f, a.rgb, 1e-6)) < 1e-6);
}

TEST_CASE("rgb and offset loss examples") {
  Gen gen(34);
  const auto a = random_frame(gen, 6, 5);
  CHECK(rgb_loss(a, a).loss == 0.0);
  auto b = render::Frame::filled(6, 5, Vec3::Constant(0.3)), c = render::Frame::filled(6, 5, Vec3::Constant(0.4));
  CHECK(std::abs(rgb_loss(b, c).loss - 0.1) < 1e-12);
  const auto d = random_frame(gen, 6, 5);
  double mean = 0;
  for (std::size_t k = 0; k < a.rgb.size(); ++k) mean += std::abs(a.rgb[k] - d.rgb[k]);
  mean /= static_cast<double>(a.rgb.size());
  CHECK(std::abs(rgb_loss(a, d).loss - mean) < 1e-9);
  auto moving = a;
  const auto r = rgb_loss(moving, d);
  auto f = [&]() { return rgb_loss(moving, d).loss; };
  CHECK(testing::relative_error(r.grad, testing::numeric_gradient(f, moving.rgb, 1e-7)) < 1e-6);
  CHECK_THROWS_AS(rgb_loss(a, render::Frame::filled(5, 5, Vec3::Zero())), Error);

  CHECK(offset_loss(std::vector<Vec3>(5, Vec3::Zero())).loss == 0.0);
  CHECK(std::abs(offset_loss(std::vector<Vec3>(7, Vec3(0.1, 0, 0))).loss - 0.01) < 1e-15);
  std::vector<Vec3> res(9);
  for (auto& v : res) v = gen.vec3();
  double sq = 0;
  for (const auto& v : res) sq += v.squaredNorm();
  CHECK(std::abs(offset_loss(res).loss - sq / 9.0) < 1e-9);
  const auto o = offset_loss(res);
  auto fo = [&]() { return offset_loss(res).loss; };
  CHECK(testing::relative_error(testing::as_span(o.grad), testing::numeric_gradient(fo, testing::as_span(res), 1e-6)) <
        1e-8);
}

TEST_CASE("stage2 loss reductions, determinism and gradient") {
  Gen gen(35);
  const auto target = smooth_frame(gen, 24, 20);
  auto rendered = smooth_frame(gen, 24, 20);
  const SsimPatchLoss proxy;
  std::mt19937_64 r1(5), r2(5);
  const auto p1 = sample_patches(24, 20, {16, 3}, r1), p2 = sample_patches(24, 20, {16, 3}, r2);
  REQUIRE(p1.size() == 3);
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(p1[k].x == p2[k].x);
    CHECK(p1[k].y == p2[k].y);
    CHECK(p1[k].x + p1[k].size <= 24);
    CHECK(p1[k].y + p1[k].size <= 20);
  }
  std::mt19937_64 r3(5);
  CHECK(sample_patches(24, 20, {64, 2}, r3)[0].size == 20);

  LossWeights w;
  w.perc = 0;
  CHECK(stage2_loss(rendered, target, w, &proxy, p1).total == rgb_loss(rendered, target).loss);
  w.perc = 0.1;
  CHECK(stage2_loss(target, target, w, &proxy, p1).total == 0.0);
  const auto l = stage2_loss(rendered, target, w, &proxy, p1);
  CHECK(l.total == stage2_loss(rendered, target, w, &proxy, p2).total);
  CHECK(l.perc > 0);

  LossWeights w2 = w;
  w2.rgb2 *= 2;
  w2.perc *= 2;
  const auto l2 = stage2_loss(rendered, target, w2, &proxy, p1);
  CHECK(std::abs(l2.total - 2 * l.total) < 1e-12);
  for (std::size_t k = 0; k < l.grad.rgb.size(); ++k) CHECK(std::abs(l2.grad.rgb[k] - 2 * l.grad.rgb[k]) < 1e-12);

  auto f = [&]() { return stage2_loss(rendered, target, w, &proxy, p1).total; };
  CHECK(testing::relative_error(l.grad.rgb, testing::numeric_gradient(f, rendered.rgb, 1e-7)) < 1e-5);
}

TEST_CASE("adam examples") {
  Gen gen(36);
  std::vector<double> p = gen.values(7), g(7, 0.0);
  const auto p0 = p;
  AdamState st;
  adam_step("zero", p, g, st, 1e-2, {});
  CHECK(p == p0);
  CHECK(st.m == std::vector<double>(7, 0.0));
  CHECK(st.v == std::vector<double>(7, 0.0));

  AdamState fresh;
  g = gen.values(7);
  adam_step("first", p, g, fresh, 1e-2, {});
  for (std::size_t k = 0; k < 7; ++k) CHECK(std::abs(p[k] - (p0[k] - 1e-2 * g[k] / (std::abs(g[k]) + 1e-8))) < 1e-12);

  // reference implementation over several steps
  std::vector<double> q = gen.values(5), m(5, 0.0), v(5, 0.0), mine = q;
  AdamState s2;
  for (int t = 1; t <= 6; ++t) {
    const auto grad = gen.values(5);
    adam_step("ref", mine, grad, s2, 3e-3, {});
    for (std::size_t k = 0; k < 5; ++k) {
      m[k] = 0.9 * m[k] + 0.1 * grad[k];
      v[k] = 0.999 * v[k] + 0.001 * grad[k] * grad[k];
      const double mh = m[k] / (1 - std::pow(0.9, t)), vh = v[k] / (1 - std::pow(0.999, t));
      q[k] -= 3e-3 * mh / (std::sqrt(vh) + 1e-8);
    }
  }
  for (std::size_t k = 0; k < 5; ++k) CHECK(std::abs(q[k] - mine[k]) < 1e-12);

  std::vector<double> bad{0.1, std::nan(""), 0.3};
  std::vector<double> params{1, 2, 3};
  AdamState s3;
  try {
    adam_step("opacity", params, bad, s3, 1e-3, {});
    FAIL("nan gradient accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Divergence);
    CHECK(std::string(e.what()).find("opacity") != std::string::npos);
  }
  CHECK(params == std::vector<double>{1, 2, 3});
  CHECK_THROWS_AS(adam_step("short", params, std::vector<double>{1.0}, s3, 1e-3, {}), Error);
}

TEST_CASE("fit trace record, json round trip and csv") {
  FitTrace t;
  t.record({0, 1.5, {{"rgb", 1.0}, {"perc", 0.5}}, 20.25, 10});
  t.record({3, 0.1 + 0.2, {{"rgb", 0.3}}, std::nullopt, 12});
  t.splits.push_back({2, 2, 12});
  t.wall_clock_seconds = 1.25;
  CHECK_THROWS_AS(t.record({3, 0.0, {}, std::nullopt, 12}), Error);
  const auto back = FitTrace::from_json(t.to_json());
  CHECK(back.same_trajectory(t));
  CHECK(back.entries[1].loss == 0.1 + 0.2);
  CHECK(!back.entries[1].psnr);
  auto other = back;
  other.wall_clock_seconds = 99;
  CHECK(other.same_trajectory(t));
  other.entries[0].components[0].second = std::nextafter(1.0, 2.0);
  CHECK(!other.same_trajectory(t));
  const auto csv = t.to_csv();
  CHECK(csv.rfind("iteration,", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
  CHECK_THROWS_AS(FitTrace::from_json("{not json"), Error);
}

TEST_CASE("stage1 loss gradients match finite differences") {
  Gen gen(37);
  auto fx = small_stage1(gen, true);
  const auto views = all_views(fx.frames);
  const auto mesh = geometry::extract_surface(fx.state.grid);
  const auto ev = stage1_loss(fx.state, mesh, fx.prior, fx.frames, views, fx.cfg);
  CHECK(ev.terms.rgb > 0);
  CHECK(ev.terms.offset > 0);
  CHECK(ev.terms.lmk > 0);
  CHECK(ev.terms.lap > 0);
  CHECK(ev.terms.mesh > 0);
  CHECK(std::abs(ev.total - ev.terms.total(fx.cfg.weights)) < 1e-12);

  // the surface is re-extracted for every probe; topology is stable at this step
  auto f = [&]() {
    return stage1_loss(fx.state, geometry::extract_surface(fx.state.grid), fx.prior, fx.frames, views, fx.cfg).total;
  };
  const double h = 1e-6;
  CHECK(testing::relative_error(ev.grad.sdf, testing::numeric_gradient(f, fx.state.grid.sdf, h)) < 1e-3);
  CHECK(testing::relative_error(ev.grad.eta, testing::numeric_gradient(f, fx.state.grid.eta, h)) < 1e-3);
  CHECK(testing::relative_error(ev.grad.deformation, testing::numeric_gradient(f, fx.state.deformation->params(), h)) <
        1e-3);
}

TEST_CASE("stage1 loss is linear in the weights") {
  Gen gen(38);
  auto fx = small_stage1(gen, true);
  const auto views = all_views(fx.frames);
  const auto mesh = geometry::extract_surface(fx.state.grid);
  const auto a = stage1_loss(fx.state, mesh, fx.prior, fx.frames, views, fx.cfg);
  auto cfg2 = fx.cfg;
  for (double* w : {&cfg2.weights.rgb, &cfg2.weights.sil, &cfg2.weights.offset, &cfg2.weights.lmk, &cfg2.weights.lap,
                    &cfg2.weights.mesh})
    *w *= 2;
  const auto b = stage1_loss(fx.state, mesh, fx.prior, fx.frames, views, cfg2);
  CHECK(std::abs(b.total - 2 * a.total) < 1e-12 * std::abs(a.total));
  for (std::size_t k = 0; k < a.grad.sdf.size(); ++k) CHECK(std::abs(b.grad.sdf[k] - 2 * a.grad.sdf[k]) < 1e-12);
  for (std::size_t k = 0; k < a.grad.deformation.size(); ++k)
    CHECK(std::abs(b.grad.deformation[k] - 2 * a.grad.deformation[k]) < 1e-12);

  // a single active term
  auto only_mesh = fx.cfg;
  only_mesh.weights = LossWeights{0, 0, 0, 0, 0, 1.0, 1.0, 0.1};
  const auto c = stage1_loss(fx.state, mesh, fx.prior, fx.frames, views, only_mesh);
  CHECK(std::abs(c.total - geometry::mesh_alignment_loss(fx.prior, mesh.vertices).loss) < 1e-12);

  auto none = fx.cfg;
  none.weights = LossWeights{0, 0, 0, 0, 0, 0, 1.0, 0.1};
  CHECK(stage1_loss(fx.state, mesh, fx.prior, fx.frames, views, none).total == 0.0);
}

TEST_CASE("stage1 fit: zero iterations and ground-truth fixed point") {
  io::SceneSpec spec;
  spec.shape = io::SceneShape::Sphere;
  spec.grid_resolution = 10;
  spec.views = 2;
  spec.frames = 1;
  spec.width = 16;
  spec.height = 16;
  auto gt_grid = io::shape_grid(spec);
  Stage1State gt{gt_grid, std::nullopt};
  const auto gt_mesh = geometry::extract_surface(gt_grid);

  Stage1Config cfg;
  cfg.iterations = 0;
  auto r0 = fit_stage1(gt, gt_mesh, {}, cfg);
  CHECK(r0.trace.entries.empty());
  CHECK(r0.state.grid.sdf == gt_grid.sdf);

  std::vector<TrainFrame> frames(1);
  frames[0].theta.coefficients = VecX::Zero(2);
  for (const auto& cam : io::camera_ring(2, 16, 16)) {
    View v;
    v.camera = cam;
    v.target = render_surface(gt, gt_mesh, frames[0], cam, cfg);
    v.mask = v.target.alpha;
    frames[0].views.push_back(v);
  }
  for (std::size_t k = 0; k < gt_mesh.vertices.size(); k += 9) frames[0].landmarks.push_back(gt_mesh.vertices[k]);

  cfg.iterations = 20;
  cfg.icp = false;
  cfg.weights.lap = 0.0;
  const auto r = fit_stage1(gt, gt_mesh, frames, cfg);
  REQUIRE(r.trace.entries.size() == 20);
  const double first = r.trace.entries.front().loss;
  CHECK(first < 1e-12);
  for (const auto& e : r.trace.entries) CHECK(std::abs(e.loss - first) < 1e-6);
  CHECK(r.mesh.vertices == gt_mesh.vertices);
}

TEST_CASE("stage1 fit is seed-deterministic") {
  Gen gen(39);
  auto fx = small_stage1(gen, true);
  const auto prior = geometry::extract_surface(fx.state.grid);
  fx.cfg.iterations = 5;
  fx.cfg.batch = 2;
  fx.cfg.seed = 3;
  const auto a = fit_stage1(fx.state, prior, fx.frames, fx.cfg);
  const auto b = fit_stage1(fx.state, prior, fx.frames, fx.cfg);
  CHECK(a.trace.same_trajectory(b.trace));
  CHECK(a.state.grid.sdf == b.state.grid.sdf);
}

TEST_CASE("stage2 end-to-end gradient matches finite differences") {
  Gen gen(40);
  const std::size_t n = 4;
  auto g = gen.gaussians(n, 4, 0.1);
  for (auto& s : g.log_scales) s = Vec3(std::log(gen.uniform(0.9, 1.3)), std::log(gen.uniform(0.9, 1.3)), std::log(1.0));
  for (auto& o : g.opacity_logits) o = logit(gen.uniform(0.2, 0.55));
  auto bank = core::ResidualFieldBank::linear_blend(n, 4, 3);
  gen.fill(bank, 0.05);
  bank.field(core::Attribute::Def, core::Driver::Expression).params()[0] = 0.6;
  control::ControlConfig ctl;
  ctl.radius = 0.4;
  ctl.sigma = 0.2;
  const core::ExpressionParams theta{Vec3(0.9, 0.3, -0.2)};
  const core::PoseParams beta{gen.vec3(0.1), gen.vec3(0.05)};
  const core::RigidTransform t{gen.rotation_within(0.3), gen.vec3(0.1)};
  const auto cam = render::Camera::look_at(Vec3(0, 0, -3), Vec3::Zero(), Vec3(0, 1, 0), 10, 10, 10);
  const auto target = smooth_frame(gen, 10, 10);
  LossWeights w;
  const Vec3 bg(0.1, 0.2, 0.3);

  auto f = [&]() {
    const auto world = core::assemble_avatar(g, theta, beta, t, bank, ctl);
    return stage2_loss(render::rasterize(world, cam, bg), target, w, nullptr, {}).total;
  };
  core::AvatarTape tape;
  const auto world = core::assemble_avatar_taped(g, theta, beta, t, bank, ctl, tape);
  REQUIRE(!tape.controls.empty());
  const auto l = stage2_loss(render::rasterize(world, cam, bg), target, w, nullptr, {});
  const auto grads =
      core::assemble_avatar_backward(g, bank, tape, render::rasterize_backward(world, cam, bg, l.grad));
  const double h = 1e-6;
  CHECK(testing::relative_error(testing::as_span(grads.positions),
                                testing::numeric_gradient(f, testing::as_span(g.positions), h)) < 1e-3);
  CHECK(testing::relative_error(flat(grads.features), testing::numeric_gradient(f, flat(g.features), h)) < 1e-3);
  CHECK(testing::relative_error(flat(grads.rotations), testing::numeric_gradient(f, flat(g.rotations), h)) < 1e-3);
  CHECK(testing::relative_error(testing::as_span(grads.log_scales),
                                testing::numeric_gradient(f, testing::as_span(g.log_scales), h)) < 1e-3);
  CHECK(testing::relative_error(grads.opacity_logits, testing::numeric_gradient(f, g.opacity_logits, h)) < 1e-3);
  for (std::size_t k = 0; k < 10; ++k) {
    CAPTURE(k);
    CHECK(testing::relative_error(grads.fields[k], testing::numeric_gradient(f, bank.fields()[k].params(), h)) < 1e-3);
  }
}

TEST_CASE("stage2 fit: zero rates, replay and split cadence") {
  auto scene = tiny_scene(4);
  REQUIRE(scene.truth);
  AvatarState init = scene.truth->avatar;
  Gen gen(41);
  for (auto& p : init.gaussians.positions) p += gen.vec3(0.01);

  Stage2Config cfg;
  cfg.iterations = 6;
  cfg.patches = {16, 2};
  cfg.lr = {0, 0, 0, 0, 0, 0};
  auto frozen = fit_stage2(init, scene.frames, scene.control, cfg);
  CHECK(frozen.state.gaussians.positions == init.gaussians.positions);
  CHECK(frozen.state.gaussians.opacity_logits == init.gaussians.opacity_logits);
  CHECK(frozen.state.bank.fields()[0].params() == init.bank.fields()[0].params());

  cfg.lr = Stage2Rates::desk();
  cfg.iterations = 40;
  cfg.seed = 9;
  auto ctl = scene.control;
  ctl.split_interval = 10;
  ctl.tau_split = 0.05;
  const auto a = fit_stage2(init, scene.frames, ctl, cfg);
  const auto b = fit_stage2(init, scene.frames, ctl, cfg);
  CHECK(a.trace.same_trajectory(b.trace));
  CHECK(a.state.gaussians.positions == b.state.gaussians.positions);
  REQUIRE(!a.trace.splits.empty());
  for (std::size_t k = 1; k < a.trace.entries.size(); ++k) {
    const auto& prev = a.trace.entries[k - 1];
    const auto& cur = a.trace.entries[k];
    CHECK(cur.gaussians >= prev.gaussians);
    if (cur.gaussians != prev.gaussians) CHECK(cur.iteration % ctl.split_interval == 0);
  }
  CHECK(a.state.generation.size() == a.state.gaussians.size());
  CHECK(a.state.bank.fields()[0].instance_count() == a.state.gaussians.size());
}

TEST_CASE("stage2 fit improves a perturbed avatar") {
  auto scene = tiny_scene(5);
  AvatarState init = scene.truth->avatar;
  Gen gen(42);
  for (auto& p : init.gaussians.positions) p += gen.vec3(0.04);
  init.bank.field(core::Attribute::Color, core::Driver::Expression).set_zero();
  for (auto& o : init.gaussians.opacity_logits) o -= 2.0;
  auto ctl = scene.control;
  ctl.split_interval = 0;
  Stage2Config cfg;
  cfg.lr = Stage2Rates::desk();
  cfg.iterations = 150;
  cfg.patches = {16, 2};
  const double before = evaluate_psnr(init, scene.frames, ctl, cfg.background);
  const auto r = fit_stage2(init, scene.frames, ctl, cfg);
  const double after = evaluate_psnr(r.state, scene.frames, ctl, cfg.background);
  MESSAGE("psnr " << before << " -> " << after);
  CHECK(after > before + 3.0);
  CHECK(r.trace.splits.empty());
}
