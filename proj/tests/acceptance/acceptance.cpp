#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>

#include "gsavatar/common/error.hpp"
#include "gsavatar/control/controllable.hpp"
#include "gsavatar/control/split.hpp"
#include "gsavatar/geometry/icp.hpp"
#include "gsavatar/geometry/marching_tets.hpp"
#include "gsavatar/geometry/mesh_losses.hpp"
#include "gsavatar/io/scene.hpp"
#include "gsavatar/render/rasterizer.hpp"
#include "gsavatar/render/silhouette.hpp"
#include "gsavatar/train/losses.hpp"
#include "gsavatar/train/metrics.hpp"
#include "gsavatar/train/stage1.hpp"
#include "gsavatar/train/stage2.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace gsavatar;
using testing::Gen;

namespace {

// Collects failed checks of one criterion; the first few are reported.
struct Check {
  std::vector<std::string> failures;
  std::size_t count = 0;

  void expect(bool ok, const std::string& what) {
    ++count;
    if (!ok) failures.push_back(what);
  }
  bool ok() const { return failures.empty(); }
  std::string summary() const {
    if (ok()) return std::to_string(count) + " checks";
    std::ostringstream s;
    s << failures.size() << "/" << count << " checks failed: " << failures.front();
    if (failures.size() > 1) s << "; " << failures[1];
    return s.str();
  }
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

struct Outcome {
  bool pass;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------- 1

std::vector<Vec3> cloud(Gen& gen, std::size_t n, double extent) {
  std::vector<Vec3> p(n);
  for (auto& x : p) x = gen.vec3(extent);
  return p;
}

Outcome mechanism() {
  Check c;
  Gen gen(101);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto n = static_cast<std::size_t>(gen.integer(2, 60));
    const auto p = cloud(gen, n, gen.uniform(0.05, 1.0));
    control::ControlConfig cfg;
    cfg.radius = gen.uniform(0.05, 1.0);
    cfg.sigma = cfg.radius * gen.uniform(0.1, 3.0);
    std::vector<std::size_t> controls;
    for (std::size_t i = 0; i < n; ++i)
      if (gen.uniform() < 0.3) controls.push_back(i);
    if (controls.empty()) controls.push_back(0);
    const control::SpatialIndex index(p, cfg.radius);
    const auto members = control::memberships(n, controls, control::neighborhoods(p, controls, cfg, index));
    for (std::size_t j = 0; j < n; ++j) {
      if (members[j].empty()) continue;
      const auto w = control::propagation_weights(p, j, members[j], cfg.sigma);
      double sum = 0.0;
      for (double v : w) sum += v;
      worst = std::max(worst, std::abs(sum - 1.0));
    }
  }
  c.expect(worst < 1e-9, "max |sum w - 1| = " + fmt("%.3g", worst));

  for (int trial = 0; trial < 200; ++trial) {
    const std::vector<double> delta = gen.values(static_cast<std::size_t>(gen.integer(0, 80)), 1.0);
    std::vector<double> abs_delta;
    for (double d : delta) abs_delta.push_back(std::abs(d));
    double lo = gen.uniform(0, 1), hi = gen.uniform(0, 1);
    if (lo > hi) std::swap(lo, hi);
    const auto a = control::select_controls(abs_delta, lo), b = control::select_controls(abs_delta, hi);
    c.expect(std::includes(a.begin(), a.end(), b.begin(), b.end()), "control set not monotone in tau");
  }

  for (int trial = 0; trial < 60; ++trial) {
    const auto n = static_cast<std::size_t>(gen.integer(1, 300));
    const auto p = cloud(gen, n, 0.5);
    const double r = gen.uniform(0.02, 0.6);
    const control::SpatialIndex index(p, gen.uniform(0.5, 2.0) * r);
    for (int q = 0; q < 20; ++q) {
      const Vec3 center = q % 2 ? p[static_cast<std::size_t>(gen.integer(0, static_cast<int>(n) - 1))] : gen.vec3(0.6);
      std::vector<std::size_t> brute;
      for (std::size_t j = 0; j < n; ++j)
        if ((p[j] - center).norm() < r) brute.push_back(j);
      c.expect(index.query_radius(center, r) == brute, "grid query differs from brute force");
    }
    control::ControlConfig cfg;
    cfg.radius = r;
    std::vector<std::size_t> controls;
    for (std::size_t i = 0; i < n; i += 7) controls.push_back(i);
    const control::SpatialIndex hood_index(p, r);
    const auto hoods = control::neighborhoods(p, controls, cfg, hood_index);
    const std::set<std::size_t> is_control(controls.begin(), controls.end());
    for (std::size_t k = 0; k < controls.size(); ++k) {
      std::vector<std::size_t> brute;
      for (std::size_t j = 0; j < n; ++j)
        if (!is_control.count(j) && (p[j] - p[controls[k]]).norm() < r) brute.push_back(j);
      c.expect(hoods[k] == brute, "neighborhood differs from brute force");
    }
  }

  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 150;
    const auto p = cloud(gen, n, 0.4);
    std::vector<Vec3> base(n);
    for (std::size_t i = 0; i < n; ++i) base[i] = p[i] + gen.vec3(0.01);
    control::ControlConfig cfg;
    cfg.radius = 0.1;
    cfg.sigma = 0.05;
    std::vector<std::size_t> controls;
    std::vector<Vec3> disp;
    for (std::size_t i = static_cast<std::size_t>(trial % 5); i < n; i += 17) {
      controls.push_back(i);
      disp.push_back(gen.vec3(0.5));
    }
    const control::SpatialIndex index(p, cfg.radius);
    const auto hoods = control::neighborhoods(p, controls, cfg, index);
    std::set<std::size_t> touched;
    for (const auto& h : hoods) touched.insert(h.begin(), h.end());
    const auto out = control::propagate(base, p, controls, disp, control::memberships(n, controls, hoods), cfg);
    for (std::size_t j = 0; j < n; ++j)
      if (!touched.count(j)) c.expect(out[j] == base[j], "propagation moved a Gaussian outside every neighborhood");
  }
  return {c.ok(), c.summary()};
}

// ---------------------------------------------------------------- 2

Outcome splitting() {
  Check c;
  Gen gen(202);
  const int expr_dim = 4, feature_dim = 5;
  for (int trial = 0; trial < 200; ++trial) {
    const auto n = static_cast<std::size_t>(gen.integer(1, 60));
    const auto g = gen.gaussians(n, feature_dim);
    auto bank = core::ResidualFieldBank::linear_blend(n, feature_dim, expr_dim);
    gen.fill(bank, 0.5);
    std::vector<double> delta(n);
    std::vector<Vec3> dirs(n);
    for (std::size_t i = 0; i < n; ++i) {
      delta[i] = gen.uniform(0, 0.6);
      dirs[i] = gen.vec3();
    }
    control::ControlConfig cfg;
    cfg.tau_split = gen.uniform(0.05, 0.5);
    const auto r = control::split_gaussians(g, delta, dirs, cfg);
    const auto expected =
        static_cast<std::size_t>(std::count_if(delta.begin(), delta.end(), [&](double d) { return d > cfg.tau_split; }));
    c.expect(r.set.size() - n == expected, "count delta " + std::to_string(r.set.size() - n) + " vs " +
                                               std::to_string(expected));
    c.expect(r.report.children.size() == 2 * r.report.parents.size(), "two children per parent");

    auto child_bank = bank;
    child_bank.duplicate_instances(r.report.parents);
    for (std::size_t k = 0; k < r.report.parents.size(); ++k) {
      const std::size_t p = r.report.parents[k];
      for (std::size_t ch : {r.report.children[2 * k], r.report.children[2 * k + 1]}) {
        c.expect(r.set.rotations[ch] == g.rotations[p], "rotation not inherited");
        c.expect(r.set.opacity_logits[ch] == g.opacity_logits[p], "opacity not inherited");
        c.expect(r.set.features.row(static_cast<Eigen::Index>(ch)) == g.features.row(static_cast<Eigen::Index>(p)),
                 "features not inherited");
        const Vec3 ratio = r.set.decoded_scale(ch).cwiseQuotient(g.decoded_scale(p));
        c.expect((ratio - Vec3::Constant(0.8)).norm() < 1e-12, "child scale is not 0.8 x parent");
        for (const auto& field : child_bank.fields()) {
          const auto in = gen.values(static_cast<std::size_t>(field.input_dim()), 1.0);
          const auto drv = gen.values(static_cast<std::size_t>(field.driver_dim()), 1.0);
          const auto& parent_field = bank.fields()[static_cast<std::size_t>(&field - child_bank.fields().data())];
          c.expect(field.evaluate(ch, in, drv) == parent_field.evaluate(p, in, drv), "field residual not inherited");
        }
      }
    }

    std::size_t previous = std::numeric_limits<std::size_t>::max();
    for (double tau : {0.05, 0.1, 0.15, 0.2, 0.3, 0.4, 0.5}) {
      const std::size_t count = control::split_candidates(delta, tau).size();
      c.expect(count <= previous, "split count increased with tau");
      previous = count;
    }
  }
  return {c.ok(), c.summary()};
}

// ---------------------------------------------------------------- 3

Outcome geometry_stage() {
  Check c;
  const auto grid = geometry::SdfGrid::from_function(32, Vec3::Constant(-1), Vec3::Constant(1),
                                                     [](const Vec3& x) { return x.norm() - 0.5; });
  const auto mesh = geometry::extract_surface(grid);
  double worst = 0.0;
  for (const auto& v : mesh.vertices) worst = std::max(worst, std::abs(v.norm() - 0.5));
  c.expect(!mesh.empty() && worst < grid.cell_diagonal(), "radial error " + fmt("%.4g", worst));
  c.expect(geometry::is_watertight(mesh), "sphere mesh not watertight");

  Gen gen(303);
  const auto shape = testing::asymmetric_cloud(400);
  double icp_worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const core::RigidTransform t{gen.rotation_within(30.0 * M_PI / 180.0), gen.vec3(0.1)};
    std::vector<Vec3> moved;
    for (const auto& p : shape) moved.push_back(t.apply(p));
    const auto r = geometry::icp_align(moved, shape);
    const auto inv = t.inverse();
    icp_worst = std::max({icp_worst, (r.transform.matrix() - inv.matrix()).norm(),
                          (r.transform.translation - inv.translation).norm()});
  }
  c.expect(icp_worst < 1e-3, "icp error " + fmt("%.3g", icp_worst));

  geometry::TriangleMesh prior, shifted, a, b;
  for (int i = 0; i < 40; ++i) prior.vertices.push_back(gen.vec3());
  shifted = prior;
  for (auto& v : shifted.vertices) v += Vec3(0, 1, 0);
  c.expect(std::abs(geometry::mesh_alignment_loss(prior, shifted).loss - 1.0) < 1e-12, "translation case");
  a.vertices = {Vec3(1, 0, 0), Vec3(-1, 0, 0)};
  b.vertices = {Vec3(2, 0, 0), Vec3(-2, 0, 0)};
  c.expect(std::abs(geometry::mesh_alignment_loss(a, b).loss - 1.0) < 1e-12, "scale case");

  auto pred = mesh;
  for (auto& v : pred.vertices) v += gen.vec3(0.02);
  const auto cs = geometry::CenterScale{Vec3(0.1, -0.05, 0.2), 0.4};
  const auto g = geometry::mesh_alignment_loss(cs, pred.vertices);
  auto f = [&]() { return geometry::mesh_alignment_loss(cs, pred.vertices).loss; };
  const double err =
      testing::relative_error(testing::as_span(g.grad), testing::numeric_gradient(f, testing::as_span(pred.vertices), 1e-6));
  c.expect(err < 1e-4, "alignment gradient rel error " + fmt("%.3g", err));
  return {c.ok(), c.summary() + ", radial " + fmt("%.4f", worst) + ", icp " + fmt("%.2g", icp_worst)};
}

// ---------------------------------------------------------------- 4

Outcome renderer_oracle() {
  Check c;
  Gen gen(404);
  const auto cam = testing::small_camera(16, 16, 24);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto g = testing::random_scene(gen, static_cast<std::size_t>(gen.integer(1, 10)), 0.6, 0.02, 0.3);
    const Vec3 bg(gen.uniform(), gen.uniform(), gen.uniform());
    worst = std::max(worst, testing::max_diff(render::rasterize(g, cam, bg), testing::brute_force(g, cam, bg)));
  }
  c.expect(worst < 1e-6, "oracle max diff " + fmt("%.3g", worst));

  render::Camera full;
  const std::size_t center = 32 * 64 + 32;
  const auto one = render::rasterize(testing::single(Vec3(0, 0, 2), Vec3::Ones(), 0.8, 0.02), full, Vec3::Zero());
  for (int ch = 0; ch < 3; ++ch) c.expect(std::abs(one.rgb[center * 3 + ch] - 0.8) < 1e-6, "single splat example");
  auto two = testing::single(Vec3(0, 0, 1), Vec3(1, 0, 0), 0.5, 0.01);
  testing::append(two, testing::single(Vec3(0, 0, 2), Vec3(0, 0, 1), 0.5, 0.02));
  const auto f = render::rasterize(two, full, Vec3::Zero());
  c.expect(std::abs(f.rgb[center * 3 + 0] - 0.5) < 1e-6 && std::abs(f.rgb[center * 3 + 1]) < 1e-6 &&
               std::abs(f.rgb[center * 3 + 2] - 0.25) < 1e-6,
           "two splat example");
  return {c.ok(), c.summary() + ", max diff " + fmt("%.2g", worst)};
}

// ---------------------------------------------------------------- 5

std::span<double> flat4(std::vector<Vec4>& v) { return {reinterpret_cast<double*>(v.data()), v.size() * 4}; }
std::span<const double> flat4(const std::vector<Vec4>& v) {
  return {reinterpret_cast<const double*>(v.data()), v.size() * 4};
}

Outcome gradient_suite() {
  Check c;
  Gen gen(505);
  double worst = 0.0;
  auto record = [&](double err, const std::string& what) {
    worst = std::max(worst, err);
    c.expect(err < 1e-3, what + " rel error " + fmt("%.3g", err));
  };

  const auto cam = testing::small_camera(10, 10, 12);
  for (int trial = 0; trial < 4; ++trial) {
    auto g = testing::random_scene(gen, 4, 0.15, 0.45, 0.7);
    const Vec3 bg(gen.uniform(), gen.uniform(), gen.uniform());
    testing::L2Target obj{render::Frame::filled(cam.width, cam.height, Vec3::Zero())};
    for (auto& v : obj.target.rgb) v = gen.uniform();
    for (auto& v : obj.target.alpha) v = gen.uniform();
    const auto grads = render::rasterize_backward(g, cam, bg, obj.grad(render::rasterize(g, cam, bg)));
    auto f = [&]() { return obj.loss(render::rasterize(g, cam, bg)); };
    const double h = 1e-5;
    record(testing::relative_error(testing::as_span(grads.colors), testing::numeric_gradient(f, testing::as_span(g.colors), h)),
           "raster color");
    record(testing::relative_error(grads.opacity_logits, testing::numeric_gradient(f, g.opacity_logits, h)),
           "raster opacity");
    record(testing::relative_error(testing::as_span(grads.positions),
                                   testing::numeric_gradient(f, testing::as_span(g.positions), h)),
           "raster position");
    record(testing::relative_error(testing::as_span(grads.log_scales),
                                   testing::numeric_gradient(f, testing::as_span(g.log_scales), h)),
           "raster scale");
    record(testing::relative_error(flat4(grads.rotations), testing::numeric_gradient(f, flat4(g.rotations), h)),
           "raster rotation");
  }

  const auto sphere = geometry::extract_surface(geometry::SdfGrid::from_function(
      6, Vec3::Constant(-1), Vec3::Constant(1), [](const Vec3& x) { return x.norm() - 0.6; }));
  auto pred = sphere;
  for (auto& v : pred.vertices) v += gen.vec3(0.05);
  const geometry::CenterScale prior{Vec3(0.1, 0.2, -0.1), 0.35};
  const double h = 1e-6;
  {
    const auto g = geometry::mesh_alignment_loss(prior, pred.vertices);
    auto f = [&]() { return geometry::mesh_alignment_loss(prior, pred.vertices).loss; };
    record(testing::relative_error(testing::as_span(g.grad), testing::numeric_gradient(f, testing::as_span(pred.vertices), h)),
           "mesh alignment");
  }
  {
    const auto g = geometry::laplacian_loss(pred);
    auto f = [&]() { return geometry::laplacian_loss(pred).loss; };
    record(testing::relative_error(testing::as_span(g.grad), testing::numeric_gradient(f, testing::as_span(pred.vertices), h)),
           "laplacian");
  }
  {
    std::vector<Vec3> src(pred.vertices.begin(), pred.vertices.begin() + 12), tgt = src;
    for (auto& t : tgt) t += gen.vec3(0.1);
    const auto g = geometry::landmark_loss(src, tgt);
    auto f = [&]() { return geometry::landmark_loss(src, tgt).loss; };
    record(testing::relative_error(testing::as_span(g.grad), testing::numeric_gradient(f, testing::as_span(src), h)),
           "landmark");
  }
  {
    std::vector<double> alpha(64), mask(64);
    for (auto& a : alpha) a = gen.uniform(0.05, 0.95);
    for (auto& m : mask) m = gen.uniform() < 0.5 ? 0.0 : 1.0;
    const auto g = render::silhouette_loss(alpha, mask);
    auto f = [&]() { return render::silhouette_loss(alpha, mask).loss; };
    record(testing::relative_error(g.grad, testing::numeric_gradient(f, alpha, h)), "silhouette");
  }
  {
    auto a = render::Frame::filled(8, 8, Vec3::Zero()), b = a;
    for (auto& v : a.rgb) v = gen.uniform();
    for (auto& v : b.rgb) v = gen.uniform();
    const auto g = train::rgb_loss(a, b);
    auto f = [&]() { return train::rgb_loss(a, b).loss; };
    record(testing::relative_error(g.grad, testing::numeric_gradient(f, a.rgb, h)), "rgb");
  }
  {
    std::vector<Vec3> res(20);
    for (auto& r : res) r = gen.vec3(0.2);
    const auto g = train::offset_loss(res);
    auto f = [&]() { return train::offset_loss(res).loss; };
    record(testing::relative_error(testing::as_span(g.grad), testing::numeric_gradient(f, testing::as_span(res), h)),
           "offset");
  }
  return {c.ok(), c.summary() + ", worst rel error " + fmt("%.2g", worst)};
}

// ---------------------------------------------------------------- 6

constexpr int kPriorGrid = 40;
constexpr int kPriorImage = 64;

struct PriorCase {
  std::vector<train::TrainFrame> frames;
  geometry::TriangleMesh prior;
  io::SceneSpec origin;
};

// Sphere of radius 0.5 moved 0.2 toward a four-view arc of cameras; the
// prior is the same translated sphere.
PriorCase prior_case() {
  PriorCase pc;
  pc.origin.grid_resolution = kPriorGrid;
  io::SceneSpec moved = pc.origin;
  moved.center = Vec3(0, 0, 0.2);
  const train::Stage1State truth{io::shape_grid(moved), {}};
  pc.prior = geometry::extract_surface(truth.grid);
  train::TrainFrame frame;
  frame.theta.coefficients = VecX::Zero(moved.expression_dim);
  const train::Stage1Config render_cfg;
  for (int v = 0; v < 4; ++v) {
    const double az = (-52.0 + 104.0 * v / 3.0) * M_PI / 180.0;
    const double el = v % 2 == 0 ? 0.1 : -0.1;
    const Vec3 eye = 3.0 * Vec3(std::sin(az) * std::cos(el), std::sin(el), std::cos(az) * std::cos(el));
    const auto cam =
        render::Camera::look_at(eye, Vec3::Zero(), Vec3(0, 1, 0), 1.2 * kPriorImage, kPriorImage, kPriorImage);
    frame.views.push_back({cam, train::render_surface(truth, pc.prior, frame, cam, render_cfg), {}});
  }
  pc.frames.push_back(std::move(frame));
  return pc;
}

train::Stage1Result run_prior_arm(const PriorCase& pc, double lambda_mesh, std::uint64_t seed) {
  // start from an untranslated sphere that encloses the target
  train::Stage1State init{io::shape_grid(pc.origin), {}};
  Gen gen(seed);
  for (std::size_t v = 0; v < init.grid.vertex_count(); ++v)
    init.grid.sdf[v] = init.grid.vertex_position(v).norm() - 0.72 + gen.uniform(-0.01, 0.01);
  train::Stage1Config cfg;
  cfg.iterations = 150;
  cfg.lr = 1e-2;
  cfg.icp = false;
  cfg.weights.lap = 1.0;
  cfg.weights.mesh = lambda_mesh;
  cfg.seed = seed;
  return train::fit_stage1(init, pc.prior, pc.frames, cfg);
}

double center_error(const train::Stage1Result& r) {
  return (geometry::mesh_center_scale(r.mesh).center - geometry::mesh_center_scale(r.prior).center).norm();
}

struct Replays {
  std::optional<train::FitTrace> stage1;
  std::optional<train::FitTrace> stage2;
};

Outcome prior_ablation(Replays& replays) {
  Check c;
  const auto pc = prior_case();
  std::ostringstream detail;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto with = run_prior_arm(pc, 1.0, seed);
    const auto without = run_prior_arm(pc, 0.0, seed);
    const double ew = center_error(with), eo = center_error(without);
    if (seed == 0) replays.stage1 = with.trace;
    c.expect(ew <= 1e-2, "seed " + std::to_string(seed) + " with prior " + fmt("%.4f", ew));
    c.expect(eo >= 5e-2, "seed " + std::to_string(seed) + " without prior " + fmt("%.4f", eo));
    detail << " seed" << seed << " " << fmt("%.4f", ew) << "/" << fmt("%.4f", eo);
  }
  return {c.ok(), c.summary() + ", center error on/off:" + detail.str()};
}

// ---------------------------------------------------------------- 7

struct Reconstruction {
  io::SceneBundle scene;
  train::AvatarState init;
};

Reconstruction reconstruction_case() {
  io::SceneSpec spec;
  spec.shape = io::SceneShape::BlendshapeHead;
  spec.gaussians = 200;
  spec.views = 4;
  spec.frames = 6;
  spec.width = spec.height = 64;
  spec.seed = 1;
  // neighborhoods wide enough to reach other Gaussians at this density
  control::ControlConfig ctl;
  ctl.radius = 0.2;
  ctl.sigma = 0.1;
  Reconstruction rc{io::make_synthetic_scene(spec, ctl), {}};
  rc.init = rc.scene.truth->avatar;
  Gen gen(5);
  for (auto& p : rc.init.gaussians.positions) p += gen.vec3(0.04);
  for (Eigen::Index k = 0; k < rc.init.gaussians.features.size(); ++k)
    rc.init.gaussians.features.data()[k] += gen.uniform(-1.0, 1.0);
  for (auto& o : rc.init.gaussians.opacity_logits) o -= 2.0;
  return rc;
}

train::Stage2Config reconstruction_config() {
  train::Stage2Config cfg;
  cfg.lr = train::Stage2Rates::desk();
  cfg.iterations = 2000;
  cfg.psnr_every = 500;
  return cfg;
}

control::ControlConfig arm_control(const control::ControlConfig& base, std::optional<double> tau) {
  auto ctl = base;
  ctl.enable_control = tau.has_value();
  if (tau) ctl.tau_control = *tau;
  ctl.enable_split = false;
  ctl.split_interval = 0;
  return ctl;
}

Outcome self_reconstruction(Replays& replays) {
  Check c;
  const auto rc = reconstruction_case();
  const auto& truth = rc.scene.truth->avatar;
  double max_delta = 0.0;
  for (const auto& fr : rc.scene.frames)
    for (double d : control::displacement_magnitudes(truth.gaussians.positions, fr.theta, truth.bank))
      max_delta = std::max(max_delta, d);
  c.expect(max_delta > 0.3, "sequence has no displacement above tau");

  const auto cfg = reconstruction_config();
  std::map<std::string, double> psnr;
  const std::vector<std::pair<std::string, std::optional<double>>> arms = {
      {"off", std::nullopt}, {"0.15", 0.15}, {"0.3", 0.3}, {"0.4", 0.4}};
  const double before = train::evaluate_psnr(rc.init, rc.scene.frames, arm_control(rc.scene.control, 0.3), cfg.background);
  for (const auto& [name, tau] : arms) {
    const auto ctl = arm_control(rc.scene.control, tau);
    const auto r = train::fit_stage2(rc.init, rc.scene.frames, ctl, cfg);
    psnr[name] = train::evaluate_psnr(r.state, rc.scene.frames, ctl, cfg.background);
    if (name == "0.3") replays.stage2 = r.trace;
  }
  c.expect(psnr["0.3"] >= 30.0, "psnr " + fmt("%.2f", psnr["0.3"]) + " < 30");
  for (const char* other : {"off", "0.15", "0.4"})
    c.expect(psnr["0.3"] >= psnr[other], std::string("tau 0.3 below ") + other);
  std::ostringstream detail;
  detail << ", psnr init " << fmt("%.2f", before);
  for (const auto& [name, tau] : arms) detail << " " << name << "=" << fmt("%.2f", psnr[name]);
  detail << ", max delta " << fmt("%.3f", max_delta);
  return {c.ok(), c.summary() + detail.str()};
}

// ---------------------------------------------------------------- 8

Outcome metrics() {
  Check c;
  const auto a = render::Frame::filled(8, 8, Vec3(0.5, 0.5, 0.5));
  c.expect(train::psnr(a, a) == train::kPsnrCap, "identical frames");
  const auto b = render::Frame::filled(8, 8, Vec3(0.6, 0.6, 0.6));
  c.expect(std::abs(train::psnr(a, b) - 20.0) < 1e-9, "mse 0.01 gives 20 dB");
  c.expect(train::psnr_from_mse(1.0) == 0.0, "mse 1 gives 0 dB");
  c.expect(std::abs(train::psnr_from_mse(1e-4) - 40.0) < 1e-9, "mse 1e-4 gives 40 dB");

  Gen gen(808);
  double worst = 0.0;
  for (int pair = 0; pair < 20; ++pair) {
    const int w = gen.integer(11, 24), h = gen.integer(11, 24);
    auto x = render::Frame::filled(w, h, Vec3::Zero()), y = x;
    for (std::size_t k = 0; k < x.rgb.size(); ++k) {
      x.rgb[k] = gen.uniform();
      y.rgb[k] = std::clamp(x.rgb[k] + gen.uniform(-0.3, 0.3), 0.0, 1.0);
    }
    worst = std::max(worst, std::abs(train::ssim(x, y) - testing::reference_ssim(x, y)));
  }
  c.expect(worst < 1e-4, "ssim deviation " + fmt("%.3g", worst));
  return {c.ok(), c.summary() + ", ssim deviation " + fmt("%.2g", worst)};
}

// ---------------------------------------------------------------- 9

Outcome determinism(const Replays& replays) {
  Check c;
  c.expect(replays.stage1.has_value() && replays.stage2.has_value(), "criteria 6 and 7 did not record traces");
  if (!c.ok()) return {false, c.summary()};
  const auto pc = prior_case();
  c.expect(run_prior_arm(pc, 1.0, 0).trace.same_trajectory(*replays.stage1), "stage-I trace differs");
  const auto rc = reconstruction_case();
  const auto again = train::fit_stage2(rc.init, rc.scene.frames, arm_control(rc.scene.control, 0.3), reconstruction_config());
  c.expect(again.trace.same_trajectory(*replays.stage2), "stage-II trace differs");
  return {c.ok(), c.summary()};
}

}  // namespace

int main() {
  Replays replays;
  struct Criterion {
    int id;
    const char* name;
    double budget;  // seconds; 0 means none stated
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "mechanism correctness", 5, mechanism},
      {2, "splitting contract", 5, splitting},
      {3, "geometry stage", 30, geometry_stage},
      {4, "renderer oracle", 0, renderer_oracle},
      {5, "gradient suite", 60, gradient_suite},
      {6, "stage-I prior ablation", 120, [&] { return prior_ablation(replays); }},
      {7, "stage-II self-reconstruction", 300, [&] { return self_reconstruction(replays); }},
      {8, "metrics self-test", 0, metrics},
      {9, "determinism", 0, [&] { return determinism(replays); }},
  };

  int failed = 0;
  for (const auto& cr : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = cr.run();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double secs = seconds_since(t0);
    if (cr.budget > 0 && secs >= cr.budget) {
      out.pass = false;
      out.detail += ", over the " + fmt("%.0f", cr.budget) + " s budget";
    }
    if (!out.pass) ++failed;
    std::printf("criterion %d: %s  %s (%s; %.2f s)\n", cr.id, out.pass ? "PASS" : "FAIL", cr.name, out.detail.c_str(),
                secs);
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
