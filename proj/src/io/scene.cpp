#include "gsavatar/io/scene.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include <json.hpp>

#include "gsavatar/common/error.hpp"
#include "gsavatar/core/avatar.hpp"
#include "gsavatar/geometry/marching_tets.hpp"
#include "gsavatar/io/gsav.hpp"
#include "gsavatar/io/image_io.hpp"
#include "gsavatar/io/json_io.hpp"
#include "gsavatar/io/mesh_io.hpp"
#include "gsavatar/io/track_csv.hpp"
#include "gsavatar/render/rasterizer.hpp"

namespace gsavatar::io {

namespace fs = std::filesystem;
using nlohmann::json;

const char* to_string(SceneShape s) { return s == SceneShape::Sphere ? "sphere" : "blendshape-head"; }

SceneShape scene_shape_from_string(const std::string& s) {
  if (s == "sphere") return SceneShape::Sphere;
  if (s == "blendshape-head") return SceneShape::BlendshapeHead;
  throw Error(ErrorCode::InvalidArgument, "unknown scene shape '" + s + "' (sphere or blendshape-head)");
}

void SceneSpec::validate() const {
  if (gaussians == 0) throw Error(ErrorCode::InvalidArgument, "scene needs at least one gaussian");
  if (views < 1 || frames < 1) throw Error(ErrorCode::InvalidArgument, "scene needs at least one view and frame");
  if (width < 1 || height < 1) throw Error(ErrorCode::InvalidArgument, "scene image size must be positive");
  if (expression_dim < 1 || feature_dim < 3 || eta_dim < 3)
    throw Error(ErrorCode::InvalidArgument, "scene needs expression_dim >= 1, feature_dim >= 3 and eta_dim >= 3");
  if (grid_resolution < 2) throw Error(ErrorCode::InvalidArgument, "scene grid resolution must be >= 2");
  if (!center.allFinite() || !background.allFinite())
    throw Error(ErrorCode::NonFinite, "scene center/background not finite");
  const Vec3 r = shape_radii(shape);
  if ((center.cwiseAbs() + r).maxCoeff() >= 1.0)
    throw Error(ErrorCode::InvalidArgument, "scene shape does not fit inside the unit grid");
}

namespace {

// 53-bit uniform in [0,1); independent of the standard library's distributions.
double u01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double sym(std::mt19937_64& rng, double a) { return a * (2.0 * u01(rng) - 1.0); }

// Fibonacci-lattice unit directions.
std::vector<Vec3> fibonacci_dirs(std::size_t n) {
  std::vector<Vec3> out(n);
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (std::size_t i = 0; i < n; ++i) {
    const double y = n == 1 ? 0.0 : 1.0 - 2.0 * (static_cast<double>(i) + 0.5) / static_cast<double>(n);
    const double rad = std::sqrt(std::max(0.0, 1.0 - y * y));
    const double phi = golden * static_cast<double>(i);
    out[i] = Vec3(rad * std::cos(phi), y, rad * std::sin(phi));
    if (n == 1) out[i] = Vec3(0, 0, 1);
  }
  return out;
}

Vec3 surface_point(const Vec3& radii, const Vec3& dir) {
  // ray from the center along dir hits the ellipsoid at t * dir
  const double t = 1.0 / dir.cwiseQuotient(radii).norm();
  return t * dir;
}

Vec3 surface_normal(const Vec3& radii, const Vec3& p) {
  return p.cwiseQuotient(radii.cwiseProduct(radii)).normalized();
}

Vec4 quat_from_z(const Vec3& n) {
  const Vec3 z(0, 0, 1);
  const Vec3 axis = z.cross(n);
  const double s = axis.norm();
  const double c = z.dot(n);
  if (s < 1e-12) return c > 0 ? identity_quat() : Vec4(0, 1, 0, 0);
  return axis_angle_to_quat(axis / s * std::atan2(s, c));
}

// Smooth base albedo over the unit direction.
Vec3 albedo(const Vec3& n) {
  return Vec3(0.55 + 0.3 * n.x(), 0.45 + 0.25 * n.y(), 0.5 + 0.3 * n.z() * n.x() + 0.1 * n.y());
}

struct Blendshape {
  Vec3 anchor_dir;
  Vec3 motion;  // displacement direction times amplitude
  double width;
  double darken;  // color logit change at full weight
};

std::vector<Blendshape> head_blendshapes() {
  return {
      {Vec3(0, -0.55, 0.85).normalized(), Vec3(0, -0.8, 0.6).normalized() * 0.42, 0.15, -1.2},
      {Vec3(-0.35, 0.45, 0.8).normalized(), Vec3(0, 0.12, 0), 0.1, 0.0},
      {Vec3(0.35, 0.45, 0.8).normalized(), Vec3(0, 0.12, 0), 0.1, 0.0},
      {Vec3(0.5, -0.25, 0.8).normalized(), Vec3(0.6, 0.4, 0.2).normalized() * 0.24, 0.12, 0.4},
  };
}

train::AvatarState make_truth(const SceneSpec& spec, std::mt19937_64& rng) {
  const Vec3 radii = shape_radii(spec.shape);
  const std::size_t n = spec.gaussians;
  const auto dirs = fibonacci_dirs(n);
  const double area = 4.0 * std::numbers::pi * std::pow(radii.prod(), 2.0 / 3.0);
  const double s = std::min(0.6 * std::sqrt(area / static_cast<double>(n)), 0.25);

  train::AvatarState st;
  auto& g = st.gaussians;
  g = core::make_gaussian_set(n, spec.feature_dim);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 p = surface_point(radii, dirs[i]);
    const Vec3 nrm = surface_normal(radii, p);
    g.positions[i] = spec.center + p;
    g.rotations[i] = quat_from_z(nrm);
    g.log_scales[i] = Vec3(std::log(s), std::log(s), std::log(0.4 * s));
    g.opacity_logits[i] = logit(0.9);
    const Vec3 c = albedo(dirs[i]);
    const auto row = static_cast<Eigen::Index>(i);
    for (int ch = 0; ch < 3; ++ch) g.features(row, ch) = logit(std::clamp(c[ch] + sym(rng, 0.05), 0.02, 0.98));
    for (int k = 3; k < spec.feature_dim; ++k) g.features(row, k) = sym(rng, 0.5);
  }

  st.bank = core::ResidualFieldBank::linear_blend(n, spec.feature_dim, spec.expression_dim, true);
  st.generation.assign(n, 0);

  // colors = sigmoid(F0[0..2]) at rest
  auto& color = st.bank.field(core::Attribute::Color, core::Driver::Expression);
  const std::size_t proj = n * 3 * static_cast<std::size_t>(spec.expression_dim);
  for (int ch = 0; ch < 3; ++ch) color.params()[proj + ch * spec.feature_dim + ch] = 1.0;

  if (spec.shape == SceneShape::BlendshapeHead) {
    auto& def = st.bank.field(core::Attribute::Def, core::Driver::Expression);
    const auto shapes = head_blendshapes();
    const int k_count = std::min<int>(spec.expression_dim, static_cast<int>(shapes.size()));
    const auto d = static_cast<std::size_t>(spec.expression_dim);
    for (int k = 0; k < k_count; ++k) {
      const Vec3 anchor = surface_point(radii, shapes[k].anchor_dir);
      for (std::size_t i = 0; i < n; ++i) {
        const double r2 = (g.positions[i] - spec.center - anchor).squaredNorm();
        const double w = std::exp(-r2 / (2.0 * shapes[k].width * shapes[k].width));
        if (w < 1e-6) continue;
        for (int o = 0; o < 3; ++o) def.params()[i * 3 * d + o * d + k] = w * shapes[k].motion[o];
        for (int o = 0; o < 3; ++o) color.params()[i * 3 * d + o * d + k] = w * shapes[k].darken;
      }
    }
  }
  return st;
}

core::ExpressionParams frame_expression(const SceneSpec& spec, int f, std::mt19937_64& rng) {
  core::ExpressionParams theta{VecX::Zero(spec.expression_dim)};
  if (f == 0) return theta;
  const int active =
      spec.shape == SceneShape::BlendshapeHead
          ? std::min<int>(spec.expression_dim, static_cast<int>(head_blendshapes().size()))
          : spec.expression_dim;
  for (int k = 0; k < active; ++k) theta.coefficients[k] = 0.6 * u01(rng);
  theta.coefficients[(f - 1) % active] = 1.0;
  return theta;
}

}  // namespace

Vec3 shape_radii(SceneShape s) {
  return s == SceneShape::Sphere ? Vec3::Constant(0.5) : Vec3(0.42, 0.5, 0.45);
}

double shape_sdf(SceneShape s, const Vec3& center, const Vec3& x) {
  const Vec3 r = shape_radii(s);
  const Vec3 p = x - center;
  if (s == SceneShape::Sphere) return p.norm() - r.x();
  return (p.cwiseQuotient(r).norm() - 1.0) * r.minCoeff();
}

std::vector<render::Camera> camera_ring(int views, int width, int height) {
  std::vector<render::Camera> cams;
  for (int v = 0; v < views; ++v) {
    const double az = views == 1 ? 0.0 : (-60.0 + 120.0 * v / (views - 1)) * std::numbers::pi / 180.0;
    const double el = (v % 2 == 0 ? 0.1 : -0.1);
    const Vec3 eye = 3.0 * Vec3(std::sin(az) * std::cos(el), std::sin(el), std::cos(az) * std::cos(el));
    cams.push_back(render::Camera::look_at(eye, Vec3::Zero(), Vec3(0, 1, 0), 2.0 * width, width, height));
  }
  return cams;
}

geometry::SdfGrid shape_grid(const SceneSpec& spec) {
  auto grid = geometry::SdfGrid::from_function(
      spec.grid_resolution, Vec3::Constant(-1.0), Vec3::Constant(1.0),
      [&](const Vec3& x) { return shape_sdf(spec.shape, spec.center, x); }, spec.eta_dim);
  for (std::size_t v = 0; v < grid.vertex_count(); ++v) {
    const Vec3 off = grid.vertex_position(v) - spec.center;
    const Vec3 dir = off.norm() > 1e-12 ? Vec3(off.normalized()) : Vec3(0, 0, 1);
    const Vec3 c = albedo(dir);
    for (int ch = 0; ch < 3; ++ch) grid.eta[v * spec.eta_dim + ch] = logit(c[ch]);
  }
  return grid;
}

SceneBundle make_synthetic_scene(const SceneSpec& spec, const control::ControlConfig& ctl) {
  spec.validate();
  ctl.validate(spec.gaussians);
  std::mt19937_64 rng(spec.seed);

  SceneBundle b;
  b.spec = spec;
  b.control = ctl;
  b.control.enable_split = false;
  SceneTruth truth{make_truth(spec, rng), shape_grid(spec)};
  b.prior = geometry::extract_surface(truth.grid);

  const auto cams = camera_ring(spec.views, spec.width, spec.height);
  const auto& g = truth.avatar.gaussians;
  const std::size_t lm_count = std::min(spec.landmarks, g.size());
  for (int f = 0; f < spec.frames; ++f) {
    train::TrainFrame fr;
    fr.theta = frame_expression(spec, f, rng);
    fr.beta = core::PoseParams{};
    if (f > 0) {
      const Vec3 aa(sym(rng, 0.05), sym(rng, 0.15), sym(rng, 0.03));
      fr.transform = {axis_angle_to_quat(aa), Vec3(sym(rng, 0.02), sym(rng, 0.02), sym(rng, 0.02))};
    }
    const auto world = core::assemble_avatar(g, fr.theta, fr.beta, fr.transform, truth.avatar.bank, b.control);
    for (const auto& cam : cams) {
      train::View view{cam, render::rasterize(world, cam, spec.background), {}};
      view.mask = view.target.alpha;
      fr.views.push_back(std::move(view));
    }
    const auto deformed = core::deform_geometry(g, fr.theta, fr.beta, truth.avatar.bank);
    for (std::size_t l = 0; l < lm_count; ++l) fr.landmarks.push_back(deformed.positions[l * g.size() / lm_count]);
    b.frames.push_back(std::move(fr));
  }
  b.truth = std::move(truth);
  return b;
}

namespace {

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }
Vec3 vec_from(const json& j) { return Vec3(j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()); }

json camera_json(const render::Camera& c) {
  const auto& q = c.world_to_camera.rotation;
  return {{"fx", c.fx},
          {"fy", c.fy},
          {"cx", c.cx},
          {"cy", c.cy},
          {"width", c.width},
          {"height", c.height},
          {"rotation", json::array({q[0], q[1], q[2], q[3]})},
          {"translation", vec_json(c.world_to_camera.translation)}};
}

render::Camera camera_from(const json& j) {
  render::Camera c;
  c.fx = j.at("fx").get<double>();
  c.fy = j.at("fy").get<double>();
  c.cx = j.at("cx").get<double>();
  c.cy = j.at("cy").get<double>();
  c.width = j.at("width").get<int>();
  c.height = j.at("height").get<int>();
  const auto& q = j.at("rotation");
  c.world_to_camera.rotation = Vec4(q.at(0).get<double>(), q.at(1).get<double>(), q.at(2).get<double>(),
                                    q.at(3).get<double>());
  c.world_to_camera.translation = vec_from(j.at("translation"));
  c.validate();
  return c;
}

json control_json(const control::ControlConfig& c) {
  return {{"tau_control", c.tau_control},     {"tau_split", c.tau_split},
          {"radius", c.radius},               {"sigma", c.sigma},
          {"max_gaussians", c.max_gaussians}, {"split_epsilon", c.split_epsilon},
          {"split_scale_factor", c.split_scale_factor}, {"enable_control", c.enable_control},
          {"split_interval", c.split_interval}, {"split_generations", c.split_generations}};
}

control::ControlConfig control_from(const json& j) {
  control::ControlConfig c;
  c.tau_control = j.at("tau_control").get<double>();
  c.tau_split = j.at("tau_split").get<double>();
  c.radius = j.at("radius").get<double>();
  c.sigma = j.at("sigma").get<double>();
  c.max_gaussians = j.at("max_gaussians").get<std::size_t>();
  c.split_epsilon = j.at("split_epsilon").get<double>();
  c.split_scale_factor = j.at("split_scale_factor").get<double>();
  c.enable_control = j.at("enable_control").get<bool>();
  c.split_interval = j.at("split_interval").get<int>();
  c.split_generations = j.at("split_generations").get<int>();
  return c;
}

json spec_json(const SceneSpec& s) {
  return {{"shape", to_string(s.shape)}, {"gaussians", s.gaussians}, {"views", s.views},
          {"frames", s.frames},          {"seed", s.seed},           {"width", s.width},
          {"height", s.height},          {"expression_dim", s.expression_dim},
          {"feature_dim", s.feature_dim}, {"eta_dim", s.eta_dim},   {"grid_resolution", s.grid_resolution},
          {"center", vec_json(s.center)}, {"landmarks", s.landmarks}, {"background", vec_json(s.background)}};
}

SceneSpec spec_from(const json& j) {
  SceneSpec s;
  s.shape = scene_shape_from_string(j.at("shape").get<std::string>());
  s.gaussians = j.at("gaussians").get<std::size_t>();
  s.views = j.at("views").get<int>();
  s.frames = j.at("frames").get<int>();
  s.seed = j.at("seed").get<std::uint64_t>();
  s.width = j.at("width").get<int>();
  s.height = j.at("height").get<int>();
  s.expression_dim = j.at("expression_dim").get<int>();
  s.feature_dim = j.at("feature_dim").get<int>();
  s.eta_dim = j.at("eta_dim").get<int>();
  s.grid_resolution = j.at("grid_resolution").get<int>();
  s.center = vec_from(j.at("center"));
  s.landmarks = j.at("landmarks").get<std::size_t>();
  s.background = vec_from(j.at("background"));
  return s;
}

std::string view_stem(std::size_t f, std::size_t v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "f%03zu_v%02zu", f, v);
  return buf;
}

fs::path require(const fs::path& p) {
  if (!fs::exists(p)) throw Error(ErrorCode::Io, "missing scene file: " + p.string());
  return p;
}

}  // namespace

void save_scene(const SceneBundle& b, const fs::path& dir) {
  fs::create_directories(dir / "targets");
  fs::create_directories(dir / "masks");
  json frames = json::array();
  std::vector<TrackRow> track;
  for (std::size_t f = 0; f < b.frames.size(); ++f) {
    const auto& fr = b.frames[f];
    track.push_back({fr.theta, fr.beta, fr.transform});
    json views = json::array();
    for (std::size_t v = 0; v < fr.views.size(); ++v) {
      const auto& view = fr.views[v];
      const std::string stem = view_stem(f, v);
      json jv = {{"camera", camera_json(view.camera)}, {"target", "targets/" + stem + ".npy"}};
      write_frame_npy(view.target, dir / "targets" / (stem + ".npy"));
      write_png(view.target, dir / "targets" / (stem + ".png"));
      if (!view.mask.empty()) {
        const auto h = static_cast<std::size_t>(view.target.height), w = static_cast<std::size_t>(view.target.width);
        write_npy(dir / "masks" / (stem + ".npy"), {h, w}, view.mask);
        write_png_gray(view.mask, view.target.width, view.target.height, dir / "masks" / (stem + ".png"));
        jv["mask"] = "masks/" + stem + ".npy";
      }
      views.push_back(std::move(jv));
    }
    json lms = json::array();
    for (const auto& l : fr.landmarks) lms.push_back(vec_json(l));
    frames.push_back({{"views", std::move(views)}, {"landmarks", std::move(lms)}});
  }
  save_track(track, dir / "track.csv");
  save_mesh(b.prior, dir / "prior.obj");
  json doc = {{"format", "gsavatar-scene"},
              {"version", 1},
              {"spec", spec_json(b.spec)},
              {"control", control_json(b.control)},
              {"track", "track.csv"},
              {"prior", "prior.obj"},
              {"frames", std::move(frames)}};
  if (b.truth) {
    fs::create_directories(dir / "ground_truth");
    save_avatar(b.truth->avatar, dir / "ground_truth" / "avatar.json");
    save_gsav(b.truth->avatar.gaussians, dir / "ground_truth" / "gaussians.gsav");
    write_text(dir / "ground_truth" / "grid.json", grid_json(b.truth->grid).dump() + "\n");
    doc["ground_truth"] = {{"avatar", "ground_truth/avatar.json"}, {"grid", "ground_truth/grid.json"}};
  }
  write_text(dir / "scene.json", doc.dump(2) + "\n");
}

SceneBundle load_scene(const fs::path& dir) {
  const json doc = read_json(require(dir / "scene.json"));
  if (doc.value("format", "") != "gsavatar-scene")
    throw Error(ErrorCode::Parse, (dir / "scene.json").string() + ": not a gsavatar scene");
  SceneBundle b;
  try {
    b.spec = spec_from(doc.at("spec"));
    b.control = control_from(doc.at("control"));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Parse, (dir / "scene.json").string() + ": " + e.what());
  }
  const auto track = load_track(require(dir / doc.at("track").get<std::string>()));
  const auto& frames = doc.at("frames");
  if (frames.size() != track.size())
    throw Error(ErrorCode::LengthMismatch, "scene has " + std::to_string(frames.size()) + " frames but the track has " +
                                               std::to_string(track.size()) + " rows");
  for (std::size_t f = 0; f < frames.size(); ++f) {
    train::TrainFrame fr;
    fr.theta = track[f].theta;
    fr.beta = track[f].beta;
    fr.transform = track[f].transform;
    for (const auto& jv : frames[f].at("views")) {
      train::View view;
      view.camera = camera_from(jv.at("camera"));
      view.target = read_frame(require(dir / jv.at("target").get<std::string>()));
      if (view.target.width != view.camera.width || view.target.height != view.camera.height)
        throw Error(ErrorCode::LengthMismatch, "target size disagrees with its camera: " + jv.at("target").get<std::string>());
      if (jv.contains("mask")) {
        const auto path = require(dir / jv.at("mask").get<std::string>());
        auto arr = read_npy(path);
        if (arr.data.size() != view.target.pixel_count())
          throw Error(ErrorCode::LengthMismatch, "mask size disagrees with its target: " + path.string());
        view.mask = std::move(arr.data);
      }
      fr.views.push_back(std::move(view));
    }
    for (const auto& l : frames[f].at("landmarks")) fr.landmarks.push_back(vec_from(l));
    b.frames.push_back(std::move(fr));
  }
  b.prior = load_mesh(require(dir / doc.at("prior").get<std::string>()));
  if (doc.contains("ground_truth")) {
    const auto& gt = doc.at("ground_truth");
    SceneTruth t{load_avatar(require(dir / gt.at("avatar").get<std::string>())),
                 grid_from_json(read_json(require(dir / gt.at("grid").get<std::string>())))};
    b.truth = std::move(t);
  }
  return b;
}

}  // namespace gsavatar::io
