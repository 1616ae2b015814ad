#include "gsavatar/io/cli.hpp"

#include <cstdio>
#include <iostream>
#include <map>
#include <set>

#include <CLI11.hpp>
#include <json.hpp>

#include "gsavatar/common/error.hpp"
#include "gsavatar/control/controllable.hpp"
#include "gsavatar/control/split.hpp"
#include "gsavatar/core/avatar.hpp"
#include "gsavatar/geometry/marching_tets.hpp"
#include "gsavatar/io/gsav.hpp"
#include "gsavatar/io/image_io.hpp"
#include "gsavatar/io/json_io.hpp"
#include "gsavatar/io/mesh_io.hpp"
#include "gsavatar/io/scene.hpp"
#include "gsavatar/io/toml_config.hpp"
#include "gsavatar/io/track_csv.hpp"
#include "gsavatar/render/rasterizer.hpp"
#include "gsavatar/train/metrics.hpp"

namespace gsavatar::io {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Options {
  std::string config;
  bool print_config = false;
  // shared
  std::string out, scene, avatar, track, init;
  int iterations = -1;
  long long seed = -1;
  // make-scene
  std::string shape = "blendshape-head";
  std::size_t gaussians = 200;
  int views = 4, frames = 4, width = 64, height = 64;
  std::size_t init_count = 500;
  // metrics
  std::string dir_a, dir_b, format = "table";
};

AppConfig effective_config(const Options& o) {
  AppConfig cfg = o.config.empty() ? parse_toml("") : load_config(o.config);
  if (o.iterations >= 0) {
    cfg.stage1.iterations = o.iterations;
    cfg.stage2.iterations = o.iterations;
  }
  if (o.seed >= 0) {
    cfg.stage1.seed = static_cast<std::uint64_t>(o.seed);
    cfg.stage2.seed = static_cast<std::uint64_t>(o.seed);
  }
  return cfg;
}

fs::path require_file(const std::string& p, const char* what) {
  if (p.empty()) throw Error(ErrorCode::InvalidArgument, std::string("missing ") + what);
  if (!fs::exists(p)) throw Error(ErrorCode::Io, std::string(what) + " not found: " + p);
  return p;
}

fs::path output_dir(const std::string& p) {
  if (p.empty()) throw Error(ErrorCode::InvalidArgument, "missing --out directory");
  fs::create_directories(p);
  return p;
}

int expression_dim_of(const std::vector<train::TrainFrame>& frames, int fallback) {
  return frames.empty() ? fallback : frames.front().theta.dim();
}

train::AvatarState load_avatar_any(const fs::path& path, int expression_dim, const ModelConfig& model) {
  if (path.extension() == ".json") return load_avatar(path);
  if (path.extension() != ".gsav")
    throw Error(ErrorCode::InvalidArgument, "avatar file must be .json or .gsav: " + path.string());
  train::AvatarState st;
  st.gaussians = core::validate_neutral_set(load_gsav(path));
  if (model.field_kind == "radial_basis")
    st.bank = core::ResidualFieldBank::radial_basis(st.gaussians, expression_dim,
                                                    static_cast<std::size_t>(model.rbf_centers));
  else if (model.field_kind == "linear_blend")
    st.bank = core::ResidualFieldBank::linear_blend(st.gaussians.size(), st.gaussians.feature_dim(), expression_dim);
  else
    throw Error(ErrorCode::InvalidArgument, "unknown field_kind '" + model.field_kind + "'");
  st.generation.assign(st.gaussians.size(), 0);
  return st;
}

void write_trace(const train::FitTrace& t, const fs::path& dir) {
  write_text(dir / "trace.csv", t.to_csv());
  write_text(dir / "trace.json", t.to_json());
}

void write_frame_pair(const render::Frame& f, const fs::path& dir, const std::string& stem) {
  write_png(f, dir / (stem + ".png"));
  write_frame_npy(f, dir / (stem + ".npy"));
}

std::string stem(std::size_t f, std::size_t v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "f%03zu_v%02zu", f, v);
  return buf;
}

// --- subcommands ------------------------------------------------------------

int cmd_make_scene(const Options& o) {
  const AppConfig cfg = effective_config(o);
  SceneSpec spec;
  spec.shape = scene_shape_from_string(o.shape);
  spec.gaussians = o.gaussians;
  spec.views = o.views;
  spec.frames = o.frames;
  spec.width = o.width;
  spec.height = o.height;
  spec.seed = o.seed >= 0 ? static_cast<std::uint64_t>(o.seed) : 0;
  spec.feature_dim = cfg.model.feature_dim;
  spec.eta_dim = cfg.model.eta_dim;
  spec.grid_resolution = cfg.model.grid_resolution;
  spec.background = cfg.background;
  const auto dir = output_dir(o.out);
  const auto b = make_synthetic_scene(spec, cfg.control);
  save_scene(b, dir);
  std::printf("scene frames=%zu views=%d gaussians=%zu out=%s\n", b.frames.size(), spec.views, spec.gaussians,
              dir.string().c_str());
  return 0;
}

int cmd_fit_geometry(const Options& o) {
  const AppConfig cfg = effective_config(o);
  const auto scene = load_scene(require_file(o.scene, "scene directory"));
  const auto dir = output_dir(o.out);

  train::Stage1State state;
  state.grid = geometry::SdfGrid::from_function(
      cfg.model.grid_resolution, Vec3::Constant(-1.0), Vec3::Constant(1.0),
      [](const Vec3& x) { return x.norm() - 0.5; }, cfg.model.eta_dim);
  bool expressive = false;
  for (const auto& f : scene.frames) expressive = expressive || !f.theta.coefficients.isZero();
  if (expressive && cfg.model.rbf_centers > 0 && !scene.prior.empty()) {
    const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(cfg.model.rbf_centers), scene.prior.vertices.size());
    MatX centers(static_cast<Eigen::Index>(k), 3);
    for (std::size_t i = 0; i < k; ++i)
      centers.row(static_cast<Eigen::Index>(i)) = scene.prior.vertices[i * scene.prior.vertices.size() / k].transpose();
    state.deformation = core::ResidualField::radial_basis(centers, 0.15, 3, expression_dim_of(scene.frames, 1));
  }

  const auto result = train::fit_stage1(std::move(state), scene.prior, scene.frames, cfg.stage1);
  save_mesh(result.mesh, dir / "mesh.obj");
  save_mesh(result.prior, dir / "prior_aligned.obj");
  write_text(dir / "grid.json", grid_json(result.state.grid).dump() + "\n");
  write_trace(result.trace, dir);
  const auto g = train::gaussians_from_mesh(result.state.grid, result.mesh, cfg.model.feature_dim,
                                            train::vertex_log_scale(result.state.grid, cfg.stage1),
                                            logit(cfg.stage1.vertex_opacity));
  save_gsav(g, dir / "gaussians.gsav");
  const double loss = result.trace.entries.empty() ? 0.0 : result.trace.entries.back().loss;
  std::printf("fit-geometry iterations=%d vertices=%zu triangles=%zu loss=%.6g out=%s\n", cfg.stage1.iterations,
              result.mesh.vertices.size(), result.mesh.triangles.size(), loss, dir.string().c_str());
  return 0;
}

train::AvatarState init_from_mesh(const geometry::TriangleMesh& mesh, std::size_t count, int expression_dim,
                                  const ModelConfig& model) {
  if (mesh.empty()) throw Error(ErrorCode::InvalidArgument, "scene prior mesh is empty; pass --init");
  const std::size_t n = std::min(count, mesh.vertices.size());
  const auto cs = geometry::mesh_center_scale(mesh);
  train::AvatarState st;
  st.gaussians = core::make_gaussian_set(n, model.feature_dim);
  const double s = std::log(std::max(1e-3, 1.5 * cs.scale / std::sqrt(static_cast<double>(n))));
  for (std::size_t i = 0; i < n; ++i) {
    st.gaussians.positions[i] = mesh.vertices[i * mesh.vertices.size() / n];
    st.gaussians.log_scales[i] = Vec3::Constant(s);
    st.gaussians.opacity_logits[i] = logit(0.5);
  }
  st.bank = model.field_kind == "radial_basis"
                ? core::ResidualFieldBank::radial_basis(st.gaussians, expression_dim,
                                                        static_cast<std::size_t>(model.rbf_centers))
                : core::ResidualFieldBank::linear_blend(n, model.feature_dim, expression_dim);
  st.generation.assign(n, 0);
  return st;
}

int cmd_fit_avatar(const Options& o) {
  const AppConfig cfg = effective_config(o);
  const auto scene = load_scene(require_file(o.scene, "scene directory"));
  const auto dir = output_dir(o.out);
  const int d_exp = expression_dim_of(scene.frames, cfg.model.expression_dim);
  auto state = o.init.empty() ? init_from_mesh(scene.prior, o.init_count, d_exp, cfg.model)
                              : load_avatar_any(require_file(o.init, "init file"), d_exp, cfg.model);
  const auto result = train::fit_stage2(std::move(state), scene.frames, cfg.control, cfg.stage2);
  save_avatar(result.state, dir / "avatar.json");
  save_gsav(result.state.gaussians, dir / "gaussians.gsav");
  write_trace(result.trace, dir);
  json splits = json::array();
  for (const auto& r : result.splits) splits.push_back(split_report_json(r));
  write_text(dir / "splits.json", splits.dump(2) + "\n");
  const double p = train::evaluate_psnr(result.state, scene.frames, cfg.control, cfg.stage2.background);
  std::printf("fit-avatar iterations=%d gaussians=%zu splits=%zu psnr=%.4f out=%s\n", cfg.stage2.iterations,
              result.state.gaussians.size(), result.splits.size(), p, dir.string().c_str());
  return 0;
}

// Renders `avatar` with the track rows and the cameras of the first frame of `scene`.
int render_track(const train::AvatarState& avatar, const std::vector<TrackRow>& track,
                 const std::vector<render::Camera>& cams, const AppConfig& cfg, const fs::path& dir) {
  avatar.bank.check_compatible(avatar.gaussians, track.empty() ? avatar.bank.expression_dim() : track[0].theta.dim());
  control::ControlConfig ctl = cfg.control;
  ctl.enable_split = false;
  for (std::size_t f = 0; f < track.size(); ++f) {
    const auto world = core::assemble_avatar(avatar.gaussians, track[f].theta, track[f].beta, track[f].transform,
                                             avatar.bank, ctl);
    for (std::size_t v = 0; v < cams.size(); ++v)
      write_frame_pair(render::rasterize(world, cams[v], cfg.background), dir, stem(f, v));
  }
  std::printf("rendered frames=%zu views=%zu out=%s\n", track.size(), cams.size(), dir.string().c_str());
  return 0;
}

std::vector<render::Camera> scene_cameras(const SceneBundle& s) {
  std::vector<render::Camera> cams;
  if (!s.frames.empty())
    for (const auto& v : s.frames.front().views) cams.push_back(v.camera);
  return cams;
}

std::vector<TrackRow> scene_track(const SceneBundle& s) {
  std::vector<TrackRow> rows;
  for (const auto& f : s.frames) rows.push_back({f.theta, f.beta, f.transform});
  return rows;
}

int cmd_render(const Options& o) {
  const AppConfig cfg = effective_config(o);
  const auto avatar_path = require_file(o.avatar, "avatar file");
  const auto scene = load_scene(require_file(o.scene, "scene directory"));
  const auto track = o.track.empty() ? scene_track(scene) : load_track(require_file(o.track, "track file"));
  const int d_exp = track.empty() ? cfg.model.expression_dim : track.front().theta.dim();
  const auto avatar = load_avatar_any(avatar_path, d_exp, cfg.model);
  return render_track(avatar, track, scene_cameras(scene), cfg, output_dir(o.out));
}

int cmd_reenact(const Options& o) {
  const AppConfig cfg = effective_config(o);
  const auto avatar = load_avatar_any(require_file(o.avatar, "avatar file"), cfg.model.expression_dim, cfg.model);
  const auto driver = load_scene(require_file(o.scene, "driving scene directory"));
  auto track = scene_track(driver);
  const int d = avatar.bank.expression_dim();
  for (auto& row : track) {
    // tracks of a different expression width are truncated or zero-padded
    VecX theta = VecX::Zero(d);
    const auto m = std::min<Eigen::Index>(d, row.theta.coefficients.size());
    theta.head(m) = row.theta.coefficients.head(m);
    row.theta.coefficients = theta;
  }
  return render_track(avatar, track, scene_cameras(driver), cfg, output_dir(o.out));
}

std::map<std::string, fs::path> frame_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorCode::Io, "not a directory: " + dir.string());
  std::map<std::string, fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto ext = e.path().extension();
    if (ext != ".npy" && ext != ".png") continue;
    const auto key = e.path().stem().string();
    // prefer the lossless npy when both exist
    if (!out.count(key) || ext == ".npy") out[key] = e.path();
  }
  return out;
}

int cmd_metrics(const Options& o) {
  const auto a = frame_files(require_file(o.dir_a, "--a directory"));
  const auto b = frame_files(require_file(o.dir_b, "--b directory"));
  struct Row {
    std::string name;
    double psnr, ssim;
  };
  std::vector<Row> rows;
  for (const auto& [name, pa] : a) {
    const auto it = b.find(name);
    if (it == b.end()) continue;
    const auto fa = read_frame(pa), fb = read_frame(it->second);
    rows.push_back({name, train::psnr(fa, fb), train::ssim(fa, fb)});
  }
  if (rows.empty()) throw Error(ErrorCode::InvalidArgument, "no frames with matching names in --a and --b");
  double mp = 0, ms = 0;
  for (const auto& r : rows) {
    mp += r.psnr;
    ms += r.ssim;
  }
  mp /= static_cast<double>(rows.size());
  ms /= static_cast<double>(rows.size());
  if (o.format == "json") {
    json j = {{"frames", json::array()}, {"mean", {{"psnr", mp}, {"ssim", ms}}}};
    for (const auto& r : rows) j["frames"].push_back({{"name", r.name}, {"psnr", r.psnr}, {"ssim", r.ssim}});
    std::printf("%s\n", j.dump(2).c_str());
  } else if (o.format == "csv") {
    std::printf("frame,psnr,ssim\n");
    for (const auto& r : rows) std::printf("%s,%.6f,%.6f\n", r.name.c_str(), r.psnr, r.ssim);
    std::printf("mean,%.6f,%.6f\n", mp, ms);
  } else {
    std::printf("%-16s %10s %8s\n", "frame", "psnr_db", "ssim");
    for (const auto& r : rows) std::printf("%-16s %10.4f %8.6f\n", r.name.c_str(), r.psnr, r.ssim);
    std::printf("%-16s %10.4f %8.6f\n", "mean", mp, ms);
  }
  return 0;
}

int cmd_split_report(const Options& o) {
  const AppConfig cfg = effective_config(o);
  const auto scene = load_scene(require_file(o.scene, "scene directory"));
  const auto avatar = load_avatar_any(require_file(o.avatar, "avatar file"),
                                      expression_dim_of(scene.frames, cfg.model.expression_dim), cfg.model);
  std::vector<double> mags;
  std::vector<Vec3> dirs;
  train::split_signal(avatar, scene.frames, mags, dirs);
  json sweep = json::array();
  std::printf("%-10s %8s\n", "tau_split", "splits");
  for (double tau : {0.1, 0.15, 0.2, 0.25, 0.3, 0.4, 0.5}) {
    const auto c = control::split_candidates(mags, tau);
    std::printf("%-10.3f %8zu\n", tau, c.size());
    sweep.push_back({{"tau_split", tau}, {"splits", c.size()}});
  }
  const auto chosen = control::split_candidates(mags, cfg.control.tau_split);
  std::printf("configured tau_split=%.3f candidates=%zu of %zu\n", cfg.control.tau_split, chosen.size(), mags.size());
  if (!o.out.empty()) {
    json j = {{"tau_split", cfg.control.tau_split}, {"sweep", sweep}, {"candidates", json::array()}};
    for (auto i : chosen) j["candidates"].push_back({{"index", i}, {"magnitude", mags[i]}});
    write_text(output_dir(o.out) / "split_report.json", j.dump(2) + "\n");
  }
  return 0;
}

int fail(ErrorCode code, const std::string& msg, int status) {
  std::string line = msg;
  for (auto& ch : line)
    if (ch == '\n' || ch == '\r') ch = ' ';
  std::fprintf(stderr, "error: %s: %s\n", to_string(code), line.c_str());
  return status;
}

}  // namespace

int run_cli(int argc, char** argv) {
  Options o;
  CLI::App app{"Expression-aware Gaussian head avatars: fitting, rendering and evaluation", "gsavatar"};
  app.require_subcommand(0, 1);
  app.add_option("--config", o.config, "TOML configuration file")->check(CLI::ExistingFile);
  app.add_flag("--print-config", o.print_config, "Print the effective configuration as TOML and exit");

  auto* make = app.add_subcommand("make-scene", "Generate a synthetic scene bundle with ground truth");
  make->add_option("--out", o.out, "Output directory")->required();
  make->add_option("--seed", o.seed, "Generator seed")->check(CLI::NonNegativeNumber);
  make->add_option("--shape", o.shape, "sphere or blendshape-head");
  make->add_option("--gaussians", o.gaussians, "Ground-truth Gaussian count");
  make->add_option("--views", o.views, "Cameras per frame");
  make->add_option("--frames", o.frames, "Expression frames");
  make->add_option("--width", o.width, "Image width");
  make->add_option("--height", o.height, "Image height");

  auto* geo = app.add_subcommand("fit-geometry", "Stage I: fit the SDF grid against the scene and its prior mesh");
  geo->add_option("--scene", o.scene, "Scene directory")->required();
  geo->add_option("--out", o.out, "Output directory")->required();
  geo->add_option("--iterations", o.iterations, "Override stage1.iterations");
  geo->add_option("--seed", o.seed, "Override stage1.seed")->check(CLI::NonNegativeNumber);

  auto* fit = app.add_subcommand("fit-avatar", "Stage II: fit Gaussians and residual fields to the scene");
  fit->add_option("--scene", o.scene, "Scene directory")->required();
  fit->add_option("--out", o.out, "Output directory")->required();
  fit->add_option("--init", o.init, "Initial Gaussians (.gsav) or avatar (.json); default: prior mesh vertices");
  fit->add_option("--init-count", o.init_count, "Gaussians taken from the prior mesh without --init");
  fit->add_option("--iterations", o.iterations, "Override stage2.iterations");
  fit->add_option("--seed", o.seed, "Override stage2.seed")->check(CLI::NonNegativeNumber);

  auto* ren = app.add_subcommand("render", "Render an avatar with a scene's cameras and track");
  ren->add_option("--avatar", o.avatar, "Avatar (.json) or Gaussians (.gsav)")->required();
  ren->add_option("--scene", o.scene, "Scene directory supplying cameras (and the track)")->required();
  ren->add_option("--track", o.track, "Track CSV overriding the scene track");
  ren->add_option("--out", o.out, "Output directory")->required();

  auto* re = app.add_subcommand("reenact", "Drive an avatar with another scene's parameter track");
  re->add_option("--avatar", o.avatar, "Avatar (.json) to drive")->required();
  re->add_option("--scene", o.scene, "Driving scene directory")->required();
  re->add_option("--out", o.out, "Output directory")->required();

  auto* met = app.add_subcommand("metrics", "PSNR/SSIM table between same-named frames of two directories");
  met->add_option("--a", o.dir_a, "First directory")->required();
  met->add_option("--b", o.dir_b, "Second directory")->required();
  met->add_option("--format", o.format, "table, csv or json")->check(CLI::IsMember({"table", "csv", "json"}));

  auto* spl = app.add_subcommand("split-report", "Split candidates of an avatar over a scene, with a threshold sweep");
  spl->add_option("--avatar", o.avatar, "Avatar (.json)")->required();
  spl->add_option("--scene", o.scene, "Scene directory")->required();
  spl->add_option("--out", o.out, "Optional output directory for split_report.json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(ErrorCode::InvalidArgument, std::string("usage: ") + e.what(), 2);
  }

  try {
    if (o.print_config) {
      std::cout << to_toml(effective_config(o));
      return 0;
    }
    if (*make) return cmd_make_scene(o);
    if (*geo) return cmd_fit_geometry(o);
    if (*fit) return cmd_fit_avatar(o);
    if (*ren) return cmd_render(o);
    if (*re) return cmd_reenact(o);
    if (*met) return cmd_metrics(o);
    if (*spl) return cmd_split_report(o);
    std::cout << app.help();
    return 2;
  } catch (const Error& e) {
    return fail(e.code(), e.what(), 1);
  } catch (const fs::filesystem_error& e) {
    return fail(ErrorCode::Io, e.what(), 1);
  } catch (const nlohmann::json::exception& e) {
    return fail(ErrorCode::Parse, e.what(), 1);
  } catch (const std::exception& e) {
    return fail(ErrorCode::InvalidArgument, e.what(), 1);
  }
}

}  // namespace gsavatar::io
