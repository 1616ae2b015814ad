#include "gsavatar/render/rasterizer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gsavatar/common/error.hpp"
#include "gsavatar/common/parallel.hpp"
#include "gsavatar/simd/kernels.hpp"

namespace gsavatar::render {

namespace {

struct Splat {
  std::size_t index;
  Projection proj;
  double a, b, c;  // inverse 2D covariance [[a b] [b c]]
  double opacity;
  int x0, x1, y0, y1;
};

struct Prepared {
  std::vector<Splat> splats;  // depth order, index tie-break
  std::vector<std::vector<std::uint32_t>> tiles;
  int tiles_x = 0, tiles_y = 0;
};

Prepared prepare(const core::WorldGaussians& g, const Camera& cam, RasterStats& stats) {
  cam.validate();
  const std::size_t n = g.size();
  if (g.colors.size() != n || g.rotations.size() != n || g.log_scales.size() != n || g.opacity_logits.size() != n)
    throw Error(ErrorCode::LengthMismatch, "length mismatch: world gaussian arrays");
  Prepared p;
  for (std::size_t i = 0; i < n; ++i) {
    auto proj = project_gaussian(g.positions[i], g.rotations[i], g.log_scales[i], cam);
    if (!proj) {
      ++stats.culled;
      continue;
    }
    const double det = proj->cov.determinant();
    if (!(det >= 1e-12)) {
      ++stats.singular;
      continue;
    }
    const Mat2 inv = proj->cov.inverse();
    const double rx = std::sqrt(kSupportQ * proj->cov(0, 0)), ry = std::sqrt(kSupportQ * proj->cov(1, 1));
    Splat s{i, *proj, inv(0, 0), 0.5 * (inv(0, 1) + inv(1, 0)), inv(1, 1), sigmoid(g.opacity_logits[i]),
            std::max(0, static_cast<int>(std::ceil(proj->mean.x() - rx))),
            std::min(cam.width - 1, static_cast<int>(std::floor(proj->mean.x() + rx))),
            std::max(0, static_cast<int>(std::ceil(proj->mean.y() - ry))),
            std::min(cam.height - 1, static_cast<int>(std::floor(proj->mean.y() + ry)))};
    if (s.x0 > s.x1 || s.y0 > s.y1) {
      ++stats.offscreen;
      continue;
    }
    p.splats.push_back(s);
  }
  std::sort(p.splats.begin(), p.splats.end(), [](const Splat& l, const Splat& r) {
    return l.proj.depth != r.proj.depth ? l.proj.depth < r.proj.depth : l.index < r.index;
  });
  stats.visible = p.splats.size();

  p.tiles_x = (cam.width + kTileSize - 1) / kTileSize;
  p.tiles_y = (cam.height + kTileSize - 1) / kTileSize;
  p.tiles.resize(static_cast<std::size_t>(p.tiles_x * p.tiles_y));
  for (std::uint32_t k = 0; k < p.splats.size(); ++k) {
    const auto& s = p.splats[k];
    for (int ty = s.y0 / kTileSize; ty <= s.y1 / kTileSize; ++ty)
      for (int tx = s.x0 / kTileSize; tx <= s.x1 / kTileSize; ++tx)
        p.tiles[static_cast<std::size_t>(ty * p.tiles_x + tx)].push_back(k);
  }
  return p;
}

struct TileSpan {
  int x0, x1, y0, y1;  // inclusive
};

TileSpan tile_span(const Prepared& p, std::size_t tile, const Camera& cam) {
  const int tx = static_cast<int>(tile) % p.tiles_x, ty = static_cast<int>(tile) / p.tiles_x;
  return {tx * kTileSize, std::min(cam.width, (tx + 1) * kTileSize) - 1, ty * kTileSize,
          std::min(cam.height, (ty + 1) * kTileSize) - 1};
}

/// Exponent rows -q/2 for every splat of a tile on one pixel row.
void power_rows(const Prepared& p, const std::vector<std::uint32_t>& list, const TileSpan& ts, int y,
                std::vector<double>& out) {
  const auto& k = simd::active();
  const std::size_t w = static_cast<std::size_t>(ts.x1 - ts.x0 + 1);
  out.resize(list.size() * w);
  for (std::size_t l = 0; l < list.size(); ++l) {
    const Splat& s = p.splats[list[l]];
    double* row = out.data() + l * w;
    if (y < s.y0 || y > s.y1) {
      std::fill(row, row + w, -HUGE_VAL);
      continue;
    }
    k.splat_power_row(s.a, s.b, s.c, ts.x0 - s.proj.mean.x(), y - s.proj.mean.y(), w, row);
  }
}

inline bool in_support(double power) { return power >= -0.5 * kSupportQ; }

struct Hit {
  std::uint32_t slot;  // position in the tile list
  double alpha;
  double transmittance;  // before this splat
  double gauss;          // exp(power)
  bool clamped;
};

/// Composites one pixel; fills hits when requested and returns final T.
template <typename OnHit>
double composite(const Prepared& p, const core::WorldGaussians& g, const std::vector<std::uint32_t>& list,
                 const double* powers, std::size_t stride, Vec3& color, OnHit&& on_hit) {
  double t = 1.0;
  for (std::size_t l = 0; l < list.size(); ++l) {
    const double pw = powers[l * stride];
    if (!in_support(pw)) continue;
    const Splat& s = p.splats[list[l]];
    const double gauss = std::exp(pw);
    const double raw = s.opacity * gauss;
    const bool clamped = raw > kAlphaMax;
    const double alpha = clamped ? kAlphaMax : raw;
    if (!(alpha > 0)) continue;
    color += (t * alpha) * g.colors[s.index];
    on_hit(Hit{static_cast<std::uint32_t>(l), alpha, t, gauss, clamped});
    t *= 1.0 - alpha;
    if (t < kTransmittanceMin) break;
  }
  return t;
}

}  // namespace

Frame rasterize(const core::WorldGaussians& g, const Camera& cam, const Vec3& background, RasterStats* stats) {
  RasterStats local;
  const Prepared p = prepare(g, cam, local);
  if (stats) *stats = local;
  Frame f = Frame::filled(cam.width, cam.height, background);
  parallel_for_chunks(p.tiles.size(), [&](std::size_t tile) {
    const auto& list = p.tiles[tile];
    if (list.empty()) return;
    const TileSpan ts = tile_span(p, tile, cam);
    const std::size_t w = static_cast<std::size_t>(ts.x1 - ts.x0 + 1);
    std::vector<double> powers;
    for (int y = ts.y0; y <= ts.y1; ++y) {
      power_rows(p, list, ts, y, powers);
      for (int x = ts.x0; x <= ts.x1; ++x) {
        Vec3 color = Vec3::Zero();
        const double t = composite(p, g, list, powers.data() + (x - ts.x0), w, color, [](const Hit&) {});
        color += t * background;
        const std::size_t px = static_cast<std::size_t>(y) * cam.width + x;
        for (int c = 0; c < 3; ++c) f.rgb[px * 3 + c] = color[c];
        f.alpha[px] = 1.0 - t;
      }
    }
  });
  return f;
}

namespace {

struct ScreenGrad {
  Vec2 mean = Vec2::Zero();
  double a = 0, b = 0, c = 0;
  Vec3 color = Vec3::Zero();
  double opacity = 0;

  void add(const ScreenGrad& o) {
    mean += o.mean;
    a += o.a;
    b += o.b;
    c += o.c;
    color += o.color;
    opacity += o.opacity;
  }
};

}  // namespace

core::WorldGradients rasterize_backward(const core::WorldGaussians& g, const Camera& cam, const Vec3& background,
                                        const FrameGradient& upstream) {
  RasterStats stats;
  const Prepared p = prepare(g, cam, stats);
  const std::size_t npx = static_cast<std::size_t>(cam.width) * cam.height;
  if (upstream.rgb.size() != npx * 3 || upstream.alpha.size() != npx)
    throw Error(ErrorCode::LengthMismatch, "length mismatch: frame gradient vs camera");

  std::vector<std::vector<ScreenGrad>> per_tile(p.tiles.size());
  parallel_for_chunks(p.tiles.size(), [&](std::size_t tile) {
    const auto& list = p.tiles[tile];
    if (list.empty()) return;
    auto& acc = per_tile[tile];
    acc.assign(list.size(), ScreenGrad{});
    const TileSpan ts = tile_span(p, tile, cam);
    const std::size_t w = static_cast<std::size_t>(ts.x1 - ts.x0 + 1);
    std::vector<double> powers;
    std::vector<Hit> hits;
    for (int y = ts.y0; y <= ts.y1; ++y) {
      power_rows(p, list, ts, y, powers);
      for (int x = ts.x0; x <= ts.x1; ++x) {
        const std::size_t px = static_cast<std::size_t>(y) * cam.width + x;
        const Vec3 g_rgb(upstream.rgb[px * 3], upstream.rgb[px * 3 + 1], upstream.rgb[px * 3 + 2]);
        const double g_alpha = upstream.alpha[px];
        if (g_rgb.isZero(0.0) && g_alpha == 0.0) continue;
        hits.clear();
        Vec3 color = Vec3::Zero();
        const double t_final = composite(p, g, list, powers.data() + (x - ts.x0), w, color,
                                         [&](const Hit& h) { hits.push_back(h); });
        // Walk back to front; `after` holds the color composited behind splat k.
        Vec3 after = t_final * background;
        for (auto it = hits.rbegin(); it != hits.rend(); ++it) {
          const Splat& s = p.splats[list[it->slot]];
          const Vec3& ck = g.colors[s.index];
          ScreenGrad& sg = acc[it->slot];
          sg.color += (it->transmittance * it->alpha) * g_rgb;
          const double one_minus = 1.0 - it->alpha;
          const double d_alpha = g_rgb.dot(it->transmittance * ck - after / one_minus) + g_alpha * t_final / one_minus;
          after += (it->transmittance * it->alpha) * ck;
          if (it->clamped) continue;
          sg.opacity += d_alpha * it->gauss;
          const double d_power = d_alpha * it->alpha;
          const double dx = x - s.proj.mean.x(), dy = y - s.proj.mean.y();
          sg.mean += d_power * Vec2(s.a * dx + s.b * dy, s.b * dx + s.c * dy);
          sg.a += d_power * (-0.5 * dx * dx);
          sg.b += d_power * (-dx * dy);
          sg.c += d_power * (-0.5 * dy * dy);
        }
      }
    }
  });

  // Fixed-order reduction keeps results independent of the worker count.
  std::vector<ScreenGrad> screen(p.splats.size());
  for (std::size_t tile = 0; tile < p.tiles.size(); ++tile)
    for (std::size_t l = 0; l < per_tile[tile].size(); ++l) screen[p.tiles[tile][l]].add(per_tile[tile][l]);

  core::WorldGradients out = core::WorldGradients::zeros(g.size());
  for (std::size_t k = 0; k < p.splats.size(); ++k) {
    const Splat& s = p.splats[k];
    const ScreenGrad& sg = screen[k];
    const Projection& pr = s.proj;
    const std::size_t i = s.index;
    out.colors[i] += sg.color;
    out.opacity_logits[i] += sg.opacity * s.opacity * (1.0 - s.opacity);

    // conic = cov^-1  =>  dL/dcov = -conic * dL/dconic * conic (symmetric form).
    Mat2 conic;
    conic << s.a, s.b, s.b, s.c;
    Mat2 g_conic;
    g_conic << sg.a, 0.5 * sg.b, 0.5 * sg.b, sg.c;
    const Mat2 g_cov = -conic * g_conic * conic;

    // cov = J M J^T + 0.3 I with M = V Sigma V^T.
    const Mat3 m = pr.view * pr.sigma3 * pr.view.transpose();
    const Mat3 g_m = pr.jac.transpose() * g_cov * pr.jac;
    const Eigen::Matrix<double, 2, 3> g_jac = 2.0 * g_cov * pr.jac * m;
    const Mat3 g_sigma = pr.view.transpose() * g_m * pr.view;

    // Sigma = R S^2 R^T.
    const Vec3 s2 = pr.scale.array().square();
    const Mat3 g_rot = 2.0 * g_sigma * pr.rot * s2.asDiagonal();
    const Mat3 rgr = pr.rot.transpose() * g_sigma * pr.rot;
    for (int a = 0; a < 3; ++a) out.log_scales[i][a] += 2.0 * s2[a] * rgr(a, a);
    const Vec4& q = g.rotations[i];
    out.rotations[i] += normalize_vjp<Vec4>(q, quat_to_matrix_vjp(q.normalized(), g_rot));

    // Camera-space mean: through the projected center and through J.
    const double fx = cam.fx, fy = cam.fy;
    const double tx = pr.cam.x(), ty = pr.cam.y(), tz = pr.cam.z();
    const double tz2 = tz * tz, tz3 = tz2 * tz;
    Vec3 g_t;
    g_t.x() = sg.mean.x() * fx / tz + g_jac(0, 2) * (-fx / tz2);
    g_t.y() = sg.mean.y() * fy / tz + g_jac(1, 2) * (-fy / tz2);
    g_t.z() = -sg.mean.x() * fx * tx / tz2 - sg.mean.y() * fy * ty / tz2 + g_jac(0, 0) * (-fx / tz2) +
              g_jac(0, 2) * (2.0 * fx * tx / tz3) + g_jac(1, 1) * (-fy / tz2) + g_jac(1, 2) * (2.0 * fy * ty / tz3);
    out.positions[i] += pr.view.transpose() * g_t;
  }
  return out;
}

}  // namespace gsavatar::render
