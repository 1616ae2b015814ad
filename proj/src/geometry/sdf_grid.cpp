#include "gsavatar/geometry/sdf_grid.hpp"

#include <algorithm>
#include <cmath>

#include "gsavatar/common/error.hpp"

namespace gsavatar::geometry {

SdfGrid SdfGrid::from_function(int resolution, const Vec3& lower, const Vec3& upper,
                               const std::function<double(const Vec3&)>& sdf_fn, int feature_dim) {
  SdfGrid g;
  g.resolution = resolution;
  g.lower = lower;
  g.upper = upper;
  g.feature_dim = feature_dim;
  if (resolution < 1 || !((upper - lower).array() > 0).all())
    throw Error(ErrorCode::InvalidArgument, "sdf grid needs resolution >= 1 and a non-empty box");
  g.sdf.resize(g.vertex_count());
  g.eta.assign(g.vertex_count() * static_cast<std::size_t>(feature_dim), 0.0);
  for (std::size_t id = 0; id < g.vertex_count(); ++id) g.sdf[id] = sdf_fn(g.vertex_position(id));
  return g;
}

std::size_t SdfGrid::vertex_count() const {
  const auto p = static_cast<std::size_t>(points_per_axis());
  return p * p * p;
}

std::size_t SdfGrid::vertex_id(int i, int j, int k) const {
  const auto p = static_cast<std::size_t>(points_per_axis());
  return (static_cast<std::size_t>(k) * p + static_cast<std::size_t>(j)) * p + static_cast<std::size_t>(i);
}

std::array<int, 3> SdfGrid::vertex_coords(std::size_t id) const {
  const auto p = static_cast<std::size_t>(points_per_axis());
  return {static_cast<int>(id % p), static_cast<int>((id / p) % p), static_cast<int>(id / (p * p))};
}

Vec3 SdfGrid::spacing() const { return (upper - lower) / static_cast<double>(resolution); }

Vec3 SdfGrid::vertex_position(std::size_t id) const {
  const auto c = vertex_coords(id);
  const Vec3 h = spacing();
  return Vec3(lower.x() + c[0] * h.x(), lower.y() + c[1] * h.y(), lower.z() + c[2] * h.z());
}

std::array<std::size_t, 4> SdfGrid::tet_vertices(int i, int j, int k, int t) const {
  std::array<int, 3> c{i, j, k};
  std::array<std::size_t, 4> v{};
  v[0] = vertex_id(c[0], c[1], c[2]);
  for (int step = 0; step < 3; ++step) {
    ++c[kTetAxes[t][step]];
    v[step + 1] = vertex_id(c[0], c[1], c[2]);
  }
  return v;
}

void SdfGrid::validate() const {
  if (sdf.size() != vertex_count()) throw Error(ErrorCode::LengthMismatch, "sdf array size mismatch");
  if (eta.size() != vertex_count() * static_cast<std::size_t>(feature_dim))
    throw Error(ErrorCode::LengthMismatch, "eta array size mismatch");
  for (double v : sdf)
    if (!std::isfinite(v)) throw Error(ErrorCode::NonFinite, "non-finite sdf value");
}

namespace {

struct CellLocation {
  int cell[3];
  double local[3];
};

CellLocation locate(const SdfGrid& grid, const Vec3& x) {
  const double tol = 1e-12;
  for (int a = 0; a < 3; ++a)
    if (!(x[a] >= grid.lower[a] - tol && x[a] <= grid.upper[a] + tol))
      throw Error(ErrorCode::OutOfBounds, "point outside sdf grid bounds");
  const Vec3 h = grid.spacing();
  CellLocation loc{};
  for (int a = 0; a < 3; ++a) {
    const double u = (x[a] - grid.lower[a]) / h[a];
    const int c = std::clamp(static_cast<int>(std::floor(u)), 0, grid.resolution - 1);
    loc.cell[a] = c;
    loc.local[a] = u - c;
  }
  return loc;
}

SdfSample interpolate(const SdfGrid& grid, const std::array<std::size_t, 4>& verts, const double w[4]) {
  SdfSample out{0.0, VecX::Zero(grid.feature_dim)};
  for (int v = 0; v < 4; ++v) {
    out.s += w[v] * grid.sdf[verts[v]];
    const auto e = grid.eta_at(verts[v]);
    for (int f = 0; f < grid.feature_dim; ++f) out.eta[f] += w[v] * e[f];
  }
  return out;
}

SdfSample eval_with_tet(const SdfGrid& grid, const CellLocation& loc, int t) {
  const auto& axes = SdfGrid::kTetAxes[t];
  const double ua = loc.local[axes[0]], ub = loc.local[axes[1]], uc = loc.local[axes[2]];
  const double w[4] = {1.0 - ua, ua - ub, ub - uc, uc};
  return interpolate(grid, grid.tet_vertices(loc.cell[0], loc.cell[1], loc.cell[2], t), w);
}

}  // namespace

SdfSample sdf_eval(const SdfGrid& grid, const Vec3& x) {
  const CellLocation loc = locate(grid, x);
  // The containing tetrahedron orders the local coordinates descending.
  for (int t = 0; t < 6; ++t) {
    const auto& axes = SdfGrid::kTetAxes[t];
    if (loc.local[axes[0]] >= loc.local[axes[1]] && loc.local[axes[1]] >= loc.local[axes[2]])
      return eval_with_tet(grid, loc, t);
  }
  return eval_with_tet(grid, loc, 0);  // unreachable: some ordering always holds
}

SdfSample sdf_eval_in_tet(const SdfGrid& grid, int i, int j, int k, int t, const Vec3& x) {
  const Vec3 h = grid.spacing();
  CellLocation loc{{i, j, k}, {}};
  for (int a = 0; a < 3; ++a) loc.local[a] = (x[a] - grid.lower[a]) / h[a] - loc.cell[a];
  return eval_with_tet(grid, loc, t);
}

}  // namespace gsavatar::geometry
