#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "gsavatar/common/math.hpp"

namespace gsavatar::geometry {

/// Signed-distance lattice over an axis-aligned box: (R+1)^3 vertices holding
/// s (positive outside) and an eta feature vector each.
///
/// Every cube cell is cut into six tetrahedra that share the cell diagonal
/// from corner (0,0,0) to (1,1,1). Tetrahedron t walks from (0,0,0) along
/// the axes of permutation kTetAxes[t] and ends at (1,1,1), so its vertices
/// are 0, e_a, e_a + e_b, 1. Neighbouring cells use the same diagonal
/// direction, which keeps the decomposition conforming.
struct SdfGrid {
  static constexpr std::array<std::array<int, 3>, 6> kTetAxes{
      {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}}};

  int resolution = 32;
  Vec3 lower = Vec3::Constant(-1.0);
  Vec3 upper = Vec3::Constant(1.0);
  int feature_dim = 8;
  std::vector<double> sdf;
  std::vector<double> eta;  // vertex_count() x feature_dim, row-major

  static SdfGrid from_function(int resolution, const Vec3& lower, const Vec3& upper,
                               const std::function<double(const Vec3&)>& sdf_fn, int feature_dim = 8);

  int points_per_axis() const { return resolution + 1; }
  std::size_t vertex_count() const;
  std::size_t vertex_id(int i, int j, int k) const;
  std::array<int, 3> vertex_coords(std::size_t id) const;
  Vec3 vertex_position(std::size_t id) const;
  Vec3 spacing() const;
  double cell_diagonal() const { return spacing().norm(); }

  /// Lattice vertex ids of tetrahedron t in cell (i, j, k), in walk order.
  std::array<std::size_t, 4> tet_vertices(int i, int j, int k, int t) const;

  std::span<const double> eta_at(std::size_t id) const {
    return {eta.data() + id * static_cast<std::size_t>(feature_dim), static_cast<std::size_t>(feature_dim)};
  }

  void validate() const;
};

struct SdfSample {
  double s;
  VecX eta;
};

/// Barycentric interpolation inside the containing tetrahedron.
SdfSample sdf_eval(const SdfGrid& grid, const Vec3& x);

/// Same interpolation using a caller-chosen tetrahedron (for face-continuity
/// checks); weights may leave [0,1] if x is outside that tetrahedron.
SdfSample sdf_eval_in_tet(const SdfGrid& grid, int i, int j, int k, int t, const Vec3& x);

}  // namespace gsavatar::geometry
