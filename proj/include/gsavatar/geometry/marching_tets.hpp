#pragma once

#include <span>
#include <vector>

#include "gsavatar/geometry/mesh.hpp"
#include "gsavatar/geometry/sdf_grid.hpp"

namespace gsavatar::geometry {

/// Marching tetrahedra over the grid's fixed decomposition. Lattice values
/// s >= 0 count as outside. Each output vertex records its edge crossing so
/// vertex positions can be differentiated with respect to s.
TriangleMesh extract_surface(const SdfGrid& grid);

/// d v / d s_inside and d v / d s_outside for one extracted vertex.
struct CrossingJacobian {
  Vec3 d_inside;
  Vec3 d_outside;
};
CrossingJacobian crossing_jacobian(const SdfGrid& grid, const EdgeCrossing& c);

/// Interpolated eta per extracted vertex, row-major M x feature_dim.
std::vector<double> vertex_features(const SdfGrid& grid, const TriangleMesh& mesh);

/// Accumulates lattice gradients from gradients on extracted vertex
/// positions and (optionally) on the interpolated vertex features.
void extract_surface_backward(const SdfGrid& grid, const TriangleMesh& mesh, std::span<const Vec3> d_vertices,
                              std::span<const double> d_features, std::vector<double>& d_sdf,
                              std::vector<double>& d_eta);

}  // namespace gsavatar::geometry
