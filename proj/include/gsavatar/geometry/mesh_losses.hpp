#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "gsavatar/geometry/mesh.hpp"

namespace gsavatar::geometry {

struct CenterScale {
  Vec3 center;
  double scale;  // mean distance of the vertices to the center
};

CenterScale mesh_center_scale(std::span<const Vec3> vertices);
inline CenterScale mesh_center_scale(const TriangleMesh& mesh) { return mesh_center_scale(mesh.vertices); }

struct LossAndGrad {
  double loss = 0.0;
  std::vector<Vec3> grad;
};

/// |c_prior - c_pred|^2 + (s_prior - s_pred)^2, gradient on pred vertices.
LossAndGrad mesh_alignment_loss(const TriangleMesh& prior, const TriangleMesh& pred);
LossAndGrad mesh_alignment_loss(const CenterScale& prior, std::span<const Vec3> pred);

struct LaplacianLoss {
  double loss = 0.0;
  std::vector<Vec3> grad;
  std::size_t isolated = 0;  // evaluated vertices without neighbours
};

/// Uniform Laplacian: mean over evaluated vertices of |mean(N(v)) - v|^2.
/// `evaluate` selects vertices (all when empty); neighbours are unrestricted.
LaplacianLoss laplacian_loss(const TriangleMesh& mesh, std::span<const std::uint8_t> evaluate = {});

/// Mean squared distance over corresponding pairs.
LossAndGrad landmark_loss(std::span<const Vec3> pred, std::span<const Vec3> target);

}  // namespace gsavatar::geometry
