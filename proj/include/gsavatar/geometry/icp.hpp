#pragma once

#include <span>

#include "gsavatar/core/params.hpp"
#include "gsavatar/geometry/mesh.hpp"

namespace gsavatar::geometry {

struct IcpConfig {
  int max_iters = 50;
  double tol = 1e-6;
  double trim_fraction = 0.0;  // fraction of worst pairs dropped each iteration
};

struct IcpResult {
  core::RigidTransform transform;  // maps source onto target
  double rms = 0.0;
  int iterations = 0;
};

/// Rigid point-to-point ICP on vertex clouds.
IcpResult icp_align(std::span<const Vec3> source, std::span<const Vec3> target, const IcpConfig& cfg = {});
inline IcpResult icp_align(const TriangleMesh& source, const TriangleMesh& target, const IcpConfig& cfg = {}) {
  return icp_align(source.vertices, target.vertices, cfg);
}

/// Least-squares rotation and translation taking src[k] to dst[k].
core::RigidTransform kabsch(std::span<const Vec3> src, std::span<const Vec3> dst);

}  // namespace gsavatar::geometry
