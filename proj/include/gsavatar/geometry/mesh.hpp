#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "gsavatar/common/math.hpp"

namespace gsavatar::geometry {

/// Where an extracted vertex sits on the lattice: on the edge from the
/// inside vertex (s < 0) to the outside vertex (s >= 0) at parameter t.
struct EdgeCrossing {
  std::size_t inside;
  std::size_t outside;
  double t;
};

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<std::uint32_t, 3>> triangles;
  std::vector<EdgeCrossing> provenance;  // empty, or one per vertex

  bool empty() const { return vertices.empty(); }
  void validate() const;
};

double triangle_area(const TriangleMesh& mesh, std::size_t tri);

/// Sorted, de-duplicated one-ring neighbours per vertex.
std::vector<std::vector<std::uint32_t>> vertex_adjacency(const TriangleMesh& mesh);

/// True if every undirected edge borders exactly two triangles.
bool is_watertight(const TriangleMesh& mesh);

TriangleMesh transformed(const TriangleMesh& mesh, const Mat3& rotation, const Vec3& translation);

}  // namespace gsavatar::geometry
