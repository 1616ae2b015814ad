#include "gsavatar/geometry/mesh.hpp"

#include <algorithm>
#include <map>
#include <string>

#include "gsavatar/common/error.hpp"

namespace gsavatar::geometry {

void TriangleMesh::validate() const {
  for (const auto& v : vertices)
    if (!v.allFinite()) throw Error(ErrorCode::NonFinite, "non-finite mesh vertex");
  if (!provenance.empty() && provenance.size() != vertices.size())
    throw Error(ErrorCode::LengthMismatch, "length mismatch: provenance vs vertices");
  for (std::size_t t = 0; t < triangles.size(); ++t) {
    for (auto idx : triangles[t])
      if (idx >= vertices.size())
        throw Error(ErrorCode::OutOfBounds, "triangle " + std::to_string(t) + " index out of range");
    if (triangle_area(*this, t) <= 1e-12)
      throw Error(ErrorCode::DegenerateConfiguration, "triangle " + std::to_string(t) + " is degenerate");
  }
}

double triangle_area(const TriangleMesh& mesh, std::size_t tri) {
  const auto& f = mesh.triangles[tri];
  const Vec3& a = mesh.vertices[f[0]];
  return 0.5 * (mesh.vertices[f[1]] - a).cross(mesh.vertices[f[2]] - a).norm();
}

std::vector<std::vector<std::uint32_t>> vertex_adjacency(const TriangleMesh& mesh) {
  std::vector<std::vector<std::uint32_t>> adj(mesh.vertices.size());
  for (const auto& f : mesh.triangles)
    for (int e = 0; e < 3; ++e) {
      adj[f[e]].push_back(f[(e + 1) % 3]);
      adj[f[e]].push_back(f[(e + 2) % 3]);
    }
  for (auto& a : adj) {
    std::sort(a.begin(), a.end());
    a.erase(std::unique(a.begin(), a.end()), a.end());
  }
  return adj;
}

bool is_watertight(const TriangleMesh& mesh) {
  std::map<std::pair<std::uint32_t, std::uint32_t>, int> edges;
  for (const auto& f : mesh.triangles)
    for (int e = 0; e < 3; ++e) {
      auto a = f[e], b = f[(e + 1) % 3];
      if (a > b) std::swap(a, b);
      ++edges[{a, b}];
    }
  return std::all_of(edges.begin(), edges.end(), [](const auto& kv) { return kv.second == 2; });
}

TriangleMesh transformed(const TriangleMesh& mesh, const Mat3& rotation, const Vec3& translation) {
  TriangleMesh out = mesh;
  for (auto& v : out.vertices) v = rotation * v + translation;
  out.provenance.clear();
  return out;
}

}  // namespace gsavatar::geometry
