#include "gsavatar/geometry/mesh_losses.hpp"

#include "gsavatar/common/error.hpp"

namespace gsavatar::geometry {

CenterScale mesh_center_scale(std::span<const Vec3> vertices) {
  if (vertices.empty()) throw Error(ErrorCode::InvalidArgument, "empty mesh has no center");
  Vec3 c = Vec3::Zero();
  for (const auto& v : vertices) c += v;
  c /= static_cast<double>(vertices.size());
  double s = 0.0;
  for (const auto& v : vertices) s += (v - c).norm();
  return {c, s / static_cast<double>(vertices.size())};
}

LossAndGrad mesh_alignment_loss(const CenterScale& prior, std::span<const Vec3> pred) {
  const CenterScale p = mesh_center_scale(pred);
  const double m = static_cast<double>(pred.size());
  const Vec3 dc = prior.center - p.center;
  const double ds = prior.scale - p.scale;

  LossAndGrad out;
  out.loss = dc.squaredNorm() + ds * ds;

  // s = mean |v_k - c|: ds/dv_j = (u_j - mean_k u_k) / M since sum_k dc/dv_j terms collapse.
  std::vector<Vec3> u(pred.size());
  Vec3 u_mean = Vec3::Zero();
  for (std::size_t k = 0; k < pred.size(); ++k) {
    const Vec3 r = pred[k] - p.center;
    const double n = r.norm();
    u[k] = n > 0 ? Vec3(r / n) : Vec3::Zero();
    u_mean += u[k];
  }
  u_mean /= m;
  out.grad.resize(pred.size());
  for (std::size_t j = 0; j < pred.size(); ++j)
    out.grad[j] = (-2.0 * dc + (-2.0 * ds) * (u[j] - u_mean)) / m;
  return out;
}

LossAndGrad mesh_alignment_loss(const TriangleMesh& prior, const TriangleMesh& pred) {
  return mesh_alignment_loss(mesh_center_scale(prior), pred.vertices);
}

LaplacianLoss laplacian_loss(const TriangleMesh& mesh, std::span<const std::uint8_t> evaluate) {
  if (mesh.empty()) throw Error(ErrorCode::InvalidArgument, "laplacian of an empty mesh");
  if (!evaluate.empty() && evaluate.size() != mesh.vertices.size())
    throw Error(ErrorCode::LengthMismatch, "length mismatch: laplacian mask");
  const auto adj = vertex_adjacency(mesh);
  LaplacianLoss out;
  out.grad.assign(mesh.vertices.size(), Vec3::Zero());

  std::size_t count = 0;
  for (std::size_t v = 0; v < mesh.vertices.size(); ++v)
    if (evaluate.empty() || evaluate[v]) ++count;
  if (count == 0) return out;
  const double inv = 1.0 / static_cast<double>(count);

  for (std::size_t v = 0; v < mesh.vertices.size(); ++v) {
    if (!evaluate.empty() && !evaluate[v]) continue;
    if (adj[v].empty()) {
      ++out.isolated;
      continue;
    }
    const double k = static_cast<double>(adj[v].size());
    Vec3 mean = Vec3::Zero();
    for (auto u : adj[v]) mean += mesh.vertices[u];
    const Vec3 delta = mean / k - mesh.vertices[v];
    out.loss += delta.squaredNorm() * inv;
    const Vec3 g = 2.0 * delta * inv;
    out.grad[v] -= g;
    for (auto u : adj[v]) out.grad[u] += g / k;
  }
  return out;
}

LossAndGrad landmark_loss(std::span<const Vec3> pred, std::span<const Vec3> target) {
  if (pred.size() != target.size()) throw Error(ErrorCode::LengthMismatch, "length mismatch: landmarks");
  if (pred.empty()) throw Error(ErrorCode::InvalidArgument, "no landmarks");
  const double inv = 1.0 / static_cast<double>(pred.size());
  LossAndGrad out;
  out.grad.resize(pred.size());
  for (std::size_t k = 0; k < pred.size(); ++k) {
    const Vec3 d = pred[k] - target[k];
    out.loss += d.squaredNorm() * inv;
    out.grad[k] = 2.0 * d * inv;
  }
  return out;
}

}  // namespace gsavatar::geometry
