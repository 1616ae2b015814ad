#include "gsavatar/geometry/marching_tets.hpp"

#include <unordered_map>

#include "gsavatar/common/error.hpp"

namespace gsavatar::geometry {

namespace {

class Extractor {
 public:
  explicit Extractor(const SdfGrid& grid) : grid_(grid) {}

  void tet(const std::array<std::size_t, 4>& v) {
    int in[4], out[4], n_in = 0, n_out = 0;
    for (int k = 0; k < 4; ++k) {
      if (grid_.sdf[v[k]] < 0)
        in[n_in++] = k;
      else
        out[n_out++] = k;
    }
    if (n_in == 0 || n_out == 0) return;

    Vec3 c_in = Vec3::Zero(), c_out = Vec3::Zero();
    for (int k = 0; k < n_in; ++k) c_in += grid_.vertex_position(v[in[k]]);
    for (int k = 0; k < n_out; ++k) c_out += grid_.vertex_position(v[out[k]]);
    const Vec3 toward_outside = c_out / n_out - c_in / n_in;

    if (n_in == 1) {
      emit(crossing(v[in[0]], v[out[0]]), crossing(v[in[0]], v[out[1]]), crossing(v[in[0]], v[out[2]]),
           toward_outside);
    } else if (n_in == 3) {
      emit(crossing(v[in[0]], v[out[0]]), crossing(v[in[1]], v[out[0]]), crossing(v[in[2]], v[out[0]]),
           toward_outside);
    } else {
      // Quad a-c, a-d, b-d, b-c for inside {a,b}, outside {c,d}; split on ac-bd.
      const auto ac = crossing(v[in[0]], v[out[0]]);
      const auto ad = crossing(v[in[0]], v[out[1]]);
      const auto bd = crossing(v[in[1]], v[out[1]]);
      const auto bc = crossing(v[in[1]], v[out[0]]);
      emit(ac, ad, bd, toward_outside);
      emit(ac, bd, bc, toward_outside);
    }
  }

  TriangleMesh take() { return std::move(mesh_); }

 private:
  std::uint32_t crossing(std::size_t inside, std::size_t outside) {
    const double sa = grid_.sdf[inside], sb = grid_.sdf[outside];
    // A crossing that lands exactly on an outside lattice vertex is keyed by
    // that vertex so every edge reaching it shares one mesh vertex.
    const std::size_t n = grid_.vertex_count();
    const std::uint64_t key = sb == 0.0 ? static_cast<std::uint64_t>(outside) * n + outside
                                        : static_cast<std::uint64_t>(inside) * n + outside;
    auto [it, fresh] = index_.try_emplace(key, static_cast<std::uint32_t>(mesh_.vertices.size()));
    if (fresh) {
      const double t = sa / (sa - sb);
      const Vec3 pa = grid_.vertex_position(inside), pb = grid_.vertex_position(outside);
      mesh_.vertices.push_back(sb == 0.0 ? pb : Vec3(pa + t * (pb - pa)));
      mesh_.provenance.push_back({inside, outside, t});
    }
    return it->second;
  }

  void emit(std::uint32_t a, std::uint32_t b, std::uint32_t c, const Vec3& toward_outside) {
    if (a == b || b == c || a == c) return;
    const Vec3& pa = mesh_.vertices[a];
    const Vec3 n = (mesh_.vertices[b] - pa).cross(mesh_.vertices[c] - pa);
    if (n.dot(toward_outside) < 0) std::swap(b, c);
    mesh_.triangles.push_back({a, b, c});
  }

  const SdfGrid& grid_;
  TriangleMesh mesh_;
  std::unordered_map<std::uint64_t, std::uint32_t> index_;
};

}  // namespace

TriangleMesh extract_surface(const SdfGrid& grid) {
  grid.validate();
  Extractor ex(grid);
  const int r = grid.resolution;
  for (int k = 0; k < r; ++k)
    for (int j = 0; j < r; ++j)
      for (int i = 0; i < r; ++i)
        for (int t = 0; t < 6; ++t) ex.tet(grid.tet_vertices(i, j, k, t));
  return ex.take();
}

CrossingJacobian crossing_jacobian(const SdfGrid& grid, const EdgeCrossing& c) {
  const double sa = grid.sdf[c.inside], sb = grid.sdf[c.outside];
  const double denom = (sa - sb) * (sa - sb);
  const Vec3 edge = grid.vertex_position(c.outside) - grid.vertex_position(c.inside);
  return {edge * (-sb / denom), edge * (sa / denom)};
}

std::vector<double> vertex_features(const SdfGrid& grid, const TriangleMesh& mesh) {
  const auto d = static_cast<std::size_t>(grid.feature_dim);
  std::vector<double> out(mesh.provenance.size() * d);
  for (std::size_t m = 0; m < mesh.provenance.size(); ++m) {
    const auto& c = mesh.provenance[m];
    const auto ea = grid.eta_at(c.inside), eb = grid.eta_at(c.outside);
    for (std::size_t f = 0; f < d; ++f) out[m * d + f] = (1.0 - c.t) * ea[f] + c.t * eb[f];
  }
  return out;
}

void extract_surface_backward(const SdfGrid& grid, const TriangleMesh& mesh, std::span<const Vec3> d_vertices,
                              std::span<const double> d_features, std::vector<double>& d_sdf,
                              std::vector<double>& d_eta) {
  const auto d = static_cast<std::size_t>(grid.feature_dim);
  if (mesh.provenance.size() != mesh.vertices.size())
    throw Error(ErrorCode::InvalidArgument, "mesh lacks lattice provenance");
  if (d_vertices.size() != mesh.vertices.size())
    throw Error(ErrorCode::LengthMismatch, "length mismatch: vertex gradients");
  if (!d_features.empty() && d_features.size() != mesh.vertices.size() * d)
    throw Error(ErrorCode::LengthMismatch, "length mismatch: feature gradients");
  d_sdf.resize(grid.vertex_count(), 0.0);
  d_eta.resize(grid.vertex_count() * d, 0.0);
  for (std::size_t m = 0; m < mesh.vertices.size(); ++m) {
    const auto& c = mesh.provenance[m];
    const double sa = grid.sdf[c.inside], sb = grid.sdf[c.outside];
    const double denom = (sa - sb) * (sa - sb);
    const double dt_da = -sb / denom, dt_db = sa / denom;
    const Vec3 edge = grid.vertex_position(c.outside) - grid.vertex_position(c.inside);
    double dt = edge.dot(d_vertices[m]);
    if (!d_features.empty()) {
      const auto ea = grid.eta_at(c.inside), eb = grid.eta_at(c.outside);
      for (std::size_t f = 0; f < d; ++f) {
        const double g = d_features[m * d + f];
        d_eta[c.inside * d + f] += (1.0 - c.t) * g;
        d_eta[c.outside * d + f] += c.t * g;
        dt += (eb[f] - ea[f]) * g;
      }
    }
    d_sdf[c.inside] += dt * dt_da;
    d_sdf[c.outside] += dt * dt_db;
  }
}

}  // namespace gsavatar::geometry
