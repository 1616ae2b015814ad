#include "gsavatar/control/spatial_index.hpp"

#include <algorithm>
#include <cmath>

#include "gsavatar/common/error.hpp"
#include "gsavatar/simd/kernels.hpp"

namespace gsavatar::control {

std::size_t SpatialIndex::KeyHash::operator()(const Key& k) const {
  // Classic large-prime spatial hash.
  const auto h = static_cast<std::uint64_t>(k.x) * 73856093ULL ^ static_cast<std::uint64_t>(k.y) * 19349663ULL ^
                 static_cast<std::uint64_t>(k.z) * 83492791ULL;
  return static_cast<std::size_t>(h);
}

SpatialIndex::Key SpatialIndex::key_of(const Vec3& p) const {
  return {static_cast<std::int64_t>(std::floor(p.x() / cell_size_)),
          static_cast<std::int64_t>(std::floor(p.y() / cell_size_)),
          static_cast<std::int64_t>(std::floor(p.z() / cell_size_))};
}

SpatialIndex::SpatialIndex(std::span<const Vec3> positions, double cell_size) : cell_size_(cell_size) {
  if (!(cell_size > 0)) throw Error(ErrorCode::InvalidArgument, "spatial index cell size must be positive");
  xs_.reserve(positions.size());
  ys_.reserve(positions.size());
  zs_.reserve(positions.size());
  for (std::size_t i = 0; i < positions.size(); ++i) {
    const Vec3& p = positions[i];
    if (!p.allFinite()) throw Error(ErrorCode::NonFinite, "spatial index position not finite");
    xs_.push_back(p.x());
    ys_.push_back(p.y());
    zs_.push_back(p.z());
    cells_[key_of(p)].push_back(i);
  }
}

std::size_t SpatialIndex::entry_count() const {
  std::size_t total = 0;
  for (const auto& [key, bucket] : cells_) total += bucket.size();
  return total;
}

std::vector<std::size_t> SpatialIndex::query_radius(const Vec3& center, double radius) const {
  std::vector<std::size_t> candidates;
  const Key lo = key_of(center - Vec3::Constant(radius));
  const Key hi = key_of(center + Vec3::Constant(radius));
  for (std::int64_t x = lo.x; x <= hi.x; ++x)
    for (std::int64_t y = lo.y; y <= hi.y; ++y)
      for (std::int64_t z = lo.z; z <= hi.z; ++z) {
        const auto it = cells_.find(Key{x, y, z});
        if (it != cells_.end()) candidates.insert(candidates.end(), it->second.begin(), it->second.end());
      }
  std::sort(candidates.begin(), candidates.end());

  std::vector<double> cx(candidates.size()), cy(candidates.size()), cz(candidates.size()), d2(candidates.size());
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    cx[k] = xs_[candidates[k]];
    cy[k] = ys_[candidates[k]];
    cz[k] = zs_[candidates[k]];
  }
  simd::active().squared_distances(cx.data(), cy.data(), cz.data(), candidates.size(), center.x(), center.y(),
                                   center.z(), d2.data());
  const double r2 = radius * radius;
  std::vector<std::size_t> result;
  for (std::size_t k = 0; k < candidates.size(); ++k)
    if (d2[k] < r2) result.push_back(candidates[k]);
  return result;
}

}  // namespace gsavatar::control
