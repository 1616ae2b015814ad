#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "gsavatar/common/math.hpp"

namespace gsavatar::control {

/// Uniform hash grid over a fixed point set. Each point lives in exactly one
/// cell; radius queries scan the covering cells and filter exactly.
class SpatialIndex {
 public:
  SpatialIndex(std::span<const Vec3> positions, double cell_size);

  /// Indices j with |x_j - center| < radius (strict), ascending.
  std::vector<std::size_t> query_radius(const Vec3& center, double radius) const;

  std::size_t point_count() const { return xs_.size(); }
  std::size_t cell_count() const { return cells_.size(); }
  double cell_size() const { return cell_size_; }
  /// Total entries across cells (equals point_count()).
  std::size_t entry_count() const;

 private:
  struct Key {
    std::int64_t x, y, z;
    bool operator==(const Key&) const = default;
  };
  struct KeyHash {
    std::size_t operator()(const Key& k) const;
  };

  Key key_of(const Vec3& p) const;

  double cell_size_;
  std::vector<double> xs_, ys_, zs_;
  std::unordered_map<Key, std::vector<std::size_t>, KeyHash> cells_;
};

}  // namespace gsavatar::control
