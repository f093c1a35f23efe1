#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ost3d/scene.hpp"

namespace ost3d {

// Uniform hash grid over a fixed point set for radius and k-NN queries.
class SpatialHash {
 public:
  SpatialHash(std::span<const Vec3> points, double cell_size);

  // Indices within `radius` of p (inclusive), ascending.
  std::vector<std::size_t> radius(const Vec3& p, double radius) const;
  // The k nearest indices to p ordered by (distance, index); `exclude` is skipped.
  std::vector<std::size_t> nearest(const Vec3& p, std::size_t k,
                                   std::size_t exclude = static_cast<std::size_t>(-1)) const;

 private:
  std::span<const Vec3> points_;
  double cell_;
  VoxelIndex cell_index_;
  std::vector<std::vector<std::size_t>> buckets_;
  VoxelKey lo_{}, hi_{};
};

double distance(const Vec3& a, const Vec3& b);

}  // namespace ost3d
