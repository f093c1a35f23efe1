#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <unordered_map>
#include <vector>

#include "ost3d/matrix.hpp"

namespace ost3d {

using Vec3 = std::array<double, 3>;

// Dense per-point binary mask (1 = foreground).
using PointMask = std::vector<std::uint8_t>;

// N points with xyz in meters and rgb in [0,1].
class PointCloud {
 public:
  PointCloud() = default;
  // Throws when empty, when sizes differ or when a coordinate is not finite.
  // Colors are clamped to [0,1].
  PointCloud(std::vector<Vec3> coords, std::vector<Vec3> colors);

  std::size_t size() const noexcept { return coords_.size(); }
  const std::vector<Vec3>& coords() const noexcept { return coords_; }
  const std::vector<Vec3>& colors() const noexcept { return colors_; }

  Vec3 centroid() const;
  // N x 6 rows of [x, y, z, r, g, b].
  Matrix as_matrix() const;
  PointCloud translated(const Vec3& offset) const;

 private:
  std::vector<Vec3> coords_;
  std::vector<Vec3> colors_;
};

struct VoxelKey {
  std::int64_t x = 0, y = 0, z = 0;
  bool operator==(const VoxelKey&) const = default;
  auto operator<=>(const VoxelKey&) const = default;
};

struct VoxelKeyHash {
  std::size_t operator()(const VoxelKey& k) const noexcept {
    std::uint64_t h = static_cast<std::uint64_t>(k.x) * 73856093ULL;
    h ^= static_cast<std::uint64_t>(k.y) * 19349663ULL;
    h ^= static_cast<std::uint64_t>(k.z) * 83492791ULL;
    return static_cast<std::size_t>(h);
  }
};

using VoxelIndex = std::unordered_map<VoxelKey, std::size_t, VoxelKeyHash>;

// Occupied voxels in order of first appearance in the point list.
struct VoxelGrid {
  double voxel_size = 0.0;
  std::vector<VoxelKey> keys;
  // V x 6 mean of the member points' [xyz, rgb].
  Matrix features;
  std::vector<std::size_t> point_to_voxel;
  VoxelIndex index;

  std::size_t size() const noexcept { return keys.size(); }
};

VoxelKey voxel_key(const Vec3& p, double voxel_size);
VoxelGrid voxelize(const PointCloud& cloud, double voxel_size);

}  // namespace ost3d
