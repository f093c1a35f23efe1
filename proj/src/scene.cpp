#include "ost3d/scene.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ost3d/errors.hpp"

namespace ost3d {

PointCloud::PointCloud(std::vector<Vec3> coords, std::vector<Vec3> colors)
    : coords_(std::move(coords)), colors_(std::move(colors)) {
  if (coords_.empty()) throw ShapeError("PointCloud: at least one point is required");
  if (coords_.size() != colors_.size()) {
    throw ShapeError("PointCloud: " + std::to_string(coords_.size()) + " coords but " +
                     std::to_string(colors_.size()) + " colors");
  }
  for (std::size_t i = 0; i < coords_.size(); ++i) {
    for (double v : coords_[i]) {
      if (!std::isfinite(v)) {
        throw NonFiniteError("PointCloud: non-finite coordinate at point " + std::to_string(i));
      }
    }
    for (double& c : colors_[i]) c = std::isfinite(c) ? std::clamp(c, 0.0, 1.0) : 0.0;
  }
}

Vec3 PointCloud::centroid() const {
  Vec3 c{0, 0, 0};
  for (const Vec3& p : coords_)
    for (int k = 0; k < 3; ++k) c[k] += p[k];
  for (double& v : c) v /= static_cast<double>(coords_.size());
  return c;
}

Matrix PointCloud::as_matrix() const {
  Matrix m(size(), 6);
  for (std::size_t i = 0; i < size(); ++i) {
    for (int k = 0; k < 3; ++k) {
      m(i, k) = coords_[i][k];
      m(i, 3 + k) = colors_[i][k];
    }
  }
  return m;
}

PointCloud PointCloud::translated(const Vec3& offset) const {
  std::vector<Vec3> moved = coords_;
  for (Vec3& p : moved)
    for (int k = 0; k < 3; ++k) p[k] += offset[k];
  return PointCloud(std::move(moved), colors_);
}

VoxelKey voxel_key(const Vec3& p, double voxel_size) {
  return VoxelKey{static_cast<std::int64_t>(std::floor(p[0] / voxel_size)),
                  static_cast<std::int64_t>(std::floor(p[1] / voxel_size)),
                  static_cast<std::int64_t>(std::floor(p[2] / voxel_size))};
}

VoxelGrid voxelize(const PointCloud& cloud, double voxel_size) {
  if (!(voxel_size > 0.0) || !std::isfinite(voxel_size)) {
    throw ConfigError("voxelize: voxel_size must be positive, got " + std::to_string(voxel_size));
  }
  VoxelGrid grid;
  grid.voxel_size = voxel_size;
  grid.point_to_voxel.resize(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const VoxelKey key = voxel_key(cloud.coords()[i], voxel_size);
    auto [it, inserted] = grid.index.try_emplace(key, grid.keys.size());
    if (inserted) grid.keys.push_back(key);
    grid.point_to_voxel[i] = it->second;
  }
  grid.features = Matrix(grid.keys.size(), 6);
  std::vector<double> counts(grid.keys.size(), 0.0);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const std::size_t v = grid.point_to_voxel[i];
    counts[v] += 1.0;
    for (int k = 0; k < 3; ++k) {
      grid.features(v, k) += cloud.coords()[i][k];
      grid.features(v, 3 + k) += cloud.colors()[i][k];
    }
  }
  for (std::size_t v = 0; v < grid.keys.size(); ++v)
    for (double& f : grid.features.row(v)) f /= counts[v];
  return grid;
}

}  // namespace ost3d
