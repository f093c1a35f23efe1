#include "ost3d/spatial.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "ost3d/errors.hpp"

namespace ost3d {

double distance(const Vec3& a, const Vec3& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

SpatialHash::SpatialHash(std::span<const Vec3> points, double cell_size)
    : points_(points), cell_(cell_size) {
  if (!(cell_size > 0.0)) throw ConfigError("SpatialHash: cell size must be positive");
  for (std::size_t i = 0; i < points.size(); ++i) {
    const VoxelKey k = voxel_key(points[i], cell_);
    auto [it, inserted] = cell_index_.try_emplace(k, buckets_.size());
    if (inserted) buckets_.emplace_back();
    buckets_[it->second].push_back(i);
    if (i == 0) {
      lo_ = hi_ = k;
    } else {
      lo_ = {std::min(lo_.x, k.x), std::min(lo_.y, k.y), std::min(lo_.z, k.z)};
      hi_ = {std::max(hi_.x, k.x), std::max(hi_.y, k.y), std::max(hi_.z, k.z)};
    }
  }
}

std::vector<std::size_t> SpatialHash::radius(const Vec3& p, double r) const {
  std::vector<std::size_t> out;
  const VoxelKey a = voxel_key({p[0] - r, p[1] - r, p[2] - r}, cell_);
  const VoxelKey b = voxel_key({p[0] + r, p[1] + r, p[2] + r}, cell_);
  for (std::int64_t x = std::max(a.x, lo_.x); x <= std::min(b.x, hi_.x); ++x)
    for (std::int64_t y = std::max(a.y, lo_.y); y <= std::min(b.y, hi_.y); ++y)
      for (std::int64_t z = std::max(a.z, lo_.z); z <= std::min(b.z, hi_.z); ++z) {
        auto it = cell_index_.find({x, y, z});
        if (it == cell_index_.end()) continue;
        for (std::size_t i : buckets_[it->second])
          if (distance(points_[i], p) <= r) out.push_back(i);
      }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::size_t> SpatialHash::nearest(const Vec3& p, std::size_t k,
                                              std::size_t exclude) const {
  std::vector<std::pair<double, std::size_t>> cand;
  if (k == 0) return {};
  const VoxelKey c = voxel_key(p, cell_);
  const std::int64_t max_ring =
      std::max({std::abs(c.x - lo_.x), std::abs(c.x - hi_.x), std::abs(c.y - lo_.y),
                std::abs(c.y - hi_.y), std::abs(c.z - lo_.z), std::abs(c.z - hi_.z)});
  for (std::int64_t ring = 0; ring <= max_ring; ++ring) {
    for (std::int64_t x = c.x - ring; x <= c.x + ring; ++x)
      for (std::int64_t y = c.y - ring; y <= c.y + ring; ++y)
        for (std::int64_t z = c.z - ring; z <= c.z + ring; ++z) {
          const bool shell = std::abs(x - c.x) == ring || std::abs(y - c.y) == ring ||
                             std::abs(z - c.z) == ring;
          if (!shell) continue;
          auto it = cell_index_.find({x, y, z});
          if (it == cell_index_.end()) continue;
          for (std::size_t i : buckets_[it->second])
            if (i != exclude) cand.emplace_back(distance(points_[i], p), i);
        }
    if (cand.size() >= k) {
      std::nth_element(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k - 1), cand.end());
      // Everything outside the explored cube is at least ring * cell away.
      if (cand[k - 1].first < static_cast<double>(ring) * cell_) break;
    }
  }
  std::sort(cand.begin(), cand.end());
  if (cand.size() > k) cand.resize(k);
  std::vector<std::size_t> out;
  out.reserve(cand.size());
  for (const auto& [d, i] : cand) out.push_back(i);
  return out;
}

}  // namespace ost3d
