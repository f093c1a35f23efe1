#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "ost3d/autodiff.hpp"
#include "ost3d/matrix.hpp"
#include "ost3d/scene.hpp"

namespace ost3d {

struct SuperpointParams {
  std::size_t k = 8;
  double spatial_weight = 1.0;
  double color_weight = 0.5;
  double merge_threshold = 0.15;
  // Soft target: merging stops at the threshold even when more superpoints remain.
  std::size_t target_max = 512;
};

// Surjective point -> superpoint assignment. Superpoints are numbered in order
// of their smallest member point index.
struct SuperpointPartition {
  std::vector<std::size_t> assignment;
  Matrix centroids;  // M x 3
  std::vector<std::size_t> sizes;

  std::size_t size() const noexcept { return sizes.size(); }
  std::size_t num_points() const noexcept { return assignment.size(); }
  Vec3 centroid(std::size_t s) const { return {centroids(s, 0), centroids(s, 1), centroids(s, 2)}; }
  bool exceeds_target(const SuperpointParams& p) const { return size() > p.target_max; }
};

// Greedy centroid-linkage agglomeration over the symmetric k-NN graph. The
// cheapest adjacent pair (cost, then lower ids) merges while its cost is below
// merge_threshold. Cost = spatial_weight*|dxyz| + color_weight*|drgb| between
// cluster means.
SuperpointPartition compute_superpoints(const PointCloud& cloud, const SuperpointParams& params);

// Builds a partition from arbitrary labels, renumbering them canonically.
SuperpointPartition partition_from_labels(const PointCloud& cloud,
                                          const std::vector<std::size_t>& labels);

// Row j = mean of member rows; each member receives g_j / size_j.
ad::Var superpoint_pool(ad::Var point_features, const SuperpointPartition& part);
Matrix superpoint_pool(const Matrix& point_features, const SuperpointPartition& part);
// Copies superpoint rows back to their member points.
Matrix broadcast_to_points(const Matrix& superpoint_values, const SuperpointPartition& part);

// Symmetric M x M Euclidean centroid distances with zero diagonal.
Matrix pairwise_centroid_distances(const SuperpointPartition& part);
// 1 x M distances from p to every centroid.
Matrix centroid_distances_from(const Vec3& p, const SuperpointPartition& part);

std::string partition_to_json(const SuperpointPartition& part);

}  // namespace ost3d
