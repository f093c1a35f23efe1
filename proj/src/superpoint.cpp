#include "ost3d/superpoint.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <tuple>

#include "json.hpp"
#include "ost3d/errors.hpp"
#include "ost3d/spatial.hpp"

namespace ost3d {

namespace {

struct Cluster {
  Vec3 xyz_sum{0, 0, 0};
  Vec3 rgb_sum{0, 0, 0};
  double count = 0.0;
  std::vector<std::size_t> neighbors;  // sorted cluster ids
  std::uint64_t version = 0;
  bool alive = true;
};

double merge_cost(const Cluster& a, const Cluster& b, const SuperpointParams& p) {
  double dxyz = 0.0, drgb = 0.0;
  for (int k = 0; k < 3; ++k) {
    const double dx = a.xyz_sum[k] / a.count - b.xyz_sum[k] / b.count;
    const double dc = a.rgb_sum[k] / a.count - b.rgb_sum[k] / b.count;
    dxyz += dx * dx;
    drgb += dc * dc;
  }
  return p.spatial_weight * std::sqrt(dxyz) + p.color_weight * std::sqrt(drgb);
}

std::size_t find_root(std::vector<std::size_t>& parent, std::size_t i) {
  while (parent[i] != i) {
    parent[i] = parent[parent[i]];
    i = parent[i];
  }
  return i;
}

}  // namespace

SuperpointPartition compute_superpoints(const PointCloud& cloud, const SuperpointParams& params) {
  const std::size_t n = cloud.size();
  std::vector<std::size_t> labels(n);
  std::iota(labels.begin(), labels.end(), 0);
  if (n == 1 || params.merge_threshold <= 0.0) return partition_from_labels(cloud, labels);

  const std::size_t k = std::min(params.k, n - 1);
  std::vector<Cluster> clusters(n);
  for (std::size_t i = 0; i < n; ++i) {
    clusters[i].xyz_sum = cloud.coords()[i];
    clusters[i].rgb_sum = cloud.colors()[i];
    clusters[i].count = 1.0;
  }
  if (k > 0) {
    // Cell size from the bounding box so a cell holds a handful of points.
    Vec3 lo = cloud.coords()[0], hi = lo;
    for (const Vec3& p : cloud.coords())
      for (int d = 0; d < 3; ++d) {
        lo[d] = std::min(lo[d], p[d]);
        hi[d] = std::max(hi[d], p[d]);
      }
    double extent = 0.0;
    for (int d = 0; d < 3; ++d) extent = std::max(extent, hi[d] - lo[d]);
    const double cell = std::max(extent / std::cbrt(static_cast<double>(n)), 1e-6);
    SpatialHash hash(cloud.coords(), cell);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j : hash.nearest(cloud.coords()[i], k, i)) {
        clusters[i].neighbors.push_back(j);
        clusters[j].neighbors.push_back(i);
      }
    }
    for (Cluster& c : clusters) {
      std::sort(c.neighbors.begin(), c.neighbors.end());
      c.neighbors.erase(std::unique(c.neighbors.begin(), c.neighbors.end()), c.neighbors.end());
    }
  }

  // (cost, lower id, higher id, version of lower, version of higher)
  using Edge = std::tuple<double, std::size_t, std::size_t, std::uint64_t, std::uint64_t>;
  std::priority_queue<Edge, std::vector<Edge>, std::greater<>> heap;
  auto push_edge = [&](std::size_t a, std::size_t b) {
    if (a > b) std::swap(a, b);
    const double c = merge_cost(clusters[a], clusters[b], params);
    if (c < params.merge_threshold) heap.emplace(c, a, b, clusters[a].version, clusters[b].version);
  };
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j : clusters[i].neighbors)
      if (i < j) push_edge(i, j);

  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  while (!heap.empty()) {
    const auto [cost, a, b, va, vb] = heap.top();
    heap.pop();
    Cluster& ca = clusters[a];
    Cluster& cb = clusters[b];
    if (!ca.alive || !cb.alive || ca.version != va || cb.version != vb) continue;

    // a < b, so a keeps the smallest member index.
    parent[b] = a;
    for (int d = 0; d < 3; ++d) {
      ca.xyz_sum[d] += cb.xyz_sum[d];
      ca.rgb_sum[d] += cb.rgb_sum[d];
    }
    ca.count += cb.count;
    cb.alive = false;
    std::vector<std::size_t> merged;
    std::set_union(ca.neighbors.begin(), ca.neighbors.end(), cb.neighbors.begin(),
                   cb.neighbors.end(), std::back_inserter(merged));
    std::erase_if(merged, [&](std::size_t x) { return x == a || x == b; });
    ca.neighbors = std::move(merged);
    cb.neighbors.clear();
    ++ca.version;
    for (std::size_t nb : ca.neighbors) {
      auto& list = clusters[nb].neighbors;
      std::erase(list, b);
      auto pos = std::lower_bound(list.begin(), list.end(), a);
      if (pos == list.end() || *pos != a) list.insert(pos, a);
      push_edge(a, nb);
    }
  }
  for (std::size_t i = 0; i < n; ++i) labels[i] = find_root(parent, i);
  return partition_from_labels(cloud, labels);
}

SuperpointPartition partition_from_labels(const PointCloud& cloud,
                                          const std::vector<std::size_t>& labels) {
  if (labels.size() != cloud.size()) throw ShapeError("partition_from_labels: label count");
  SuperpointPartition part;
  part.assignment.resize(labels.size());
  std::unordered_map<std::size_t, std::size_t> remap;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto [it, inserted] = remap.try_emplace(labels[i], remap.size());
    part.assignment[i] = it->second;
  }
  const std::size_t m = remap.size();
  part.sizes.assign(m, 0);
  part.centroids = Matrix(m, 3);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const std::size_t s = part.assignment[i];
    ++part.sizes[s];
    for (int d = 0; d < 3; ++d) part.centroids(s, static_cast<std::size_t>(d)) += cloud.coords()[i][d];
  }
  for (std::size_t s = 0; s < m; ++s)
    for (double& v : part.centroids.row(s)) v /= static_cast<double>(part.sizes[s]);
  return part;
}

ad::Var superpoint_pool(ad::Var point_features, const SuperpointPartition& part) {
  if (point_features.rows() != part.num_points()) {
    throw ShapeError("superpoint_pool: " + std::to_string(point_features.rows()) +
                     " feature rows for " + std::to_string(part.num_points()) + " points");
  }
  return ad::segment_mean(point_features, part.assignment, part.size());
}

Matrix superpoint_pool(const Matrix& point_features, const SuperpointPartition& part) {
  ad::Tape tape;
  return superpoint_pool(tape.constant(point_features), part).value();
}

Matrix broadcast_to_points(const Matrix& superpoint_values, const SuperpointPartition& part) {
  if (superpoint_values.rows() != part.size()) throw ShapeError("broadcast_to_points: row count");
  return gather_rows(superpoint_values, part.assignment);
}

Matrix pairwise_centroid_distances(const SuperpointPartition& part) {
  const std::size_t m = part.size();
  Matrix d(m, m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i + 1; j < m; ++j) {
      const double v = distance(part.centroid(i), part.centroid(j));
      d(i, j) = v;
      d(j, i) = v;
    }
  return d;
}

Matrix centroid_distances_from(const Vec3& p, const SuperpointPartition& part) {
  Matrix d(1, part.size());
  for (std::size_t j = 0; j < part.size(); ++j) d(0, j) = distance(p, part.centroid(j));
  return d;
}

std::string partition_to_json(const SuperpointPartition& part) {
  nlohmann::json j;
  j["num_superpoints"] = part.size();
  j["assignment"] = part.assignment;
  j["sizes"] = part.sizes;
  auto& c = j["centroids"] = nlohmann::json::array();
  for (std::size_t s = 0; s < part.size(); ++s)
    c.push_back({part.centroids(s, 0), part.centroids(s, 1), part.centroids(s, 2)});
  return j.dump();
}

}  // namespace ost3d
