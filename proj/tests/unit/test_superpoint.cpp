#include <random>
#include <set>

#include "doctest.h"

#include "ost3d/errors.hpp"
#include "ost3d/superpoint.hpp"
#include "ost3d/synthetic.hpp"

using namespace ost3d;

TEST_SUITE("superpoint") {

TEST_CASE("partition of a generated scene is surjective and canonical") {
  const SyntheticScene s = generate_scene(4, SceneConfig::toy_default());
  const SuperpointPartition p = compute_superpoints(s.cloud, {});
  REQUIRE(p.num_points() == s.cloud.size());
  std::vector<std::size_t> count(p.size(), 0);
  std::size_t next = 0;
  for (std::size_t a : p.assignment) {
    REQUIRE(a < p.size());
    if (count[a]++ == 0) CHECK(a == next++);  // numbered by first member
  }
  for (std::size_t j = 0; j < p.size(); ++j) CHECK(count[j] == p.sizes[j]);
  CHECK(p.size() < s.cloud.size() / 4);
}

TEST_CASE("partition is deterministic") {
  const SyntheticScene s = generate_scene(8, SceneConfig::toy_default());
  const SuperpointPartition a = compute_superpoints(s.cloud, {}), b = compute_superpoints(s.cloud, {});
  CHECK(a.assignment == b.assignment);
  CHECK(a.centroids == b.centroids);
}

TEST_CASE("separated clusters of different color never share a superpoint") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 0.1);
  std::vector<Vec3> xyz, rgb;
  for (int i = 0; i < 60; ++i) {
    const bool second = i % 2;
    xyz.push_back({u(rng) + (second ? 1.0 : 0.0), u(rng), u(rng)});
    rgb.push_back(second ? Vec3{0, 0, 1} : Vec3{1, 0, 0});
  }
  const SuperpointPartition p = compute_superpoints(PointCloud(xyz, rgb), {});
  for (std::size_t i = 0; i < 60; ++i)
    for (std::size_t j = 0; j < 60; ++j)
      if (i % 2 != j % 2) CHECK(p.assignment[i] != p.assignment[j]);
}

TEST_CASE("zero threshold keeps every point separate") {
  const PointCloud c({{0, 0, 0}, {0.01, 0, 0}, {0.02, 0, 0}}, {{0, 0, 0}, {0, 0, 0}, {0, 0, 0}});
  SuperpointParams prm;
  prm.merge_threshold = 0.0;
  CHECK(compute_superpoints(c, prm).size() == 3);
  prm.merge_threshold = 1.0;
  CHECK(compute_superpoints(c, prm).size() == 1);
}

TEST_CASE("pooling is the member mean and broadcast copies back") {
  const PointCloud c({{0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {3, 0, 0}}, std::vector<Vec3>(4, Vec3{0, 0, 0}));
  const SuperpointPartition p = partition_from_labels(c, {5, 2, 5, 5});
  REQUIRE(p.size() == 2);
  CHECK(p.assignment == std::vector<std::size_t>{0, 1, 0, 0});
  const Matrix f = Matrix::from_rows({{1, 10}, {2, 20}, {3, 30}, {8, 80}});
  const Matrix pooled = superpoint_pool(f, p);
  CHECK(pooled == Matrix::from_rows({{4, 40}, {2, 20}}));
  CHECK(p.centroids(0, 0) == doctest::Approx(5.0 / 3.0));
  CHECK(broadcast_to_points(pooled, p) == Matrix::from_rows({{4, 40}, {2, 20}, {4, 40}, {4, 40}}));
  CHECK_THROWS_AS(superpoint_pool(Matrix(3, 2), p), ShapeError);
}

TEST_CASE("pooling is permutation invariant") {
  const PointCloud c({{0, 0, 0}, {1, 0, 0}, {2, 0, 0}}, std::vector<Vec3>(3, Vec3{0, 0, 0}));
  const PointCloud cp({{2, 0, 0}, {0, 0, 0}, {1, 0, 0}}, std::vector<Vec3>(3, Vec3{0, 0, 0}));
  const Matrix f = Matrix::from_rows({{1}, {2}, {6}});
  const Matrix fp = Matrix::from_rows({{6}, {1}, {2}});
  CHECK(superpoint_pool(f, partition_from_labels(c, {0, 0, 0})) ==
        superpoint_pool(fp, partition_from_labels(cp, {0, 0, 0})));
}

TEST_CASE("centroid distances") {
  const PointCloud c({{0, 0, 0}, {3, 4, 0}, {0, 0, 1}}, std::vector<Vec3>(3, Vec3{0, 0, 0}));
  const SuperpointPartition p = partition_from_labels(c, {0, 1, 2});
  const Matrix d = pairwise_centroid_distances(p);
  CHECK(d(0, 1) == doctest::Approx(5.0));
  CHECK(d(1, 0) == d(0, 1));
  CHECK(d(2, 2) == 0.0);
  CHECK(centroid_distances_from({0, 0, 0}, p)(0, 2) == doctest::Approx(1.0));
  CHECK(partition_to_json(p).find("assignment") != std::string::npos);
}

}  // TEST_SUITE
