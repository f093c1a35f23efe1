#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "doctest.h"

#include "ost3d/errors.hpp"
#include "ost3d/ply.hpp"
#include "ost3d/scene.hpp"
#include "ost3d/synthetic.hpp"

using namespace ost3d;
namespace fs = std::filesystem;

namespace {

fs::path fixture(const char* name) { return fs::path(OST3D_FIXTURE_DIR) / name; }

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("ost3d_unit_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_SUITE("scene-io") {

TEST_CASE("hand-written three-point PLY") {
  const PlyPoints p = read_ply(fixture("three_points.ply"));
  REQUIRE(p.cloud.size() == 3);
  CHECK(p.cloud.coords()[1] == Vec3{1.5, -2.0, 0.25});
  CHECK(p.cloud.colors()[0] == Vec3{1.0, 0.0, 0.0});
  CHECK(p.cloud.colors()[2] == Vec3{0.0, 0.0, 1.0});
  REQUIRE(p.labels);
  CHECK(*p.labels == std::vector<int>{1, 0, 1});
  CHECK(load_mask(fixture("three_points.ply")) == PointMask{1, 0, 1});
}

TEST_CASE("malformed PLY reports the line") {
  try {
    read_ply(fixture("broken_count.ply"));
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 9);
  }
  std::istringstream no_magic("plx\n");
  CHECK_THROWS_AS(parse_ply(no_magic), ParseError);
  std::istringstream binary("ply\nformat binary_little_endian 1.0\nend_header\n");
  CHECK_THROWS_AS(parse_ply(binary), ParseError);
  CHECK_THROWS_AS(read_ply("/nonexistent/cloud.ply"), IoError);
}

TEST_CASE("PLY round trip is exact") {
  const SyntheticScene s = generate_scene(3, SceneConfig::toy_default());
  const fs::path dir = temp_dir("ply_rt");
  save_labeled_pointcloud(dir / "a.ply", s.cloud, s.instance_labels);
  const PlyPoints back = read_ply(dir / "a.ply");
  CHECK(back.cloud.coords() == s.cloud.coords());
  CHECK(*back.labels == s.instance_labels);
  for (std::size_t i = 0; i < s.cloud.size(); ++i)
    for (int c = 0; c < 3; ++c) CHECK(std::abs(back.cloud.colors()[i][c] - s.cloud.colors()[i][c]) <= 0.5 / 255 + 1e-12);
}

TEST_CASE("point cloud validation") {
  CHECK_THROWS_AS(PointCloud({}, {}), Error);
  CHECK_THROWS_AS(PointCloud({{0, 0, 0}}, {}), ShapeError);
  CHECK_THROWS_AS(PointCloud({{0, std::nan(""), 0}}, {{0, 0, 0}}), NonFiniteError);
  const PointCloud c({{0, 0, 0}}, {{2.0, -1.0, 0.5}});
  CHECK(c.colors()[0] == Vec3{1.0, 0.0, 0.5});
}

TEST_CASE("voxelize matches floor-division bucketing") {
  const SyntheticScene s = generate_scene(5, SceneConfig::toy_default());
  const double vs = 0.05;
  const VoxelGrid g = voxelize(s.cloud, vs);
  std::map<std::array<long, 3>, std::vector<std::size_t>> buckets;
  for (std::size_t i = 0; i < s.cloud.size(); ++i) {
    const Vec3& p = s.cloud.coords()[i];
    buckets[{static_cast<long>(std::floor(p[0] / vs)), static_cast<long>(std::floor(p[1] / vs)),
             static_cast<long>(std::floor(p[2] / vs))}].push_back(i);
  }
  REQUIRE(g.size() == buckets.size());
  for (const auto& [key, members] : buckets) {
    const std::size_t v = g.index.at(VoxelKey{key[0], key[1], key[2]});
    double mx = 0;
    for (std::size_t i : members) {
      CHECK(g.point_to_voxel[i] == v);
      mx += s.cloud.coords()[i][0] / static_cast<double>(members.size());
    }
    CHECK(g.features(v, 0) == doctest::Approx(mx));
  }
  // first-appearance order
  CHECK(g.point_to_voxel[0] == 0);
}

TEST_CASE("scene generation is a pure function of seed and config") {
  const SceneConfig cfg = SceneConfig::toy_default();
  const SyntheticScene a = generate_scene(11, cfg), b = generate_scene(11, cfg);
  CHECK(a.cloud.coords() == b.cloud.coords());
  CHECK(a.instance_labels == b.instance_labels);
  CHECK(a.teacher_features == b.teacher_features);
  const SyntheticScene c = generate_scene(12, cfg);
  CHECK(a.cloud.coords() != c.cloud.coords());
}

TEST_CASE("instance ids are contiguous and teacher rows are unit norm") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const SyntheticScene s = generate_scene(seed, SceneConfig::toy_default());
    std::set<int> ids(s.instance_labels.begin(), s.instance_labels.end());
    ids.erase(-1);
    REQUIRE_FALSE(ids.empty());
    CHECK(*ids.begin() == 0);
    CHECK(*ids.rbegin() == static_cast<int>(ids.size()) - 1);
    CHECK(ids.size() <= 4);
    for (std::size_t i = 0; i < s.cloud.size(); ++i) {
      CHECK((s.instance_labels[i] < 0) == (s.semantic_labels[i] < 0));
      double n = 0;
      for (double v : s.teacher_features.row(i)) n += v * v;
      CHECK(n == doctest::Approx(1.0));
    }
  }
}

TEST_CASE("three boxes give exactly three instances") {
  SceneConfig cfg = SceneConfig::toy_default();
  cfg.categories = {{"a", ShapeKind::Box, {1, 0, 0}, 0.3, 0.4, 0.3, 0.4},
                    {"b", ShapeKind::Box, {0, 1, 0}, 0.3, 0.4, 0.3, 0.4}};
  cfg.min_objects = cfg.max_objects = 3;
  const SyntheticScene s = generate_scene(1, cfg);
  CHECK(s.num_instances() == 3);
}

TEST_CASE("degenerate scene configs are rejected") {
  SceneConfig cfg = SceneConfig::toy_default();
  cfg.max_objects = 0;
  CHECK_THROWS_AS(generate_scene(1, cfg), ConfigError);
  cfg = SceneConfig::toy_default();
  cfg.categories.resize(1);
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK_THROWS_AS(parse_shape("cone"), ConfigError);
}

TEST_CASE("scene save and load round trip") {
  const SyntheticScene s = generate_scene(21, SceneConfig::toy_default());
  const fs::path dir = temp_dir("scene_rt");
  save_scene(dir, "s", s);
  const SyntheticScene b = load_scene(dir, "s");
  CHECK(b.cloud.coords() == s.cloud.coords());
  CHECK(b.instance_labels == s.instance_labels);
  CHECK(b.semantic_labels == s.semantic_labels);
  CHECK(b.teacher_features == s.teacher_features);
  CHECK(b.category_names == s.category_names);
  CHECK_THROWS_AS(load_scene(dir, "missing"), Error);
}

}  // TEST_SUITE
