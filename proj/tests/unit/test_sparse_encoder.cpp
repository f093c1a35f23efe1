#include <random>
#include <set>

#include "doctest.h"

#include "ost3d/errors.hpp"
#include "ost3d/sparse_encoder.hpp"
#include "ost3d/synthetic.hpp"

using namespace ost3d;

namespace {

std::vector<VoxelKey> random_keys(std::mt19937_64& rng, std::size_t n, int span) {
  std::uniform_int_distribution<int> d(-span, span);
  std::set<VoxelKey> seen;
  std::vector<VoxelKey> keys;
  while (keys.size() < n) {
    const VoxelKey k{d(rng), d(rng), d(rng)};
    if (seen.insert(k).second) keys.push_back(k);
  }
  return keys;
}

}  // namespace

TEST_SUITE("sparse-encoder") {

TEST_CASE("tap layout") {
  CHECK(tap_index(0, 0, 0) == 13);
  CHECK(tap_index(-1, -1, -1) == 0);
  CHECK(tap_index(1, 1, 1) == 26);
}

TEST_CASE("sparse convolution equals a dense neighborhood sum") {
  std::mt19937_64 rng(2);
  const std::vector<VoxelKey> keys = random_keys(rng, 40, 3);
  const SparseLevel level = make_level(keys);
  const Matrix x = Matrix::random_normal(keys.size(), 3, rng, 1.0);
  const Matrix w = Matrix::random_normal(27 * 3, 2, rng, 1.0);
  const Matrix b = Matrix::random_normal(1, 2, rng, 1.0);
  ad::Tape t;
  const Matrix y = sparse_conv(t.constant(x), t.constant(w), t.constant(b), level).value();
  for (std::size_t o = 0; o < keys.size(); ++o) {
    for (std::size_t c = 0; c < 2; ++c) {
      double ref = b(0, c);
      for (std::size_t i = 0; i < keys.size(); ++i) {
        const long dx = keys[i].x - keys[o].x, dy = keys[i].y - keys[o].y, dz = keys[i].z - keys[o].z;
        if (std::abs(dx) > 1 || std::abs(dy) > 1 || std::abs(dz) > 1) continue;
        const std::size_t tap = tap_index(static_cast<int>(dx), static_cast<int>(dy), static_cast<int>(dz));
        for (std::size_t ci = 0; ci < 3; ++ci) ref += x(i, ci) * w(tap * 3 + ci, c);
      }
      CHECK(y(o, c) == doctest::Approx(ref).epsilon(1e-12));
    }
  }
}

TEST_CASE("unoccupied sites stay unoccupied") {
  const SparseLevel level = make_level({{0, 0, 0}, {5, 5, 5}});
  ad::Tape t;
  const Matrix w(27, 1, 1.0);
  const Matrix y = sparse_conv(t.constant(Matrix::from_rows({{1.0}, {2.0}})), t.constant(w),
                               t.constant(Matrix(1, 1)), level).value();
  CHECK(y.rows() == 2);
  CHECK(y(0, 0) == 1.0);
  CHECK(y(1, 0) == 2.0);
}

TEST_CASE("coarsening halves keys with floor division") {
  SparseLevel fine = make_level({{0, 0, 0}, {1, 1, 1}, {-1, 0, 0}, {2, 3, -3}});
  const SparseLevel coarse = coarsen(fine);
  REQUIRE(coarse.size() == 3);
  CHECK(coarse.keys[0] == VoxelKey{0, 0, 0});
  CHECK(coarse.keys[1] == VoxelKey{-1, 0, 0});
  CHECK(coarse.keys[2] == VoxelKey{1, 1, -2});
  CHECK(fine.parent == std::vector<std::size_t>{0, 0, 1, 2});
}

TEST_CASE("downsample averages children, upsample copies the parent") {
  SparseLevel fine = make_level({{0, 0, 0}, {1, 0, 0}, {4, 0, 0}});
  const SparseLevel coarse = coarsen(fine);
  ad::Tape t;
  const Matrix d = downsample(t.constant(Matrix::from_rows({{1}, {3}, {7}})), fine, coarse.size()).value();
  CHECK(d == Matrix::from_rows({{2}, {7}}));
  const Matrix u = upsample(t.constant(d), fine).value();
  CHECK(u == Matrix::from_rows({{2}, {2}, {7}}));
}

TEST_CASE("config validation") {
  UNetConfig c;
  c.channels = {8};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = UNetConfig{};
  c.voxel_size = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("encoder output shape and translation invariance by whole coarse cells") {
  UNetConfig cfg;
  cfg.channels = {4, 8};
  cfg.out_channels = 5;
  cfg.voxel_size = 0.0625;
  ParameterSet params;
  std::mt19937_64 rng(9);
  const SparseUNet net(cfg, params, rng);
  const SyntheticScene s = generate_scene(2, SceneConfig::toy_default());
  const Matrix f = encode_scene(s.cloud, net, params);
  CHECK(f.rows() == s.cloud.size());
  CHECK(f.cols() == 5);
  CHECK(f.all_finite());
  const Matrix g = encode_scene(s.cloud.translated({0.5, -0.25, 0.125 * 2}), net, params);
  CHECK(max_abs_diff(f, g) < 1e-9);
}

}  // TEST_SUITE
