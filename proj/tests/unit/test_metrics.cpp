#include <random>

#include "doctest.h"

#include "../common/oracles.hpp"
#include "ost3d/errors.hpp"
#include "ost3d/metrics.hpp"

using namespace ost3d;

TEST_SUITE("eval-metrics") {

TEST_CASE("mask IoU") {
  CHECK(iou({1, 1, 0, 0}, {0, 1, 1, 0}) == doctest::Approx(1.0 / 3.0));
  CHECK(iou({0, 0, 0}, {0, 0, 0}) == 1.0);
  CHECK(iou({1, 0, 0}, {0, 0, 0}) == 0.0);
  CHECK_THROWS_AS(iou({1, 0}, {1, 0, 0}), ShapeError);
}

TEST_CASE("mIoU buckets") {
  const EvalRecord r[] = {make_record("a", {1, 1}, {1, 0}), make_record("b", {0, 0}, {0, 0}),
                          make_record("c", {1, 0}, {0, 0})};
  CHECK(r[1].zero_target());
  const MiouSummary s = miou_summary(r);
  CHECK(s.all == doctest::Approx(0.5));
  CHECK(s.with_target == doctest::Approx(0.5));
  CHECK(s.zero_target == doctest::Approx(0.5));
  CHECK(s.target_count == 1);
  CHECK(s.zero_target_count == 2);
}

TEST_CASE("merge is a set union") {
  const PointMask m[] = {{1, 0, 0}, {0, 0, 1}};
  CHECK(merge_masks(m, 3) == PointMask{1, 0, 1});
  CHECK(merge_masks({}, 2) == PointMask{0, 0});
}

TEST_CASE("DBSCAN satisfies the cluster definition") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 25; ++trial) {
    std::vector<Vec3> pts;
    const std::size_t n = 20 + trial * 3;
    for (std::size_t i = 0; i < n; ++i) pts.push_back({u(rng), u(rng), 0.2 * u(rng)});
    const double eps = 0.08 + 0.01 * (trial % 5);
    const std::size_t min_pts = 2 + trial % 4;
    std::string why;
    CHECK_MESSAGE(oracle::dbscan_matches_definition(pts, eps, min_pts, dbscan(pts, eps, min_pts), &why), why);
  }
}

TEST_CASE("DBSCAN labels two separated blobs and noise") {
  std::vector<Vec3> pts;
  for (int i = 0; i < 5; ++i) pts.push_back({0.01 * i, 0, 0});
  for (int i = 0; i < 5; ++i) pts.push_back({5 + 0.01 * i, 0, 0});
  pts.push_back({50, 50, 50});
  const std::vector<int> l = dbscan(pts, 0.05, 3);
  CHECK(l[0] == 0);
  CHECK(l[9] == 1);
  CHECK(l[10] == kNoise);
}

TEST_CASE("box IoU agrees with grid integration") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    Aabb a, b;
    for (int d = 0; d < 3; ++d) {
      a.min[d] = u(rng);
      a.max[d] = a.min[d] + 0.2 + u(rng);
      b.min[d] = u(rng);
      b.max[d] = b.min[d] + 0.2 + u(rng);
    }
    CHECK(box_iou(a, b) == doctest::Approx(oracle::box_iou_grid(a, b, 96)).epsilon(0.03));
  }
  const Aabb unit{{0, 0, 0}, {1, 1, 1}};
  CHECK(box_iou(unit, unit) == 1.0);
  CHECK(box_iou(unit, Aabb{{2, 2, 2}, {3, 3, 3}}) == 0.0);
  CHECK(box_iou(unit, Aabb{{0, 0, 0}, {2, 1, 1}}) == doctest::Approx(0.5));
}

TEST_CASE("mask_to_box drops outliers, keeps the largest cluster") {
  std::vector<Vec3> pts;
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < 10; ++j) pts.push_back({0.01 * i, 0.01 * j, 0});
  pts.push_back({3, 3, 3});
  const PointMask all(pts.size(), 1);
  const auto box = mask_to_box(all, pts, 0.02, 3);
  REQUIRE(box);
  CHECK(box->max[0] == doctest::Approx(0.09));
  CHECK(box->max[2] == 0.0);
  CHECK_FALSE(mask_to_box(PointMask(pts.size(), 0), pts, 0.02, 3));
  PointMask sparse(pts.size(), 0);
  sparse[0] = 1;
  sparse[100] = 1;
  const auto fallback = mask_to_box(sparse, pts, 0.02, 3);
  REQUIRE(fallback);
  CHECK(fallback->max == Vec3{3, 3, 3});
}

TEST_CASE("accuracy at IoU thresholds") {
  const Aabb gt[] = {{{0, 0, 0}, {1, 1, 1}}, {{0, 0, 0}, {1, 1, 1}}, {{0, 0, 0}, {1, 1, 1}}};
  const std::optional<Aabb> pred[] = {Aabb{{0, 0, 0}, {1, 1, 1}}, Aabb{{0, 0, 0}, {1, 1, 0.3}}, std::nullopt};
  const AccAtIou a = acc_at_iou(pred, gt);
  CHECK(a.acc_25 == doctest::Approx(2.0 / 3.0));
  CHECK(a.acc_50 == doctest::Approx(1.0 / 3.0));
}

}  // TEST_SUITE
