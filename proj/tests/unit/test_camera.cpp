#include <cmath>

#include "doctest.h"

#include "ost3d/camera.hpp"
#include "ost3d/errors.hpp"

using namespace ost3d;

namespace {

// Eye on the -x axis looking at the origin: right = -y, down = -z, forward = +x.
Camera side_camera() { return look_at({-5, 0, 0}, {0, 0, 0}, 10.0, 11, 11); }

}  // namespace

TEST_SUITE("training") {

TEST_CASE("pinhole projection of a known point") {
  Camera cam = side_camera();
  const Vec3 p{0, -1, 0.5};
  const Vec3 pc = cam.to_camera(p);
  CHECK(pc[0] == doctest::Approx(1.0));
  CHECK(pc[1] == doctest::Approx(-0.5));
  CHECK(pc[2] == doctest::Approx(5.0));
  const Vec3 pts[] = {p};
  render(cam, pts, Matrix(1, 2, 1.0), 0);
  const Projection proj = project_points(pts, cam, 0.01);
  CHECK(proj.uv[0][0] == doctest::Approx(10.0 * 1.0 / 5.0 + 5.0));
  CHECK(proj.uv[0][1] == doctest::Approx(10.0 * -0.5 / 5.0 + 5.0));
  CHECK(proj.visible[0] == 1);
}

TEST_CASE("z-buffer occludes the farther point on a ray") {
  Camera cam = side_camera();
  const Vec3 pts[] = {{0, 0, 0}, {2, 0, 0}, {-10, 0, 0}};
  render(cam, pts, Matrix::from_rows({{1}, {2}, {3}}), 1);
  CHECK(cam.depth(5, 5) == doctest::Approx(5.0));
  CHECK(cam.features(5 * 11 + 5, 0) == 1.0);
  const Projection proj = project_points(pts, cam, 0.05);
  CHECK(proj.visible == std::vector<std::uint8_t>{1, 0, 0});  // third point is behind the camera
}

TEST_CASE("bilinear sampling reproduces a linear image exactly") {
  Camera cam = side_camera();
  cam.features = Matrix(11 * 11, 1);
  for (std::size_t v = 0; v < 11; ++v)
    for (std::size_t u = 0; u < 11; ++u) cam.features(v * 11 + u, 0) = 2.0 * u + 3.0 * v + 1.0;
  for (const auto& [u, v] : std::vector<std::pair<double, double>>{{0.25, 0.75}, {4.5, 9.1}, {9.99, 0.01}, {3, 3}}) {
    CHECK(sample_bilinear(cam, u, v)(0, 0) == doctest::Approx(2.0 * u + 3.0 * v + 1.0));
  }
  CHECK(sample_bilinear(cam, 10.0, 10.0)(0, 0) == doctest::Approx(51.0));
}

TEST_CASE("lifting and superpoint KD targets") {
  Camera cam = side_camera();
  const Vec3 pts[] = {{0, 0, 0}, {0, -1, 0}, {0, 50, 0}};
  render(cam, pts, Matrix::from_rows({{2, 0}, {4, 6}, {9, 9}}), 0);
  const Camera cams[] = {cam};
  const LiftedFeatures lifted = lift_features(cams, pts, 0.01);
  CHECK(lifted.valid == std::vector<std::uint8_t>{1, 1, 0});
  CHECK(lifted.features(1, 1) == doctest::Approx(6.0));
  const PointCloud cloud({pts[0], pts[1], pts[2]}, std::vector<Vec3>(3, Vec3{0, 0, 0}));
  const KdTargets kd = kd_targets(lifted, partition_from_labels(cloud, {0, 0, 1}));
  CHECK(kd.valid == std::vector<std::uint8_t>{1, 0});
  CHECK(kd.targets(0, 0) == doctest::Approx(3.0));
  CHECK(kd.targets(0, 1) == doctest::Approx(3.0));
}

TEST_CASE("ring cameras all see the center") {
  const auto cams = ring_cameras({1, 1, 0}, 2.0, 1.0, 4, 20.0, 32, 32);
  REQUIRE(cams.size() == 4);
  for (const Camera& c : cams) CHECK(c.to_camera({1, 1, 0})[2] == doctest::Approx(std::sqrt(5.0)));
  CHECK_THROWS_AS(look_at({0, 0, 0}, {0, 0, 0}, 1.0, 4, 4), ConfigError);
}

}  // TEST_SUITE
