#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ost3d/matrix.hpp"
#include "ost3d/scene.hpp"
#include "ost3d/superpoint.hpp"

namespace ost3d {

// Pinhole camera with a rendered feature image and depth map.
struct Camera {
  Matrix intrinsics = Matrix::identity(3);      // 3 x 3
  Matrix world_to_camera = Matrix::identity(4);  // 4 x 4, camera looks along +z
  std::size_t width = 0;
  std::size_t height = 0;
  Matrix features;  // (height * width) x C, row = v * width + u
  Matrix depth;     // height x width, 0 = empty pixel

  Vec3 to_camera(const Vec3& p) const;
  void validate() const;
};

// Camera at `eye` looking at `target` with +y of the image pointing down.
Camera look_at(const Vec3& eye, const Vec3& target, double focal, std::size_t width,
               std::size_t height);

// `count` cameras evenly spaced on a horizontal ring around `center`.
std::vector<Camera> ring_cameras(const Vec3& center, double radius, double height,
                                 std::size_t count, double focal, std::size_t width,
                                 std::size_t image_height);

// Z-buffered point splatting: each point covers the pixels within `splat_radius`
// of its projection; the nearest point wins.
void render(Camera& cam, std::span<const Vec3> coords, const Matrix& point_features,
            int splat_radius = 1);

struct Projection {
  std::vector<std::array<double, 2>> uv;
  std::vector<double> depth;
  std::vector<std::uint8_t> visible;
};

// Visible iff the projection lies in [0, W-1] x [0, H-1], depth > 0 and the depth
// map at the nearest pixel is within depth_tol of the point depth.
Projection project_points(std::span<const Vec3> coords, const Camera& cam, double depth_tol);

// Bilinear sample of the feature image at continuous pixel (u, v).
Matrix sample_bilinear(const Camera& cam, double u, double v);

struct LiftedFeatures {
  Matrix features;  // N x C, zero rows for invalid points
  std::vector<std::uint8_t> valid;
};

// Mean of bilinear samples over the views where each point is visible.
LiftedFeatures lift_features(std::span<const Camera> cams, std::span<const Vec3> coords,
                             double depth_tol);

struct KdTargets {
  Matrix targets;  // M x C
  std::vector<std::uint8_t> valid;
};

// Mean of the valid member rows; a superpoint without valid members is invalid.
KdTargets kd_targets(const LiftedFeatures& lifted, const SuperpointPartition& part);

}  // namespace ost3d
