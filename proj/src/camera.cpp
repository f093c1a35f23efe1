#include "ost3d/camera.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "ost3d/errors.hpp"

namespace ost3d {

namespace {

Vec3 sub(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }

Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

Vec3 normalized(const Vec3& a) {
  const double n = std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]);
  if (n == 0.0) throw ConfigError("camera: degenerate direction");
  return {a[0] / n, a[1] / n, a[2] / n};
}

std::array<double, 3> pixel_of(const Camera& cam, const Vec3& pc) {
  const Matrix& k = cam.intrinsics;
  const double u = (k(0, 0) * pc[0] + k(0, 1) * pc[1]) / pc[2] + k(0, 2);
  const double v = k(1, 1) * pc[1] / pc[2] + k(1, 2);
  return {u, v, pc[2]};
}

}  // namespace

Vec3 Camera::to_camera(const Vec3& p) const {
  const Matrix& m = world_to_camera;
  Vec3 out{};
  for (std::size_t r = 0; r < 3; ++r) out[r] = m(r, 0) * p[0] + m(r, 1) * p[1] + m(r, 2) * p[2] + m(r, 3);
  return out;
}

void Camera::validate() const {
  if (intrinsics.rows() != 3 || intrinsics.cols() != 3) throw ShapeError("camera: intrinsics must be 3 x 3");
  if (world_to_camera.rows() != 4 || world_to_camera.cols() != 4) {
    throw ShapeError("camera: extrinsics must be 4 x 4");
  }
  if (intrinsics(0, 0) == 0.0 || intrinsics(1, 1) == 0.0) throw ConfigError("camera: zero focal length");
  if (width == 0 || height == 0) throw ConfigError("camera: empty image");
  if (depth.rows() != height || depth.cols() != width) throw ShapeError("camera: depth map shape");
  if (features.rows() != height * width) throw ShapeError("camera: feature image shape");
}

Camera look_at(const Vec3& eye, const Vec3& target, double focal, std::size_t width,
               std::size_t height) {
  const Vec3 fwd = normalized(sub(target, eye));
  Vec3 up{0, 0, 1};
  if (std::abs(fwd[2]) > 0.999) up = {0, 1, 0};
  const Vec3 right = normalized(cross(fwd, up));
  const Vec3 down = cross(fwd, right);
  Camera cam;
  cam.width = width;
  cam.height = height;
  cam.intrinsics = Matrix::from_rows({{focal, 0, (static_cast<double>(width) - 1) / 2},
                                      {0, focal, (static_cast<double>(height) - 1) / 2},
                                      {0, 0, 1}});
  const Vec3 axes[3] = {right, down, fwd};
  for (std::size_t r = 0; r < 3; ++r) {
    double t = 0.0;
    for (std::size_t c = 0; c < 3; ++c) {
      cam.world_to_camera(r, c) = axes[r][c];
      t -= axes[r][c] * eye[c];
    }
    cam.world_to_camera(r, 3) = t;
  }
  cam.depth = Matrix(height, width);
  return cam;
}

std::vector<Camera> ring_cameras(const Vec3& center, double radius, double height,
                                 std::size_t count, double focal, std::size_t width,
                                 std::size_t image_height) {
  std::vector<Camera> cams;
  for (std::size_t i = 0; i < count; ++i) {
    const double a = 2.0 * std::numbers::pi * (static_cast<double>(i) + 0.5) / static_cast<double>(count);
    const Vec3 eye{center[0] + radius * std::cos(a), center[1] + radius * std::sin(a),
                   center[2] + height};
    cams.push_back(look_at(eye, center, focal, width, image_height));
  }
  return cams;
}

void render(Camera& cam, std::span<const Vec3> coords, const Matrix& point_features,
            int splat_radius) {
  if (point_features.rows() != coords.size()) throw ShapeError("render: feature rows != points");
  const std::size_t w = cam.width, h = cam.height;
  cam.depth = Matrix(h, w);
  cam.features = Matrix(h * w, point_features.cols());
  std::vector<std::size_t> owner(h * w, static_cast<std::size_t>(-1));
  for (std::size_t i = 0; i < coords.size(); ++i) {
    const Vec3 pc = cam.to_camera(coords[i]);
    if (pc[2] <= 0.0) continue;
    const auto [u, v, z] = pixel_of(cam, pc);
    const long cu = std::lround(u), cv = std::lround(v);
    for (long dv = -splat_radius; dv <= splat_radius; ++dv)
      for (long du = -splat_radius; du <= splat_radius; ++du) {
        const long x = cu + du, y = cv + dv;
        if (x < 0 || y < 0 || x >= static_cast<long>(w) || y >= static_cast<long>(h)) continue;
        double& d = cam.depth(static_cast<std::size_t>(y), static_cast<std::size_t>(x));
        if (d == 0.0 || z < d) {
          d = z;
          owner[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)] = i;
        }
      }
  }
  for (std::size_t px = 0; px < owner.size(); ++px) {
    if (owner[px] == static_cast<std::size_t>(-1)) continue;
    const auto src = point_features.row(owner[px]);
    std::copy(src.begin(), src.end(), cam.features.row(px).begin());
  }
}

Projection project_points(std::span<const Vec3> coords, const Camera& cam, double depth_tol) {
  Projection out;
  out.uv.resize(coords.size());
  out.depth.resize(coords.size());
  out.visible.assign(coords.size(), 0);
  const double wmax = static_cast<double>(cam.width) - 1, hmax = static_cast<double>(cam.height) - 1;
  for (std::size_t i = 0; i < coords.size(); ++i) {
    const Vec3 pc = cam.to_camera(coords[i]);
    out.depth[i] = pc[2];
    if (pc[2] <= 0.0) {
      out.uv[i] = {std::nan(""), std::nan("")};
      continue;
    }
    const auto [u, v, z] = pixel_of(cam, pc);
    out.uv[i] = {u, v};
    if (u < 0.0 || v < 0.0 || u > wmax || v > hmax) continue;
    const double d = cam.depth(static_cast<std::size_t>(std::lround(v)), static_cast<std::size_t>(std::lround(u)));
    out.visible[i] = d > 0.0 && std::abs(z - d) <= depth_tol;
  }
  return out;
}

Matrix sample_bilinear(const Camera& cam, double u, double v) {
  const double wmax = static_cast<double>(cam.width) - 1, hmax = static_cast<double>(cam.height) - 1;
  u = std::clamp(u, 0.0, wmax);
  v = std::clamp(v, 0.0, hmax);
  const std::size_t u0 = static_cast<std::size_t>(std::floor(u)), v0 = static_cast<std::size_t>(std::floor(v));
  const std::size_t u1 = std::min(u0 + 1, cam.width - 1), v1 = std::min(v0 + 1, cam.height - 1);
  const double fu = u - static_cast<double>(u0), fv = v - static_cast<double>(v0);
  Matrix out(1, cam.features.cols());
  auto acc = [&](std::size_t x, std::size_t y, double wgt) {
    if (wgt == 0.0) return;
    const auto r = cam.features.row(y * cam.width + x);
    for (std::size_t c = 0; c < out.cols(); ++c) out(0, c) += wgt * r[c];
  };
  acc(u0, v0, (1 - fu) * (1 - fv));
  acc(u1, v0, fu * (1 - fv));
  acc(u0, v1, (1 - fu) * fv);
  acc(u1, v1, fu * fv);
  return out;
}

LiftedFeatures lift_features(std::span<const Camera> cams, std::span<const Vec3> coords,
                             double depth_tol) {
  if (cams.empty()) throw ConfigError("lift_features: need at least one camera");
  const std::size_t c = cams.front().features.cols();
  LiftedFeatures out{Matrix(coords.size(), c), std::vector<std::uint8_t>(coords.size(), 0)};
  std::vector<std::size_t> views(coords.size(), 0);
  for (const Camera& cam : cams) {
    cam.validate();
    if (cam.features.cols() != c) throw ShapeError("lift_features: cameras disagree on feature width");
    const Projection proj = project_points(coords, cam, depth_tol);
    for (std::size_t i = 0; i < coords.size(); ++i) {
      if (!proj.visible[i]) continue;
      const Matrix s = sample_bilinear(cam, proj.uv[i][0], proj.uv[i][1]);
      for (std::size_t k = 0; k < c; ++k) out.features(i, k) += s(0, k);
      ++views[i];
    }
  }
  for (std::size_t i = 0; i < coords.size(); ++i) {
    if (views[i] == 0) continue;
    out.valid[i] = 1;
    for (double& v : out.features.row(i)) v /= static_cast<double>(views[i]);
  }
  return out;
}

KdTargets kd_targets(const LiftedFeatures& lifted, const SuperpointPartition& part) {
  if (lifted.features.rows() != part.num_points()) throw ShapeError("kd_targets: point count");
  const std::size_t m = part.size(), c = lifted.features.cols();
  KdTargets out{Matrix(m, c), std::vector<std::uint8_t>(m, 0)};
  std::vector<std::size_t> count(m, 0);
  for (std::size_t i = 0; i < part.num_points(); ++i) {
    if (!lifted.valid[i]) continue;
    const std::size_t s = part.assignment[i];
    ++count[s];
    const auto r = lifted.features.row(i);
    for (std::size_t k = 0; k < c; ++k) out.targets(s, k) += r[k];
  }
  for (std::size_t s = 0; s < m; ++s) {
    if (count[s] == 0) continue;
    out.valid[s] = 1;
    for (double& v : out.targets.row(s)) v /= static_cast<double>(count[s]);
  }
  return out;
}

}  // namespace ost3d
