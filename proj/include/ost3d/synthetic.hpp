#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ost3d/matrix.hpp"
#include "ost3d/scene.hpp"

namespace ost3d {

enum class ShapeKind { Box, Sphere, Cylinder };

ShapeKind parse_shape(const std::string& name);
std::string shape_name(ShapeKind kind);

struct CategorySpec {
  std::string name;
  ShapeKind shape = ShapeKind::Box;
  Vec3 color{0.5, 0.5, 0.5};
  // Footprint extent (box side / diameter) range in meters.
  double min_size = 0.3;
  double max_size = 0.5;
  // Height range; spheres ignore it.
  double min_height = 0.3;
  double max_height = 0.6;
};

struct SceneConfig {
  std::vector<CategorySpec> categories;
  double floor_extent = 2.0;
  Vec3 floor_color{0.55, 0.55, 0.55};
  std::size_t min_objects = 1;
  std::size_t max_objects = 4;
  bool unique_categories = false;
  double min_gap = 0.12;
  double object_spacing = 0.035;
  double floor_spacing = 0.06;
  double color_noise = 0.02;
  std::size_t teacher_dim = 16;
  double teacher_noise = 0.05;
  std::uint64_t teacher_seed = 1234;

  void validate() const;
  static SceneConfig toy_default();
};

struct SyntheticScene {
  PointCloud cloud;
  // -1 marks the floor.
  std::vector<int> instance_labels;
  // -1 marks the floor.
  std::vector<int> semantic_labels;
  // N x teacher_dim, unit-norm rows.
  Matrix teacher_features;
  std::vector<std::string> category_names;

  std::size_t num_instances() const;
  // Category of each instance id.
  std::vector<int> instance_categories() const;
  PointMask instance_mask(int instance) const;
};

// Unit-norm embedding per category plus a final row for the floor.
Matrix category_embeddings(const SceneConfig& config);

// Pure function of (seed, config).
SyntheticScene generate_scene(std::uint64_t seed, const SceneConfig& config);

// <stem>.ply, <stem>.json annotation sidecar and <stem>.teacher.bin
// (little-endian float64, rows x cols given in the sidecar).
void save_scene(const std::filesystem::path& dir, const std::string& stem,
                const SyntheticScene& scene);
SyntheticScene load_scene(const std::filesystem::path& dir, const std::string& stem);

}  // namespace ost3d
