#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

#include "ost3d/scene.hpp"

namespace ost3d {

// ASCII PLY vertex data. `labels` holds the optional integer `label` property.
struct PlyPoints {
  PointCloud cloud;
  std::optional<std::vector<int>> labels;
};

// Reads x,y,z and optional red,green,blue,label from an ASCII PLY. Integer colors
// are scaled by their type range; float colors are taken as [0,1]. Non-vertex
// elements (faces, list properties) are skipped.
PlyPoints parse_ply(std::istream& in);
PlyPoints read_ply(const std::filesystem::path& path);
PointCloud load_pointcloud(const std::filesystem::path& path);

// Writes coordinates and colors as doubles with round-trip precision.
void save_pointcloud(const std::filesystem::path& path, const PointCloud& cloud);
// Writes an integer label per point next to the cloud.
void save_labeled_pointcloud(const std::filesystem::path& path, const PointCloud& cloud,
                             const std::vector<int>& labels);
// Mask file: labels are 0/1 and masked points are tinted red.
void save_mask_overlay(const std::filesystem::path& path, const PointCloud& cloud,
                       const PointMask& mask);
PointMask load_mask(const std::filesystem::path& path);

}  // namespace ost3d
