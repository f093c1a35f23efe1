#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ost3d/scene.hpp"

namespace ost3d {

// |pred & gt| / |pred | gt|; two empty masks score 1.
double iou(const PointMask& pred, const PointMask& gt);

struct EvalRecord {
  std::string id;
  PointMask pred;
  PointMask gt;
  double iou = 0.0;
  bool zero_target() const;
};

EvalRecord make_record(std::string id, PointMask pred, PointMask gt);

struct MiouSummary {
  double all = 0.0;          // every record
  double with_target = 0.0;  // records whose gt is non-empty
  double zero_target = 0.0;  // records whose gt is empty
  std::size_t count = 0;
  std::size_t target_count = 0;
  std::size_t zero_target_count = 0;
};

double miou(std::span<const EvalRecord> records);
MiouSummary miou_summary(std::span<const EvalRecord> records);

// Set union; an empty list gives an empty mask of `num_points`.
PointMask merge_masks(std::span<const PointMask> masks, std::size_t num_points);

inline constexpr int kNoise = -1;

// Density clustering with core-point expansion in index order. Labels are
// numbered in order of discovery; noise is kNoise. min_pts counts the point itself.
std::vector<int> dbscan(std::span<const Vec3> points, double eps, std::size_t min_pts);

struct Aabb {
  Vec3 min{0, 0, 0};
  Vec3 max{0, 0, 0};

  double volume() const;
};

Aabb bounding_box(std::span<const Vec3> points);
double box_iou(const Aabb& a, const Aabb& b);

// DBSCAN over the unique mask coordinates, largest cluster (ties to the lower
// label), then its bounds. All-noise falls back to the bounds of every mask point.
// nullopt for an empty mask.
std::optional<Aabb> mask_to_box(const PointMask& mask, std::span<const Vec3> coords, double eps,
                                std::size_t min_pts);

struct AccAtIou {
  double acc_25 = 0.0;
  double acc_50 = 0.0;
};

// A missing prediction counts as a miss.
AccAtIou acc_at_iou(std::span<const std::optional<Aabb>> pred, std::span<const Aabb> gt);

}  // namespace ost3d
