#include "ost3d/metrics.hpp"

#include <algorithm>
#include <deque>
#include <map>

#include "ost3d/errors.hpp"
#include "ost3d/spatial.hpp"

namespace ost3d {

double iou(const PointMask& pred, const PointMask& gt) {
  if (pred.size() != gt.size()) {
    throw ShapeError("iou: mask sizes " + std::to_string(pred.size()) + " and " +
                     std::to_string(gt.size()) + " differ");
  }
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] != 0, g = gt[i] != 0;
    inter += p && g;
    uni += p || g;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

bool EvalRecord::zero_target() const {
  return std::none_of(gt.begin(), gt.end(), [](std::uint8_t v) { return v != 0; });
}

EvalRecord make_record(std::string id, PointMask pred, PointMask gt) {
  EvalRecord r{std::move(id), std::move(pred), std::move(gt), 0.0};
  r.iou = iou(r.pred, r.gt);
  return r;
}

double miou(std::span<const EvalRecord> records) { return miou_summary(records).all; }

MiouSummary miou_summary(std::span<const EvalRecord> records) {
  MiouSummary s;
  double all = 0.0, target = 0.0, zero = 0.0;
  for (const EvalRecord& r : records) {
    all += r.iou;
    if (r.zero_target()) {
      zero += r.iou;
      ++s.zero_target_count;
    } else {
      target += r.iou;
      ++s.target_count;
    }
  }
  s.count = records.size();
  if (s.count) s.all = all / static_cast<double>(s.count);
  if (s.target_count) s.with_target = target / static_cast<double>(s.target_count);
  if (s.zero_target_count) s.zero_target = zero / static_cast<double>(s.zero_target_count);
  return s;
}

PointMask merge_masks(std::span<const PointMask> masks, std::size_t num_points) {
  PointMask out(num_points, 0);
  for (const PointMask& m : masks) {
    if (m.size() != num_points) throw ShapeError("merge_masks: mask size differs");
    for (std::size_t i = 0; i < num_points; ++i) out[i] = out[i] || m[i];
  }
  return out;
}

std::vector<int> dbscan(std::span<const Vec3> points, double eps, std::size_t min_pts) {
  if (!(eps > 0.0)) throw ConfigError("dbscan: eps must be positive");
  if (min_pts == 0) throw ConfigError("dbscan: min_pts must be >= 1");
  constexpr int kUnvisited = -2;
  std::vector<int> label(points.size(), kUnvisited);
  if (points.empty()) return {};
  const SpatialHash hash(points, eps);
  int next = 0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (label[i] != kUnvisited) continue;
    std::vector<std::size_t> nb = hash.radius(points[i], eps);
    if (nb.size() < min_pts) {
      label[i] = kNoise;
      continue;
    }
    const int c = next++;
    label[i] = c;
    std::deque<std::size_t> queue(nb.begin(), nb.end());
    while (!queue.empty()) {
      const std::size_t q = queue.front();
      queue.pop_front();
      if (label[q] == kNoise) label[q] = c;
      if (label[q] != kUnvisited) continue;
      label[q] = c;
      std::vector<std::size_t> qn = hash.radius(points[q], eps);
      if (qn.size() >= min_pts) queue.insert(queue.end(), qn.begin(), qn.end());
    }
  }
  return label;
}

double Aabb::volume() const {
  double v = 1.0;
  for (int k = 0; k < 3; ++k) v *= std::max(0.0, max[k] - min[k]);
  return v;
}

Aabb bounding_box(std::span<const Vec3> points) {
  if (points.empty()) throw ShapeError("bounding_box: no points");
  Aabb b{points.front(), points.front()};
  for (const Vec3& p : points)
    for (int k = 0; k < 3; ++k) {
      b.min[k] = std::min(b.min[k], p[k]);
      b.max[k] = std::max(b.max[k], p[k]);
    }
  return b;
}

double box_iou(const Aabb& a, const Aabb& b) {
  Aabb inter;
  for (int k = 0; k < 3; ++k) {
    inter.min[k] = std::max(a.min[k], b.min[k]);
    inter.max[k] = std::min(a.max[k], b.max[k]);
  }
  const double i = inter.volume();
  const double u = a.volume() + b.volume() - i;
  if (u <= 0.0) return a.min == b.min && a.max == b.max ? 1.0 : 0.0;
  return i / u;
}

std::optional<Aabb> mask_to_box(const PointMask& mask, std::span<const Vec3> coords, double eps,
                                std::size_t min_pts) {
  if (mask.size() != coords.size()) throw ShapeError("mask_to_box: mask size differs from cloud");
  std::vector<Vec3> pts;
  std::map<Vec3, bool> seen;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i] && seen.emplace(coords[i], true).second) pts.push_back(coords[i]);
  if (pts.empty()) return std::nullopt;

  const std::vector<int> labels = dbscan(pts, eps, min_pts);
  const int clusters = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
  if (clusters == 0) return bounding_box(pts);
  std::vector<std::size_t> count(static_cast<std::size_t>(clusters), 0);
  for (int l : labels)
    if (l >= 0) ++count[static_cast<std::size_t>(l)];
  const int best = static_cast<int>(std::max_element(count.begin(), count.end()) - count.begin());
  std::vector<Vec3> kept;
  for (std::size_t i = 0; i < pts.size(); ++i)
    if (labels[i] == best) kept.push_back(pts[i]);
  return bounding_box(kept);
}

AccAtIou acc_at_iou(std::span<const std::optional<Aabb>> pred, std::span<const Aabb> gt) {
  if (pred.size() != gt.size()) throw ShapeError("acc_at_iou: prediction and gt counts differ");
  AccAtIou acc;
  if (gt.empty()) return acc;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (!pred[i]) continue;
    const double v = box_iou(*pred[i], gt[i]);
    acc.acc_25 += v >= 0.25;
    acc.acc_50 += v >= 0.5;
  }
  acc.acc_25 /= static_cast<double>(gt.size());
  acc.acc_50 /= static_cast<double>(gt.size());
  return acc;
}

}  // namespace ost3d
