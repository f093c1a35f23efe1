#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "ost3d/autodiff.hpp"
#include "ost3d/matrix.hpp"
#include "ost3d/superpoint.hpp"

namespace ost3d {

// Minimum-cost assignment of every row to a distinct column (rows <= cols is
// not required; the smaller side is fully assigned). Returns (row, col) pairs
// sorted by row.
std::vector<std::pair<std::size_t, std::size_t>> hungarian(const Matrix& cost);

// Ground-truth instances at superpoint level.
struct GtInstances {
  std::vector<int> categories;  // per instance
  Matrix masks;                 // G x M, 1 where the majority of a superpoint's points belong

  std::size_t size() const noexcept { return categories.size(); }
};

// instance_labels/semantic_labels use -1 for background.
GtInstances superpoint_targets(std::span<const int> instance_labels,
                               std::span<const int> semantic_labels,
                               const SuperpointPartition& part);

struct MatchCosts {
  double cls = 1.0;
  double mask = 1.0;  // applied to BCE + Dice
};

struct MatchResult {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (query, gt)
  double total_cost = 0.0;

  // Per-query target class, `no_object` for unmatched queries.
  std::vector<int> query_targets(std::size_t num_queries, int no_object,
                                 std::span<const int> categories) const;
};

// Mean BCE with logits and smoothed Dice of one mask row against a binary target row.
double bce_with_logits(std::span<const double> logits, std::span<const double> target);
double dice_loss(std::span<const double> logits, std::span<const double> target,
                 double smooth = 1.0);

// cost(q, g) = cls * -log softmax(logits_q)[cat_g] + mask * (BCE + Dice)(mask_q, gt_g)
Matrix matching_cost(const Matrix& class_logits, const Matrix& mask_logits, const GtInstances& gt,
                     const MatchCosts& w = {});
MatchResult hungarian_match(const Matrix& class_logits, const Matrix& mask_logits,
                            const GtInstances& gt, const MatchCosts& w = {});

// Weighted mean cross-entropy over rows; rows with target == no-object column
// are weighted by no_object_weight.
ad::Var cls_loss(ad::Var logits, std::span<const int> targets, double no_object_weight = 1.0);
// Mean over rows of (mean BCE + Dice). Zero rows give a constant 0.
ad::Var mask_loss(ad::Var mask_logits, const Matrix& targets, double smooth = 1.0);
// Mean over valid rows of [mean squared error + (1 - cosine)].
ad::Var kd_loss(ad::Var student, const Matrix& targets, std::span<const std::uint8_t> valid);
// text + 0.1 * mask
ad::Var ift_loss(ad::Var text_loss, ad::Var mask_loss);
double ift_loss(double text_loss, double mask_loss);

}  // namespace ost3d
