#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ost3d/camera.hpp"
#include "ost3d/losses.hpp"
#include "ost3d/model.hpp"
#include "ost3d/optim.hpp"
#include "ost3d/synthetic.hpp"

namespace ost3d {

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 1;
  double lr = 2e-4;
  double min_lr = 0.0;
  AdamWConfig adamw;
  double cls_weight = 1.0;
  double mask_weight = 1.0;
  double kd_weight = 1.0;
  double no_object_weight = 1.0;
  MatchCosts match;

  std::size_t num_cameras = 4;
  std::size_t image_size = 64;
  double focal = 56.0;
  double camera_radius = 2.6;
  double camera_height = 1.6;
  double depth_tol = 0.05;
  int splat_radius = 1;

  void validate() const;
};

struct IftConfig {
  std::size_t epochs = 0;  // 0 skips instruction tuning
  double lr = 1e-3;
  double min_lr = 0.0;
  AdamWConfig adamw;

  void validate() const;
};

// A generated scene with everything stage-1 supervision needs.
struct TrainingScene {
  SyntheticScene scene;
  PreparedScene prepared;
  GtInstances gt;
  KdTargets kd;
};

TrainingScene make_training_scene(SyntheticScene scene, const ModelConfig& model,
                                  const TrainConfig& train);

struct StepLosses {
  double cls = 0.0;
  double mask = 0.0;
  double kd = 0.0;
  double total = 0.0;
};

struct Stage1Loss {
  ad::Var cls, mask, kd, total;
  MatchResult match;
};

// Stage-1 loss terms for one scene on the given tape.
Stage1Loss stage1_loss(const Model& model, const BoundParameters& p, const TrainingScene& ts,
                       const TrainConfig& cfg);

// One AdamW update on the mean loss over `batch`. Throws NonFiniteError on a
// non-finite loss.
StepLosses pretrain_step(Model& model, std::span<const TrainingScene* const> batch, AdamW& opt,
                         double lr, const TrainConfig& cfg);

using StepCallback = std::function<void(std::size_t step, const StepLosses&)>;

// Stage 1: encoder and OST on cls + mask + kd with a cosine schedule.
void pretrain(Model& model, std::span<const TrainingScene> scenes, const TrainConfig& cfg,
              std::uint64_t seed, const StepCallback& on_step = {});

struct InstanceEval {
  double mean_iou = 0.0;
  double accuracy = 0.0;
  std::size_t matched = 0;
};

// Hungarian-matched evaluation: point-level mask IoU and foreground-argmax class accuracy.
InstanceEval evaluate_instances(const Model& model, std::span<const TrainingScene> scenes);

struct ReferringRequest {
  std::size_t scene = 0;
  std::string text;
  int category = -1;  // -1 for zero-target requests
  int instance = -1;
  PointMask gt;
};

std::string referring_text(const std::string& category, bool present);

// One request per category that occurs exactly once in a scene, cycling over
// scenes until `count` requests exist (fewer if the scenes run out).
std::vector<ReferringRequest> referring_requests(std::span<const TrainingScene> scenes,
                                                 std::size_t count);
// Requests for categories absent from their scene; empty ground truth.
std::vector<ReferringRequest> zero_target_requests(std::span<const TrainingScene> scenes,
                                                   std::size_t count);

// Stage 2: W_V and W_S on the mask term of text + 0.1 * mask with the encoder and OST frozen.
// The stub LM has no trainable text path, so the text term is zero.
void instruction_tune(Model& model, std::span<const TrainingScene> scenes,
                      std::span<const ReferringRequest> requests, const IftConfig& cfg,
                      std::uint64_t seed, const StepCallback& on_step = {});

struct ReferringEval {
  std::vector<double> ious;
  double mean_iou = 0.0;
  std::size_t seg_count = 0;  // responses that produced [SEG]
};

ReferringEval evaluate_referring(const Model& model, std::span<const TrainingScene> scenes,
                                 std::span<const ReferringRequest> requests);

}  // namespace ost3d
