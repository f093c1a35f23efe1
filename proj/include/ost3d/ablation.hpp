#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ost3d/model.hpp"
#include "ost3d/trainer.hpp"

namespace ost3d {

struct TokenSweepRow {
  std::size_t k = 0;
  double mean_tokens = 0.0;  // visual tokens actually kept (K capped by M)
  double referring_miou = 0.0;
};

// For each K: copy the pretrained model, instruction-tune W_V / W_S with K visual
// tokens and score referring mIoU on the evaluation requests.
std::vector<TokenSweepRow> sweep_visual_tokens(const Model& pretrained,
                                               std::span<const TrainingScene> train_scenes,
                                               std::span<const ReferringRequest> train_requests,
                                               std::span<const TrainingScene> eval_scenes,
                                               std::span<const ReferringRequest> eval_requests,
                                               std::span<const std::size_t> ks,
                                               const IftConfig& ift, std::uint64_t seed);

enum class PromptParadigm { CoordinateProjection, Pooling, Ost };

std::string paradigm_name(PromptParadigm p);

// A box prompt around one instance, grown by a random margin per side.
struct ProbeSample {
  std::size_t scene = 0;
  BoxPrompt box;
  int category = -1;
};

std::vector<ProbeSample> box_probe_samples(std::span<const TrainingScene> scenes, double jitter,
                                           std::uint64_t seed);

struct ProbeConfig {
  std::size_t epochs = 200;
  double lr = 1e-2;
  std::size_t hidden = 64;
};

struct ParadigmRow {
  PromptParadigm paradigm = PromptParadigm::Ost;
  double train_accuracy = 0.0;
  double accuracy = 0.0;
};

// Box prompt -> category proxy. Each paradigm's prompt embedding goes through a
// fresh projector MLP into the LM width; logits are dot products with the frozen
// category-word embeddings, trained with cross-entropy. The coordinate paradigm
// trains its coordinate MLP jointly with the projector.
std::vector<ParadigmRow> compare_prompt_paradigms(const Model& pretrained,
                                                  std::span<const TrainingScene> train_scenes,
                                                  std::span<const TrainingScene> eval_scenes,
                                                  double jitter, const ProbeConfig& probe,
                                                  std::uint64_t seed);

}  // namespace ost3d
