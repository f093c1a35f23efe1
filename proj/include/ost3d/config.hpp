#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ost3d/model.hpp"
#include "ost3d/synthetic.hpp"
#include "ost3d/trainer.hpp"

namespace ost3d {

struct DataConfig {
  std::size_t train_scenes = 128;
  std::size_t val_scenes = 32;
  // Held-out scenes for the referring suite, disjoint from train and val.
  std::size_t referring_scenes = 48;
};

struct EvalConfig {
  double dbscan_eps = 0.04;
  std::size_t dbscan_min_pts = 4;
  std::size_t referring_requests = 50;
  std::size_t zero_target_requests = 20;
};

struct AblationConfig {
  std::vector<std::size_t> k_values{50, 100, 200, 400};
  std::size_t ift_epochs = 3;
  std::size_t probe_epochs = 200;
  double probe_lr = 1e-2;
  std::size_t probe_hidden = 64;
  // Box prompts grow by up to this much per side (meters, uniform).
  double box_jitter = 0.1;
};

// Everything a command needs; derived widths (align_dim, num_classes, OST input
// width, category names) are filled from the scene and encoder sections.
struct RunConfig {
  std::uint64_t seed = 7;
  SceneConfig scene = SceneConfig::toy_default();
  DataConfig data;
  ModelConfig model;
  TrainConfig train;
  IftConfig ift;
  EvalConfig eval;
  AblationConfig ablation;

  // Recomputes derived fields and validates every section. Throws ConfigError.
  void finalize();
};

// Missing keys keep their defaults; unknown keys throw ConfigError.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::filesystem::path& path);
// Applies "a.b.c=value" assignments to a config document. The value is parsed as
// JSON when possible and taken as a string otherwise.
std::string apply_overrides(const std::string& json_text, std::span<const std::string> assignments);

// Full resolved config, every field present.
std::string run_config_to_json(const RunConfig& config);

// Independent seed streams derived from the run seed.
enum class SeedStream : std::uint64_t {
  TrainScene = 1,
  ValScene,
  ReferringScene,
  ModelInit,
  Pretrain,
  Ift,
  Ablation,
};

std::uint64_t derive_seed(std::uint64_t seed, SeedStream stream, std::uint64_t index = 0);

}  // namespace ost3d
