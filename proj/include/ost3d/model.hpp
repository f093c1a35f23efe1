#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ost3d/autodiff.hpp"
#include "ost3d/ost.hpp"
#include "ost3d/parameters.hpp"
#include "ost3d/pipeline.hpp"
#include "ost3d/prompt.hpp"
#include "ost3d/scene.hpp"
#include "ost3d/sparse_encoder.hpp"
#include "ost3d/superpoint.hpp"

namespace ost3d {

struct ModelConfig {
  UNetConfig encoder;
  OstConfig ost;
  SuperpointParams superpoints;
  std::size_t lm_dim = 64;
  std::size_t projector_hidden = 64;
  // Use the [SEG] hidden state itself instead of the token before it.
  bool seg_from_seg_state = false;
  std::vector<std::string> categories;

  void validate() const;
};

// Scene encoder, OST, projectors W_V / W_S and the stub LM's vocabulary and
// fixed token embeddings, all in one ParameterSet.
class Model {
 public:
  Model(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const noexcept { return config_; }
  const Matrix& token_embeddings() const { return params.value(embeddings_); }
  // Number of visual tokens selected from the OST.
  void set_top_k(std::size_t k);

  // Encoder and OST.
  std::vector<std::size_t> stage1_parameters() const;
  // W_V and W_S.
  std::vector<std::size_t> stage2_parameters() const;

  ParameterSet params;
  SparseUNet encoder;
  Ost ost;
  Mlp w_v;
  Mlp w_s;
  Vocabulary vocab;

 private:
  ModelConfig config_;
  std::size_t embeddings_ = 0;
};

// Geometry that does not depend on weights.
struct PreparedScene {
  PointCloud cloud;
  VoxelGrid grid;
  VoxelHierarchy hierarchy;
  SuperpointPartition part;
};

PreparedScene prepare_scene(const PointCloud& cloud, const ModelConfig& config);

struct SceneForward {
  ad::Var point_features;
  ad::Var superpoint_features;
  OstVars ost;
};

SceneForward forward_scene(const Model& model, const BoundParameters& p, const PreparedScene& scene);

// Frozen-weight encoding used at inference time.
struct SceneEncoding {
  Matrix point_features;
  Matrix superpoint_features;
  OstOutput ost;
  TopK visual;
};

SceneEncoding encode_prepared(const Model& model, const PreparedScene& scene,
                              std::optional<std::size_t> top_k = std::nullopt);

// Z_P for each prompt through the frozen OST.
Matrix prompt_embeddings(const Model& model, const PreparedScene& scene,
                         const SceneEncoding& enc, std::span<const Prompt> prompts);

struct LanguagePass {
  LmOutput lm;
  std::optional<ad::Var> mask_logits;  // 1 x M when [SEG] was produced
};

// Projects Z_V / Z_P with W_V, splices them into the template, runs the stub LM
// and decodes the [SEG] query against the frozen OST.
LanguagePass language_pass(const Model& model, const BoundParameters& p,
                           const PreparedScene& scene, const SceneEncoding& enc,
                           std::string_view templ, const Matrix& prompt_z);

struct Response {
  std::string text;
  PointMask mask;
  bool segmented = false;
};

// Full inference. An empty prompt region yields the refusal text and an empty mask.
Response respond(const Model& model, const PreparedScene& scene, const SceneEncoding& enc,
                 std::string_view templ, std::span<const Prompt> prompts);

}  // namespace ost3d
