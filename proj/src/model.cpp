#include "ost3d/model.hpp"

#include <random>

#include "ost3d/errors.hpp"

namespace ost3d {

void ModelConfig::validate() const {
  encoder.validate();
  ost.validate();
  if (encoder.out_channels != ost.in_channels) {
    throw ConfigError("model: encoder out_channels (" + std::to_string(encoder.out_channels) +
                      ") must equal ost in_channels (" + std::to_string(ost.in_channels) + ")");
  }
  if (lm_dim == 0 || projector_hidden == 0) throw ConfigError("model: lm widths must be positive");
  if (!categories.empty() && categories.size() != ost.num_classes) {
    throw ConfigError("model: " + std::to_string(categories.size()) + " category names for " +
                      std::to_string(ost.num_classes) + " classes");
  }
}

Model::Model(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(seed);
  encoder = SparseUNet(config_.encoder, params, rng, "encoder");
  ost = Ost(config_.ost, params, rng, "ost");
  w_v = Mlp::create(params, "proj.w_v", config_.ost.align_dim, config_.projector_hidden,
                    config_.lm_dim, rng);
  w_s = Mlp::create(params, "proj.w_s", config_.lm_dim, config_.projector_hidden,
                    config_.ost.in_channels, rng);
  vocab = Vocabulary(config_.categories);
  embeddings_ = params.add("lm.embeddings", Matrix::random_normal(vocab.size(), config_.lm_dim, rng, 1.0));
}

void Model::set_top_k(std::size_t k) {
  if (k == 0) throw ConfigError("top_k must be >= 1");
  config_.ost.top_k = k;
}

std::vector<std::size_t> Model::stage1_parameters() const {
  std::vector<std::size_t> out = params.with_prefix("encoder.");
  const std::vector<std::size_t> o = params.with_prefix("ost.");
  out.insert(out.end(), o.begin(), o.end());
  return out;
}

std::vector<std::size_t> Model::stage2_parameters() const { return params.with_prefix("proj."); }

PreparedScene prepare_scene(const PointCloud& cloud, const ModelConfig& config) {
  PreparedScene s;
  s.cloud = cloud;
  s.grid = voxelize(cloud, config.encoder.voxel_size);
  s.hierarchy = build_hierarchy(s.grid, config.encoder.levels);
  s.part = compute_superpoints(cloud, config.superpoints);
  return s;
}

SceneForward forward_scene(const Model& model, const BoundParameters& p, const PreparedScene& scene) {
  SceneForward f;
  f.point_features = model.encoder.encode(p, scene.cloud, scene.grid, scene.hierarchy);
  f.superpoint_features = superpoint_pool(f.point_features, scene.part);
  f.ost = model.ost.forward(p, f.superpoint_features, scene.part.centroids);
  return f;
}

SceneEncoding encode_prepared(const Model& model, const PreparedScene& scene,
                              std::optional<std::size_t> top_k) {
  ad::Tape tape;
  const auto p = BoundParameters::frozen(model.params, tape);
  const SceneForward f = forward_scene(model, p, scene);
  SceneEncoding enc;
  enc.point_features = f.point_features.value();
  enc.superpoint_features = f.superpoint_features.value();
  enc.ost = OstOutput::from(f.ost);
  enc.visual = select_topk(enc.ost, top_k.value_or(model.config().ost.top_k));
  return enc;
}

Matrix prompt_embeddings(const Model& model, const PreparedScene& scene,
                         const SceneEncoding& enc, std::span<const Prompt> prompts) {
  if (prompts.empty()) return Matrix(0, model.config().ost.align_dim);
  std::vector<PromptQuery> queries;
  for (const Prompt& pr : prompts) {
    queries.push_back(make_prompt_query(pr, scene.cloud.coords(), enc.point_features));
  }
  return encode_prompts(model.ost, model.params, enc.superpoint_features, scene.part.centroids,
                        queries);
}

LanguagePass language_pass(const Model& model, const BoundParameters& p,
                           const PreparedScene& scene, const SceneEncoding& enc,
                           std::string_view templ, const Matrix& prompt_z) {
  ad::Tape& tape = p.tape();
  ad::Var h_v = model.w_v(p, tape.constant(enc.visual.features));
  std::vector<ad::Var> h_p;
  for (std::size_t i = 0; i < prompt_z.rows(); ++i) {
    h_p.push_back(model.w_v(p, tape.constant(slice_rows(prompt_z, i, 1))));
  }
  const InstructionSequence seq =
      assemble_instruction(templ, h_v, h_p, model.vocab, model.token_embeddings());
  const StubLM lm(model.vocab, model.token_embeddings());
  LanguagePass out;
  out.lm = lm.generate(seq);
  const std::optional<ad::Var> query =
      extract_seg_query(out.lm.hidden, out.lm.tokens, model.vocab.seg_id(), model.w_s, p,
                        model.config().seg_from_seg_state);
  if (query) {
    out.mask_logits = decode_logits(model.ost, p, tape.constant(enc.superpoint_features),
                                    scene.part.centroids, *query);
  }
  return out;
}

Response respond(const Model& model, const PreparedScene& scene, const SceneEncoding& enc,
                 std::string_view templ, std::span<const Prompt> prompts) {
  Response r;
  Matrix prompt_z;
  try {
    prompt_z = prompt_embeddings(model, scene, enc, prompts);
  } catch (const EmptyPromptError&) {
    r.text = "sorry , i cannot find this object .";
    r.mask.assign(scene.cloud.size(), 0);
    return r;
  }
  ad::Tape tape;
  const auto p = BoundParameters::frozen(model.params, tape);
  const LanguagePass pass = language_pass(model, p, scene, enc, templ, prompt_z);
  r.text = pass.lm.text;
  if (pass.mask_logits) {
    r.segmented = true;
    r.mask = superpoint_mask_to_points(binarize_logits(pass.mask_logits->value().row(0)), scene.part);
  } else {
    r.mask.assign(scene.cloud.size(), 0);
  }
  return r;
}

}  // namespace ost3d
