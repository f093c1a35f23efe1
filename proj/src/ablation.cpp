#include "ost3d/ablation.hpp"

#include <map>
#include <random>

#include "ost3d/errors.hpp"
#include "ost3d/metrics.hpp"

namespace ost3d {

std::vector<TokenSweepRow> sweep_visual_tokens(const Model& pretrained,
                                               std::span<const TrainingScene> train_scenes,
                                               std::span<const ReferringRequest> train_requests,
                                               std::span<const TrainingScene> eval_scenes,
                                               std::span<const ReferringRequest> eval_requests,
                                               std::span<const std::size_t> ks,
                                               const IftConfig& ift, std::uint64_t seed) {
  std::vector<TokenSweepRow> rows;
  for (std::size_t k : ks) {
    Model m = pretrained;
    m.set_top_k(k);
    instruction_tune(m, train_scenes, train_requests, ift, seed);
    TokenSweepRow row;
    row.k = k;
    double tokens = 0.0;
    for (const TrainingScene& ts : eval_scenes)
      tokens += static_cast<double>(std::min(k, ts.prepared.part.size()));
    if (!eval_scenes.empty()) row.mean_tokens = tokens / static_cast<double>(eval_scenes.size());
    row.referring_miou = evaluate_referring(m, eval_scenes, eval_requests).mean_iou;
    rows.push_back(row);
  }
  return rows;
}

std::string paradigm_name(PromptParadigm p) {
  switch (p) {
    case PromptParadigm::CoordinateProjection: return "coordinate-projection";
    case PromptParadigm::Pooling: return "pooling";
    case PromptParadigm::Ost: return "ost";
  }
  return "unknown";
}

std::vector<ProbeSample> box_probe_samples(std::span<const TrainingScene> scenes, double jitter,
                                           std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> grow(0.0, jitter);
  std::vector<ProbeSample> out;
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    const SyntheticScene& sc = scenes[s].scene;
    const std::vector<int> cats = sc.instance_categories();
    for (std::size_t inst = 0; inst < cats.size(); ++inst) {
      std::vector<Vec3> pts;
      for (std::size_t i = 0; i < sc.instance_labels.size(); ++i)
        if (sc.instance_labels[i] == static_cast<int>(inst)) pts.push_back(sc.cloud.coords()[i]);
      if (pts.empty()) continue;
      const Aabb b = bounding_box(pts);
      BoxPrompt box{b.min, b.max};
      for (double& v : box.min) v -= grow(rng);
      for (double& v : box.max) v += grow(rng);
      out.push_back({s, box, cats[inst]});
    }
  }
  return out;
}

namespace {

// Rows of prompt embeddings (or 6-d coordinates) for every sample.
Matrix paradigm_inputs(const Model& model, std::span<const TrainingScene> scenes,
                       std::span<const ProbeSample> samples, PromptParadigm paradigm) {
  std::map<std::size_t, SceneEncoding> cache;
  std::vector<Matrix> rows;
  for (const ProbeSample& smp : samples) {
    const TrainingScene& ts = scenes[smp.scene];
    const std::span<const Vec3> coords = ts.prepared.cloud.coords();
    const Prompt prompt = smp.box;
    if (paradigm == PromptParadigm::CoordinateProjection) {
      rows.push_back(prompt_coordinates(prompt, coords));
      continue;
    }
    auto it = cache.find(smp.scene);
    if (it == cache.end()) it = cache.emplace(smp.scene, encode_prepared(model, ts.prepared)).first;
    if (paradigm == PromptParadigm::Pooling) {
      rows.push_back(encode_prompt_poolonly(prompt, coords, it->second.point_features));
    } else {
      const Prompt one[] = {prompt};
      rows.push_back(prompt_embeddings(model, ts.prepared, it->second, one));
    }
  }
  Matrix out(rows.size(), rows.empty() ? 0 : rows.front().cols());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) = rows[i](0, j);
  return out;
}

struct Probe {
  ParameterSet params;
  bool coords = false;
  CoordProjector coord;
  Mlp proj;

  ad::Var logits(const BoundParameters& p, const Matrix& x, const Matrix& cat_emb) const {
    ad::Tape& tape = p.tape();
    ad::Var h = tape.constant(x);
    if (coords) h = coord(p, h);
    return ad::matmul_nt(proj(p, h), tape.constant(cat_emb));
  }
};

double accuracy(const Matrix& logits, std::span<const int> targets) {
  if (targets.empty()) return 0.0;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < logits.cols(); ++j)
      if (logits(i, j) > logits(i, best)) best = j;
    hit += static_cast<int>(best) == targets[i];
  }
  return static_cast<double>(hit) / static_cast<double>(targets.size());
}

}  // namespace

std::vector<ParadigmRow> compare_prompt_paradigms(const Model& pretrained,
                                                  std::span<const TrainingScene> train_scenes,
                                                  std::span<const TrainingScene> eval_scenes,
                                                  double jitter, const ProbeConfig& probe,
                                                  std::uint64_t seed) {
  const std::vector<ProbeSample> train = box_probe_samples(train_scenes, jitter, seed);
  const std::vector<ProbeSample> eval = box_probe_samples(eval_scenes, jitter, seed + 1);
  if (train.empty()) throw ConfigError("prompt ablation: no instances in the training scenes");
  std::vector<int> train_y, eval_y;
  for (const ProbeSample& s : train) train_y.push_back(s.category);
  for (const ProbeSample& s : eval) eval_y.push_back(s.category);

  const std::vector<std::string>& names = pretrained.config().categories;
  Matrix cat_emb(names.size(), pretrained.config().lm_dim);
  for (std::size_t c = 0; c < names.size(); ++c) {
    const std::size_t id = pretrained.vocab.id(names[c]);
    for (std::size_t j = 0; j < cat_emb.cols(); ++j) cat_emb(c, j) = pretrained.token_embeddings()(id, j);
  }

  std::vector<ParadigmRow> rows;
  for (PromptParadigm paradigm :
       {PromptParadigm::CoordinateProjection, PromptParadigm::Pooling, PromptParadigm::Ost}) {
    const Matrix x_train = paradigm_inputs(pretrained, train_scenes, train, paradigm);
    const Matrix x_eval = paradigm_inputs(pretrained, eval_scenes, eval, paradigm);
    std::mt19937_64 rng(seed);
    Probe pr;
    std::size_t width = x_train.cols();
    if (paradigm == PromptParadigm::CoordinateProjection) {
      pr.coords = true;
      pr.coord = CoordProjector::create(pr.params, "coord", probe.hidden,
                                        pretrained.config().ost.align_dim, rng);
      width = pretrained.config().ost.align_dim;
    }
    pr.proj = Mlp::create(pr.params, "proj", width, probe.hidden, pretrained.config().lm_dim, rng);
    std::vector<std::size_t> ids(pr.params.size());
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;
    AdamW opt(pr.params, ids);
    for (std::size_t e = 0; e < probe.epochs; ++e) {
      ad::Tape tape;
      const BoundParameters p(pr.params, tape);
      ad::Var loss = cls_loss(pr.logits(p, x_train, cat_emb), train_y);
      tape.backward(loss);
      std::vector<Matrix> grads;
      for (std::size_t i : ids) grads.push_back(p[i].grad());
      opt.step(pr.params, grads, cosine_lr(probe.lr, 0.0, e, probe.epochs));
    }
    ParadigmRow row;
    row.paradigm = paradigm;
    {
      ad::Tape tape;
      const auto p = BoundParameters::frozen(pr.params, tape);
      row.train_accuracy = accuracy(pr.logits(p, x_train, cat_emb).value(), train_y);
    }
    if (!eval.empty()) {
      ad::Tape tape;
      const auto p = BoundParameters::frozen(pr.params, tape);
      row.accuracy = accuracy(pr.logits(p, x_eval, cat_emb).value(), eval_y);
    }
    rows.push_back(row);
  }
  return rows;
}

}  // namespace ost3d
