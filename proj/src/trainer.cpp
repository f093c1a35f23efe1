#include "ost3d/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "ost3d/errors.hpp"
#include "ost3d/metrics.hpp"

namespace ost3d {

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("train: batch_size must be >= 1");
  if (!(lr > 0.0) || min_lr < 0.0 || min_lr > lr) throw ConfigError("train: need 0 <= min_lr <= lr, lr > 0");
  if (cls_weight < 0 || mask_weight < 0 || kd_weight < 0 || no_object_weight < 0) {
    throw ConfigError("train: loss weights must be non-negative");
  }
  if (num_cameras == 0 || image_size < 2) throw ConfigError("train: need >= 1 camera and >= 2 pixels");
  if (!(focal > 0.0) || !(depth_tol > 0.0)) throw ConfigError("train: focal and depth_tol must be positive");
  if (splat_radius < 0) throw ConfigError("train: splat_radius must be >= 0");
}

void IftConfig::validate() const {
  if (!(lr > 0.0) || min_lr < 0.0 || min_lr > lr) throw ConfigError("ift: need 0 <= min_lr <= lr, lr > 0");
}

TrainingScene make_training_scene(SyntheticScene scene, const ModelConfig& model,
                                  const TrainConfig& train) {
  TrainingScene ts;
  ts.prepared = prepare_scene(scene.cloud, model);
  ts.gt = superpoint_targets(scene.instance_labels, scene.semantic_labels, ts.prepared.part);
  const Vec3 c = scene.cloud.centroid();
  std::vector<Camera> cams = ring_cameras({c[0], c[1], 0.2}, train.camera_radius, train.camera_height,
                                          train.num_cameras, train.focal, train.image_size,
                                          train.image_size);
  for (Camera& cam : cams) render(cam, scene.cloud.coords(), scene.teacher_features, train.splat_radius);
  const LiftedFeatures lifted = lift_features(cams, scene.cloud.coords(), train.depth_tol);
  ts.kd = kd_targets(lifted, ts.prepared.part);
  ts.scene = std::move(scene);
  return ts;
}

Stage1Loss stage1_loss(const Model& model, const BoundParameters& p, const TrainingScene& ts,
                       const TrainConfig& cfg) {
  const SceneForward f = forward_scene(model, p, ts.prepared);
  ad::Var mask_logits = apply_mask_head(f.ost.mask_kernels, f.superpoint_features);
  Stage1Loss out;
  out.match = hungarian_match(f.ost.class_logits.value(), mask_logits.value(), ts.gt, cfg.match);

  const int no_object = static_cast<int>(model.config().ost.num_classes);
  const std::vector<int> targets =
      out.match.query_targets(f.ost.class_logits.rows(), no_object, ts.gt.categories);
  out.cls = cls_loss(f.ost.class_logits, targets, cfg.no_object_weight);

  std::vector<std::size_t> queries, gts;
  for (const auto& [q, g] : out.match.pairs) {
    queries.push_back(q);
    gts.push_back(g);
  }
  const Matrix gt_rows = gts.empty() ? Matrix(0, mask_logits.cols()) : gather_rows(ts.gt.masks, gts);
  out.mask = mask_loss(ad::gather_rows(mask_logits, queries), gt_rows);
  out.kd = kd_loss(f.ost.alignment, ts.kd.targets, ts.kd.valid);
  out.total = ad::add(ad::add(ad::scale(out.cls, cfg.cls_weight), ad::scale(out.mask, cfg.mask_weight)),
                      ad::scale(out.kd, cfg.kd_weight));
  return out;
}

namespace {

std::vector<Matrix> zero_grads(const ParameterSet& params, std::span<const std::size_t> ids) {
  std::vector<Matrix> g;
  for (std::size_t i : ids) g.emplace_back(params.value(i).rows(), params.value(i).cols());
  return g;
}

BoundParameters bind_trainable(const ParameterSet& params, ad::Tape& tape,
                               std::span<const std::size_t> ids) {
  std::vector<char> on(params.size(), 0);
  for (std::size_t i : ids) on[i] = 1;
  return BoundParameters(params, tape, [on](std::size_t i) { return on[i] != 0; });
}

void check_finite(double v, const std::string& what) {
  if (!std::isfinite(v)) throw NonFiniteError("non-finite " + what + " loss");
}

}  // namespace

StepLosses pretrain_step(Model& model, std::span<const TrainingScene* const> batch, AdamW& opt,
                         double lr, const TrainConfig& cfg) {
  if (batch.empty()) throw ConfigError("pretrain_step: empty batch");
  const auto& ids = opt.trainable();
  std::vector<Matrix> grads = zero_grads(model.params, ids);
  StepLosses out;
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (const TrainingScene* ts : batch) {
    ad::Tape tape;
    const BoundParameters p = bind_trainable(model.params, tape, ids);
    const Stage1Loss l = stage1_loss(model, p, *ts, cfg);
    const double total = l.total.value()(0, 0);
    if (!std::isfinite(total)) {
      std::ostringstream msg;
      msg << "non-finite pretraining loss: cls=" << l.cls.value()(0, 0)
          << " mask=" << l.mask.value()(0, 0) << " kd=" << l.kd.value()(0, 0);
      throw NonFiniteError(msg.str());
    }
    tape.backward(l.total, Matrix(1, 1, inv));
    for (std::size_t k = 0; k < ids.size(); ++k) grads[k] += p[ids[k]].grad();
    out.cls += inv * l.cls.value()(0, 0);
    out.mask += inv * l.mask.value()(0, 0);
    out.kd += inv * l.kd.value()(0, 0);
    out.total += inv * total;
  }
  opt.step(model.params, grads, lr);
  return out;
}

void pretrain(Model& model, std::span<const TrainingScene> scenes, const TrainConfig& cfg,
              std::uint64_t seed, const StepCallback& on_step) {
  cfg.validate();
  if (scenes.empty()) throw ConfigError("pretrain: no training scenes");
  AdamW opt(model.params, model.stage1_parameters(), cfg.adamw);
  const std::size_t per_epoch = (scenes.size() + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t total = per_epoch * cfg.epochs;
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(scenes.size());
  std::size_t step = 0;
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      std::vector<const TrainingScene*> batch;
      for (std::size_t i = b; i < std::min(order.size(), b + cfg.batch_size); ++i)
        batch.push_back(&scenes[order[i]]);
      const StepLosses l = pretrain_step(model, batch, opt, cosine_lr(cfg.lr, cfg.min_lr, step, total), cfg);
      if (on_step) on_step(step, l);
      ++step;
    }
  }
}

InstanceEval evaluate_instances(const Model& model, std::span<const TrainingScene> scenes) {
  InstanceEval ev;
  double iou_sum = 0.0, correct = 0.0;
  const std::size_t nc = model.config().ost.num_classes;
  for (const TrainingScene& ts : scenes) {
    const SceneEncoding enc = encode_prepared(model, ts.prepared);
    const Matrix logits = apply_mask_head(enc.ost.mask_kernels, enc.superpoint_features);
    const MatchResult m = hungarian_match(enc.ost.class_logits, logits, ts.gt);
    for (const auto& [q, g] : m.pairs) {
      const PointMask pred = superpoint_mask_to_points(binarize_logits(logits.row(q)), ts.prepared.part);
      iou_sum += iou(pred, ts.scene.instance_mask(static_cast<int>(g)));
      const auto row = enc.ost.class_logits.row(q);
      const auto best = std::max_element(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(nc));
      correct += static_cast<int>(best - row.begin()) == ts.gt.categories[g];
      ++ev.matched;
    }
  }
  if (ev.matched) {
    ev.mean_iou = iou_sum / static_cast<double>(ev.matched);
    ev.accuracy = correct / static_cast<double>(ev.matched);
  }
  return ev;
}

std::string referring_text(const std::string& category, bool present) {
  std::string t = "<PC> please segment the " + category + " .";
  if (present) t += " <obj>";
  return t;
}

namespace {

// Category -> instance ids, for categories present in the scene.
std::map<int, std::vector<int>> instances_by_category(const TrainingScene& ts) {
  std::map<int, std::vector<int>> out;
  const std::vector<int> cats = ts.scene.instance_categories();
  for (std::size_t i = 0; i < cats.size(); ++i) out[cats[i]].push_back(static_cast<int>(i));
  return out;
}

}  // namespace

std::vector<ReferringRequest> referring_requests(std::span<const TrainingScene> scenes,
                                                 std::size_t count) {
  std::vector<std::vector<std::pair<int, int>>> unique(scenes.size());
  std::size_t rounds = 0;
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    for (const auto& [cat, inst] : instances_by_category(scenes[s]))
      if (inst.size() == 1) unique[s].emplace_back(cat, inst.front());
    rounds = std::max(rounds, unique[s].size());
  }
  std::vector<ReferringRequest> out;
  for (std::size_t r = 0; r < rounds && out.size() < count; ++r)
    for (std::size_t s = 0; s < scenes.size() && out.size() < count; ++s) {
      if (r >= unique[s].size()) continue;
      const auto [cat, inst] = unique[s][r];
      const std::string& name = scenes[s].scene.category_names.at(static_cast<std::size_t>(cat));
      out.push_back({s, referring_text(name, true), cat, inst, scenes[s].scene.instance_mask(inst)});
    }
  return out;
}

std::vector<ReferringRequest> zero_target_requests(std::span<const TrainingScene> scenes,
                                                   std::size_t count) {
  std::vector<std::vector<int>> absent(scenes.size());
  std::size_t rounds = 0;
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    const auto present = instances_by_category(scenes[s]);
    const auto& names = scenes[s].scene.category_names;
    for (int c = 0; c < static_cast<int>(names.size()); ++c)
      if (!present.contains(c)) absent[s].push_back(c);
    rounds = std::max(rounds, absent[s].size());
  }
  std::vector<ReferringRequest> out;
  for (std::size_t r = 0; r < rounds && out.size() < count; ++r)
    for (std::size_t s = 0; s < scenes.size() && out.size() < count; ++s) {
      if (r >= absent[s].size()) continue;
      const int cat = absent[s][r];
      const std::string& name = scenes[s].scene.category_names.at(static_cast<std::size_t>(cat));
      out.push_back({s, referring_text(name, false), -1, -1,
                     PointMask(scenes[s].scene.cloud.size(), 0)});
    }
  return out;
}

void instruction_tune(Model& model, std::span<const TrainingScene> scenes,
                      std::span<const ReferringRequest> requests, const IftConfig& cfg,
                      std::uint64_t seed, const StepCallback& on_step) {
  cfg.validate();
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < requests.size(); ++i)
    if (requests[i].instance >= 0) usable.push_back(i);
  if (usable.empty() || cfg.epochs == 0) return;

  std::map<std::size_t, SceneEncoding> cache;
  for (std::size_t i : usable) {
    const std::size_t s = requests[i].scene;
    if (!cache.contains(s)) cache.emplace(s, encode_prepared(model, scenes[s].prepared));
  }
  const std::vector<std::size_t> ids = model.stage2_parameters();
  AdamW opt(model.params, ids, cfg.adamw);
  const std::size_t total = usable.size() * cfg.epochs;
  std::mt19937_64 rng(seed);
  std::size_t step = 0;
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    std::vector<std::size_t> order = usable;
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i : order) {
      const ReferringRequest& req = requests[i];
      const TrainingScene& ts = scenes[req.scene];
      ad::Tape tape;
      const BoundParameters p = bind_trainable(model.params, tape, ids);
      const LanguagePass pass = language_pass(model, p, ts.prepared, cache.at(req.scene), req.text, Matrix(0, 1));
      if (!pass.mask_logits) throw ProtocolError("instruction_tune: target request produced no [SEG]");
      const Matrix target = slice_rows(ts.gt.masks, static_cast<std::size_t>(req.instance), 1);
      ad::Var mask = mask_loss(*pass.mask_logits, target);
      ad::Var total_loss = ift_loss(tape.constant(Matrix(1, 1)), mask);
      check_finite(total_loss.value()(0, 0), "instruction-tuning");
      tape.backward(total_loss);
      std::vector<Matrix> grads;
      for (std::size_t k : ids) grads.push_back(p[k].grad());
      opt.step(model.params, grads, cosine_lr(cfg.lr, cfg.min_lr, step, total));
      if (on_step) on_step(step, {0.0, mask.value()(0, 0), 0.0, total_loss.value()(0, 0)});
      ++step;
    }
  }
}

ReferringEval evaluate_referring(const Model& model, std::span<const TrainingScene> scenes,
                                 std::span<const ReferringRequest> requests) {
  ReferringEval ev;
  std::map<std::size_t, SceneEncoding> cache;
  for (const ReferringRequest& req : requests) {
    const TrainingScene& ts = scenes[req.scene];
    auto it = cache.find(req.scene);
    if (it == cache.end()) it = cache.emplace(req.scene, encode_prepared(model, ts.prepared)).first;
    const Response r = respond(model, ts.prepared, it->second, req.text, {});
    ev.seg_count += r.segmented;
    ev.ious.push_back(iou(r.mask, req.gt));
  }
  if (!ev.ious.empty()) {
    ev.mean_iou = std::accumulate(ev.ious.begin(), ev.ious.end(), 0.0) / static_cast<double>(ev.ious.size());
  }
  return ev;
}

}  // namespace ost3d
