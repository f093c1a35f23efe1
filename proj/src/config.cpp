#include "ost3d/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

#include "ost3d/errors.hpp"

namespace ost3d {
namespace {

using json = nlohmann::json;

// Reads fields from one JSON object and rejects keys nobody asked for.
class Section {
 public:
  Section(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!obj_.contains(key)) return;
    try {
      out = obj_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(path_ + "." + key + ": " + e.what());
    }
  }

  void get_vec3(const char* key, Vec3& out) {
    std::vector<double> v(out.begin(), out.end());
    get(key, v);
    if (v.size() != 3) throw ConfigError(path_ + "." + key + ": expected 3 numbers");
    out = {v[0], v[1], v[2]};
  }

  // Calls fn(Section&) on a nested object when present.
  template <typename Fn>
  void nested(const char* key, Fn&& fn) {
    seen_.insert(key);
    if (!obj_.contains(key)) return;
    Section sub(obj_.at(key), path_ + "." + key);
    fn(sub);
    sub.finish();
  }

  const json* raw(const char* key) {
    seen_.insert(key);
    return obj_.contains(key) ? &obj_.at(key) : nullptr;
  }

  const std::string& path() const { return path_; }

  void finish() const {
    for (const auto& [k, v] : obj_.items()) {
      if (!seen_.contains(k)) throw ConfigError(path_ + ": unknown key '" + k + "'");
    }
  }

 private:
  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

json vec3_json(const Vec3& v) { return json::array({v[0], v[1], v[2]}); }

void read_category(Section& s, CategorySpec& c) {
  s.get("name", c.name);
  std::string shape = shape_name(c.shape);
  s.get("shape", shape);
  try {
    c.shape = parse_shape(shape);
  } catch (const Error& e) {
    throw ConfigError(s.path() + ".shape: " + e.what());
  }
  s.get_vec3("color", c.color);
  s.get("min_size", c.min_size);
  s.get("max_size", c.max_size);
  s.get("min_height", c.min_height);
  s.get("max_height", c.max_height);
}

void read_scene(Section& s, SceneConfig& c) {
  if (const json* cats = s.raw("categories")) {
    if (!cats->is_array()) throw ConfigError(s.path() + ".categories: expected an array");
    c.categories.clear();
    for (std::size_t i = 0; i < cats->size(); ++i) {
      Section cs(cats->at(i), s.path() + ".categories[" + std::to_string(i) + "]");
      CategorySpec spec;
      read_category(cs, spec);
      cs.finish();
      c.categories.push_back(spec);
    }
  }
  s.get("floor_extent", c.floor_extent);
  s.get_vec3("floor_color", c.floor_color);
  s.get("min_objects", c.min_objects);
  s.get("max_objects", c.max_objects);
  s.get("unique_categories", c.unique_categories);
  s.get("min_gap", c.min_gap);
  s.get("object_spacing", c.object_spacing);
  s.get("floor_spacing", c.floor_spacing);
  s.get("color_noise", c.color_noise);
  s.get("teacher_dim", c.teacher_dim);
  s.get("teacher_noise", c.teacher_noise);
  s.get("teacher_seed", c.teacher_seed);
}

void read_adamw(Section& s, AdamWConfig& c) {
  s.get("beta1", c.beta1);
  s.get("beta2", c.beta2);
  s.get("eps", c.eps);
  s.get("weight_decay", c.weight_decay);
  s.get("grad_clip", c.grad_clip);
}

json adamw_json(const AdamWConfig& c) {
  return {{"beta1", c.beta1}, {"beta2", c.beta2}, {"eps", c.eps},
          {"weight_decay", c.weight_decay}, {"grad_clip", c.grad_clip}};
}

void read_model(Section& s, ModelConfig& c) {
  s.nested("encoder", [&](Section& e) {
    e.get("levels", c.encoder.levels);
    e.get("channels", c.encoder.channels);
    e.get("out_channels", c.encoder.out_channels);
    e.get("voxel_size", c.encoder.voxel_size);
  });
  s.nested("superpoints", [&](Section& p) {
    p.get("k", c.superpoints.k);
    p.get("spatial_weight", c.superpoints.spatial_weight);
    p.get("color_weight", c.superpoints.color_weight);
    p.get("merge_threshold", c.superpoints.merge_threshold);
    p.get("target_max", c.superpoints.target_max);
  });
  s.nested("ost", [&](Section& o) {
    o.get("model_dim", c.ost.model_dim);
    o.get("num_blocks", c.ost.num_blocks);
    o.get("num_heads", c.ost.num_heads);
    o.get("ffn_dim", c.ost.ffn_dim);
    o.get("top_k", c.ost.top_k);
  });
  s.get("lm_dim", c.lm_dim);
  s.get("projector_hidden", c.projector_hidden);
  s.get("seg_from_seg_state", c.seg_from_seg_state);
}

void read_train(Section& s, TrainConfig& c) {
  s.get("epochs", c.epochs);
  s.get("batch_size", c.batch_size);
  s.get("lr", c.lr);
  s.get("min_lr", c.min_lr);
  s.nested("adamw", [&](Section& a) { read_adamw(a, c.adamw); });
  s.get("cls_weight", c.cls_weight);
  s.get("mask_weight", c.mask_weight);
  s.get("kd_weight", c.kd_weight);
  s.get("no_object_weight", c.no_object_weight);
  s.nested("match", [&](Section& m) {
    m.get("cls", c.match.cls);
    m.get("mask", c.match.mask);
  });
  s.nested("cameras", [&](Section& k) {
    k.get("count", c.num_cameras);
    k.get("image_size", c.image_size);
    k.get("focal", c.focal);
    k.get("radius", c.camera_radius);
    k.get("height", c.camera_height);
    k.get("depth_tol", c.depth_tol);
    k.get("splat_radius", c.splat_radius);
  });
}

}  // namespace

void RunConfig::finalize() {
  scene.validate();
  model.ost.in_channels = model.encoder.out_channels;
  model.ost.num_classes = scene.categories.size();
  model.ost.align_dim = scene.teacher_dim;
  model.categories.clear();
  for (const CategorySpec& c : scene.categories) model.categories.push_back(c.name);
  model.validate();
  if (model.superpoints.k == 0) throw ConfigError("model.superpoints.k must be >= 1");
  if (model.superpoints.target_max == 0) throw ConfigError("model.superpoints.target_max must be >= 1");
  if (!(model.superpoints.merge_threshold >= 0.0)) {
    throw ConfigError("model.superpoints.merge_threshold must be >= 0");
  }
  train.validate();
  ift.validate();
  if (data.train_scenes == 0) throw ConfigError("data.train_scenes must be >= 1");
  if (!(eval.dbscan_eps > 0.0) || eval.dbscan_min_pts == 0) {
    throw ConfigError("eval: dbscan_eps must be > 0 and dbscan_min_pts >= 1");
  }
  if (ablation.k_values.empty()) throw ConfigError("ablation.k_values must not be empty");
  for (std::size_t k : ablation.k_values) {
    if (k == 0) throw ConfigError("ablation.k_values entries must be >= 1");
  }
  if (!(ablation.probe_lr > 0.0) || ablation.probe_hidden == 0) {
    throw ConfigError("ablation: probe_lr must be > 0 and probe_hidden >= 1");
  }
  if (!(ablation.box_jitter >= 0.0)) throw ConfigError("ablation.box_jitter must be >= 0");
}

RunConfig parse_run_config(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig c;
  Section root(doc, "config");
  root.get("seed", c.seed);
  root.nested("scene", [&](Section& s) { read_scene(s, c.scene); });
  root.nested("data", [&](Section& s) {
    s.get("train_scenes", c.data.train_scenes);
    s.get("val_scenes", c.data.val_scenes);
    s.get("referring_scenes", c.data.referring_scenes);
  });
  root.nested("model", [&](Section& s) { read_model(s, c.model); });
  root.nested("train", [&](Section& s) { read_train(s, c.train); });
  root.nested("ift", [&](Section& s) {
    s.get("epochs", c.ift.epochs);
    s.get("lr", c.ift.lr);
    s.get("min_lr", c.ift.min_lr);
    s.nested("adamw", [&](Section& a) { read_adamw(a, c.ift.adamw); });
  });
  root.nested("eval", [&](Section& s) {
    s.get("dbscan_eps", c.eval.dbscan_eps);
    s.get("dbscan_min_pts", c.eval.dbscan_min_pts);
    s.get("referring_requests", c.eval.referring_requests);
    s.get("zero_target_requests", c.eval.zero_target_requests);
  });
  root.nested("ablation", [&](Section& s) {
    s.get("k_values", c.ablation.k_values);
    s.get("ift_epochs", c.ablation.ift_epochs);
    s.get("probe_epochs", c.ablation.probe_epochs);
    s.get("probe_lr", c.ablation.probe_lr);
    s.get("probe_hidden", c.ablation.probe_hidden);
    s.get("box_jitter", c.ablation.box_jitter);
  });
  root.finish();
  c.finalize();
  return c;
}

std::string apply_overrides(const std::string& json_text, std::span<const std::string> assignments) {
  json doc;
  try {
    doc = json_text.empty() ? json::object() : json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  for (const std::string& a : assignments) {
    const std::size_t eq = a.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + a + "' is not key=value");
    const std::string value = a.substr(eq + 1);
    json* node = &doc;
    std::stringstream path(a.substr(0, eq));
    std::string key;
    std::vector<std::string> keys;
    while (std::getline(path, key, '.')) keys.push_back(key);
    for (std::size_t i = 0; i + 1 < keys.size(); ++i) {
      if (!node->contains(keys[i])) (*node)[keys[i]] = json::object();
      node = &(*node)[keys[i]];
      if (!node->is_object()) throw ConfigError("override '" + a + "': '" + keys[i] + "' is not an object");
    }
    json v = json::parse(value, nullptr, false);
    (*node)[keys.back()] = v.is_discarded() ? json(value) : v;
  }
  return doc.dump();
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

std::string run_config_to_json(const RunConfig& c) {
  json cats = json::array();
  for (const CategorySpec& k : c.scene.categories) {
    cats.push_back({{"name", k.name},
                    {"shape", shape_name(k.shape)},
                    {"color", vec3_json(k.color)},
                    {"min_size", k.min_size},
                    {"max_size", k.max_size},
                    {"min_height", k.min_height},
                    {"max_height", k.max_height}});
  }
  const SceneConfig& s = c.scene;
  const ModelConfig& m = c.model;
  const TrainConfig& t = c.train;
  json doc = {
      {"seed", c.seed},
      {"scene",
       {{"categories", cats},
        {"floor_extent", s.floor_extent},
        {"floor_color", vec3_json(s.floor_color)},
        {"min_objects", s.min_objects},
        {"max_objects", s.max_objects},
        {"unique_categories", s.unique_categories},
        {"min_gap", s.min_gap},
        {"object_spacing", s.object_spacing},
        {"floor_spacing", s.floor_spacing},
        {"color_noise", s.color_noise},
        {"teacher_dim", s.teacher_dim},
        {"teacher_noise", s.teacher_noise},
        {"teacher_seed", s.teacher_seed}}},
      {"data",
       {{"train_scenes", c.data.train_scenes},
        {"val_scenes", c.data.val_scenes},
        {"referring_scenes", c.data.referring_scenes}}},
      {"model",
       {{"encoder",
         {{"levels", m.encoder.levels},
          {"channels", m.encoder.channels},
          {"out_channels", m.encoder.out_channels},
          {"voxel_size", m.encoder.voxel_size}}},
        {"superpoints",
         {{"k", m.superpoints.k},
          {"spatial_weight", m.superpoints.spatial_weight},
          {"color_weight", m.superpoints.color_weight},
          {"merge_threshold", m.superpoints.merge_threshold},
          {"target_max", m.superpoints.target_max}}},
        {"ost",
         {{"model_dim", m.ost.model_dim},
          {"num_blocks", m.ost.num_blocks},
          {"num_heads", m.ost.num_heads},
          {"ffn_dim", m.ost.ffn_dim},
          {"top_k", m.ost.top_k}}},
        {"lm_dim", m.lm_dim},
        {"projector_hidden", m.projector_hidden},
        {"seg_from_seg_state", m.seg_from_seg_state}}},
      {"train",
       {{"epochs", t.epochs},
        {"batch_size", t.batch_size},
        {"lr", t.lr},
        {"min_lr", t.min_lr},
        {"adamw", adamw_json(t.adamw)},
        {"cls_weight", t.cls_weight},
        {"mask_weight", t.mask_weight},
        {"kd_weight", t.kd_weight},
        {"no_object_weight", t.no_object_weight},
        {"match", {{"cls", t.match.cls}, {"mask", t.match.mask}}},
        {"cameras",
         {{"count", t.num_cameras},
          {"image_size", t.image_size},
          {"focal", t.focal},
          {"radius", t.camera_radius},
          {"height", t.camera_height},
          {"depth_tol", t.depth_tol},
          {"splat_radius", t.splat_radius}}}}},
      {"ift",
       {{"epochs", c.ift.epochs},
        {"lr", c.ift.lr},
        {"min_lr", c.ift.min_lr},
        {"adamw", adamw_json(c.ift.adamw)}}},
      {"eval",
       {{"dbscan_eps", c.eval.dbscan_eps},
        {"dbscan_min_pts", c.eval.dbscan_min_pts},
        {"referring_requests", c.eval.referring_requests},
        {"zero_target_requests", c.eval.zero_target_requests}}},
      {"ablation",
       {{"k_values", c.ablation.k_values},
        {"ift_epochs", c.ablation.ift_epochs},
        {"probe_epochs", c.ablation.probe_epochs},
        {"probe_lr", c.ablation.probe_lr},
        {"probe_hidden", c.ablation.probe_hidden},
        {"box_jitter", c.ablation.box_jitter}}},
  };
  return doc.dump(2);
}

std::uint64_t derive_seed(std::uint64_t seed, SeedStream stream, std::uint64_t index) {
  // splitmix64 finalizer over a combined key
  std::uint64_t z = seed * 0x9E3779B97F4A7C15ull + static_cast<std::uint64_t>(stream) * 0xBF58476D1CE4E5B9ull +
                    index * 0x94D049BB133111EBull + 0x2545F4914F6CDD1Dull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace ost3d
