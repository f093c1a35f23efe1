#include "ost3d/commands.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "ost3d/errors.hpp"
#include "ost3d/ply.hpp"

namespace ost3d {
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json parse_json_file(const fs::path& path) {
  const std::string text = read_text(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

std::string stem_name(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%04zu", prefix, i);
  return buf;
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

struct SplitSpec {
  const char* prefix;
  std::size_t count;
  SeedStream stream;
};

std::vector<SplitSpec> split_specs(const RunConfig& c) {
  return {{"train", c.data.train_scenes, SeedStream::TrainScene},
          {"val", c.data.val_scenes, SeedStream::ValScene},
          {"ref", c.data.referring_scenes, SeedStream::ReferringScene}};
}

void prepare_output(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

void log_config(const RunConfig& config, const fs::path& out_dir, std::ostream& log) {
  const std::string text = run_config_to_json(config);
  log << "resolved config:\n" << text << "\n";
  write_text(out_dir / "config.resolved.json", text + "\n");
}

json referring_json(const ReferringEval& ev, std::size_t count) {
  return {{"requests", count}, {"mean_iou", ev.mean_iou}, {"seg_count", ev.seg_count}};
}

}  // namespace

DataSplits build_splits(const RunConfig& config, const std::optional<fs::path>& data_dir) {
  DataSplits d;
  std::vector<TrainingScene>* dst[] = {&d.train, &d.val, &d.referring};
  const std::vector<SplitSpec> specs = split_specs(config);
  json manifest;
  if (data_dir) {
    if (!fs::exists(*data_dir / "manifest.json")) {
      throw IoError("no manifest.json in " + data_dir->string());
    }
    manifest = parse_json_file(*data_dir / "manifest.json");
  }
  for (std::size_t k = 0; k < specs.size(); ++k) {
    if (data_dir) {
      if (!manifest.contains(specs[k].prefix)) {
        throw ParseError("manifest.json: missing split '" + std::string(specs[k].prefix) + "'");
      }
      for (const json& entry : manifest.at(specs[k].prefix)) {
        const std::string stem = entry.at("stem").get<std::string>();
        dst[k]->push_back(make_training_scene(load_scene(*data_dir, stem), config.model, config.train));
      }
    } else {
      for (std::size_t i = 0; i < specs[k].count; ++i) {
        const std::uint64_t seed = derive_seed(config.seed, specs[k].stream, i);
        dst[k]->push_back(make_training_scene(generate_scene(seed, config.scene), config.model, config.train));
      }
    }
  }
  return d;
}

void cmd_gen(const RunConfig& config, const fs::path& out_dir, std::ostream& log) {
  prepare_output(out_dir);
  log_config(config, out_dir, log);
  json manifest = {{"seed", config.seed}};
  std::size_t total = 0;
  for (const SplitSpec& spec : split_specs(config)) {
    json entries = json::array();
    for (std::size_t i = 0; i < spec.count; ++i) {
      const std::uint64_t seed = derive_seed(config.seed, spec.stream, i);
      const std::string stem = stem_name(spec.prefix, i);
      save_scene(out_dir, stem, generate_scene(seed, config.scene));
      entries.push_back({{"stem", stem}, {"seed", seed}});
      ++total;
    }
    manifest[spec.prefix] = entries;
  }
  write_text(out_dir / "manifest.json", manifest.dump(2) + "\n");
  log << "wrote " << total << " scenes to " << out_dir.string() << "\n";
}

PretrainReport cmd_pretrain(const RunConfig& config, const fs::path& out_dir,
                            const std::optional<fs::path>& data_dir, std::ostream& log) {
  prepare_output(out_dir);
  log_config(config, out_dir, log);
  const DataSplits data = build_splits(config, data_dir);
  log << "scenes: train " << data.train.size() << ", val " << data.val.size() << ", referring "
      << data.referring.size() << "\n";

  Model model(config.model, derive_seed(config.seed, SeedStream::ModelInit));
  std::ostringstream csv;
  csv << "step,cls,mask,kd,total\n";
  const std::size_t per_epoch = std::max<std::size_t>(
      1, (data.train.size() + config.train.batch_size - 1) / config.train.batch_size);
  double running = 0.0;
  pretrain(model, data.train, config.train, derive_seed(config.seed, SeedStream::Pretrain),
           [&](std::size_t step, const StepLosses& l) {
             csv << step << ',' << num(l.cls) << ',' << num(l.mask) << ',' << num(l.kd) << ','
                 << num(l.total) << '\n';
             running += l.total;
             if ((step + 1) % per_epoch == 0) {
               log << "epoch " << (step + 1) / per_epoch << " mean loss "
                   << num(running / static_cast<double>(per_epoch)) << "\n";
               running = 0.0;
             }
           });
  write_text(out_dir / "metrics.csv", csv.str());

  PretrainReport report;
  report.val = evaluate_instances(model, data.val);
  log << "held-out instances: mean IoU " << num(report.val.mean_iou) << ", accuracy "
      << num(report.val.accuracy) << " over " << report.val.matched << " matches\n";

  json doc = {{"val",
               {{"scenes", data.val.size()},
                {"matched", report.val.matched},
                {"mean_iou", report.val.mean_iou},
                {"accuracy", report.val.accuracy}}}};

  if (config.ift.epochs > 0) {
    const std::vector<ReferringRequest> train_req =
        referring_requests(data.train, static_cast<std::size_t>(-1));
    std::ostringstream ift_csv;
    ift_csv << "step,mask,total\n";
    instruction_tune(model, data.train, train_req, config.ift,
                     derive_seed(config.seed, SeedStream::Ift),
                     [&](std::size_t step, const StepLosses& l) {
                       ift_csv << step << ',' << num(l.mask) << ',' << num(l.total) << '\n';
                     });
    write_text(out_dir / "ift_metrics.csv", ift_csv.str());
    report.tuned = true;
    const auto req = referring_requests(data.referring, config.eval.referring_requests);
    const auto zero = zero_target_requests(data.referring, config.eval.zero_target_requests);
    report.referring = evaluate_referring(model, data.referring, req);
    report.zero_target = evaluate_referring(model, data.referring, zero);
    log << "referring: mean IoU " << num(report.referring.mean_iou) << " over " << req.size()
        << " requests; zero-target [SEG] count " << report.zero_target.seg_count << " of "
        << zero.size() << "\n";
    doc["referring"] = referring_json(report.referring, req.size());
    doc["zero_target"] = referring_json(report.zero_target, zero.size());
  }

  save_checkpoint(out_dir / "model.ckpt", model.params, run_config_to_json(config));
  write_text(out_dir / "report.json", doc.dump(2) + "\n");
  log << "wrote " << (out_dir / "model.ckpt").string() << "\n";
  return report;
}

Model load_model(const fs::path& checkpoint, RunConfig* config_out) {
  const CheckpointData data = load_checkpoint(checkpoint);
  const RunConfig config = parse_run_config(data.config_json);
  Model model(config.model, derive_seed(config.seed, SeedStream::ModelInit));
  apply_checkpoint(data, model.params);
  if (config_out) *config_out = config;
  return model;
}

Response cmd_infer(const fs::path& checkpoint, const fs::path& request, const fs::path& out_dir,
                   std::ostream& log) {
  RunConfig config;
  const Model model = load_model(checkpoint, &config);
  const json req = parse_json_file(request);
  if (!req.is_object() || !req.contains("scene") || !req.contains("template")) {
    throw ConfigError("request needs \"scene\" and \"template\"");
  }
  for (const auto& [k, v] : req.items()) {
    if (k != "scene" && k != "template" && k != "prompts") {
      throw ConfigError("request: unknown key '" + k + "'");
    }
  }
  fs::path scene_path = req.at("scene").get<std::string>();
  if (scene_path.is_relative()) scene_path = request.parent_path() / scene_path;
  const std::string templ = req.at("template").get<std::string>();
  std::vector<Prompt> prompts;
  if (req.contains("prompts")) {
    for (const json& p : req.at("prompts")) {
      prompts.push_back(parse_prompt(p.dump()));
      validate_prompt(prompts.back());
    }
  }

  const PreparedScene scene = prepare_scene(load_pointcloud(scene_path), config.model);
  const SceneEncoding enc = encode_prepared(model, scene);
  const Response r = respond(model, scene, enc, templ, prompts);

  prepare_output(out_dir);
  save_mask_overlay(out_dir / "mask.ply", scene.cloud, r.mask);
  const std::size_t on = static_cast<std::size_t>(std::count(r.mask.begin(), r.mask.end(), 1));
  const json resp = {{"text", r.text}, {"mask", "mask.ply"}, {"mask_points", on}};
  write_text(out_dir / "response.json", resp.dump(2) + "\n");
  log << r.text << "\n" << on << " of " << r.mask.size() << " points segmented\n";
  return r;
}

EvalReport cmd_eval(const fs::path& pred_dir, const fs::path& gt_dir, const fs::path& out_dir,
                    double dbscan_eps, std::size_t dbscan_min_pts, std::ostream& log) {
  if (!fs::is_directory(gt_dir)) throw IoError("not a directory: " + gt_dir.string());
  if (!fs::is_directory(pred_dir)) throw IoError("not a directory: " + pred_dir.string());
  std::vector<fs::path> gt_files;
  for (const auto& e : fs::directory_iterator(gt_dir))
    if (e.is_regular_file() && e.path().extension() == ".ply") gt_files.push_back(e.path());
  std::sort(gt_files.begin(), gt_files.end());
  if (gt_files.empty()) throw IoError("no .ply files in " + gt_dir.string());

  EvalReport rep;
  std::vector<std::optional<Aabb>> pred_boxes;
  std::vector<Aabb> gt_boxes;
  for (const fs::path& g : gt_files) {
    const fs::path p = pred_dir / g.filename();
    if (!fs::exists(p)) throw IoError("missing prediction " + p.string());
    const PlyPoints gt_ply = read_ply(g);
    PointMask gt = load_mask(g);
    PointMask pred = load_mask(p);
    if (pred.size() != gt.size()) {
      throw ShapeError(p.filename().string() + ": " + std::to_string(pred.size()) +
                       " predicted labels for " + std::to_string(gt.size()) + " points");
    }
    const std::span<const Vec3> coords = gt_ply.cloud.coords();
    EvalRecord rec = make_record(g.stem().string(), std::move(pred), std::move(gt));
    if (!rec.zero_target()) {
      std::vector<Vec3> members;
      for (std::size_t i = 0; i < rec.gt.size(); ++i)
        if (rec.gt[i]) members.push_back(coords[i]);
      gt_boxes.push_back(bounding_box(members));
      pred_boxes.push_back(mask_to_box(rec.pred, coords, dbscan_eps, dbscan_min_pts));
    }
    rep.records.push_back(std::move(rec));
  }
  rep.miou = miou_summary(rep.records);
  rep.box_count = gt_boxes.size();
  if (!gt_boxes.empty()) rep.acc = acc_at_iou(pred_boxes, gt_boxes);

  json rows = json::array();
  for (const EvalRecord& r : rep.records) {
    rows.push_back({{"id", r.id},
                    {"iou", r.iou},
                    {"zero_target", r.zero_target()},
                    {"pred_points", std::count(r.pred.begin(), r.pred.end(), 1)},
                    {"gt_points", std::count(r.gt.begin(), r.gt.end(), 1)}});
  }
  const json doc = {{"mIoU",
                     {{"all", rep.miou.all},
                      {"with_target", rep.miou.with_target},
                      {"zero_target", rep.miou.zero_target}}},
                    {"acc@0.25", rep.acc.acc_25},
                    {"acc@0.5", rep.acc.acc_50},
                    {"count", rep.miou.count},
                    {"target_count", rep.miou.target_count},
                    {"zero_target_count", rep.miou.zero_target_count},
                    {"records", rows}};
  prepare_output(out_dir);
  write_text(out_dir / "report.json", doc.dump(2) + "\n");
  log << "mIoU " << num(rep.miou.all) << " (target " << num(rep.miou.with_target)
      << ", zero-target " << num(rep.miou.zero_target) << "), acc@0.25 " << num(rep.acc.acc_25)
      << ", acc@0.5 " << num(rep.acc.acc_50) << " over " << rep.records.size() << " records\n";
  return rep;
}

Sweep parse_sweep(const std::string& name) {
  if (name == "tokens") return Sweep::Tokens;
  if (name == "prompts") return Sweep::Prompts;
  if (name == "all") return Sweep::All;
  throw ConfigError("unknown sweep '" + name + "' (tokens, prompts, all)");
}

std::string format_ablation_table(const AblationReport& report) {
  std::ostringstream out;
  if (!report.tokens.empty()) {
    out << "| # Visual Token | mean kept | referring mIoU |\n|---|---|---|\n";
    for (const TokenSweepRow& r : report.tokens) {
      out << "| " << r.k << " | " << num(r.mean_tokens) << " | " << num(r.referring_miou) << " |\n";
    }
  }
  if (!report.prompts.empty()) {
    if (!report.tokens.empty()) out << "\n";
    out << "| Visual Prompt Encoding | train acc | held-out acc |\n|---|---|---|\n";
    for (const ParadigmRow& r : report.prompts) {
      out << "| " << paradigm_name(r.paradigm) << " | " << num(r.train_accuracy) << " | "
          << num(r.accuracy) << " |\n";
    }
  }
  return out.str();
}

AblationReport cmd_ablate(const RunConfig& config_in, Sweep sweep,
                          const std::optional<fs::path>& checkpoint, const fs::path& out_dir,
                          std::ostream& log) {
  prepare_output(out_dir);
  RunConfig config = config_in;
  std::optional<Model> model;
  if (checkpoint) model.emplace(load_model(*checkpoint, &config));
  log_config(config, out_dir, log);
  const DataSplits data = build_splits(config);
  if (!model) {
    model.emplace(config.model, derive_seed(config.seed, SeedStream::ModelInit));
    log << "pretraining for the ablation\n";
    pretrain(*model, data.train, config.train, derive_seed(config.seed, SeedStream::Pretrain));
  }
  const std::uint64_t seed = derive_seed(config.seed, SeedStream::Ablation);

  AblationReport rep;
  json doc = json::object();
  if (sweep == Sweep::Tokens || sweep == Sweep::All) {
    IftConfig ift = config.ift;
    ift.epochs = config.ablation.ift_epochs;
    const auto train_req = referring_requests(data.train, static_cast<std::size_t>(-1));
    const auto eval_req = referring_requests(data.referring, config.eval.referring_requests);
    rep.tokens = sweep_visual_tokens(*model, data.train, train_req, data.referring, eval_req,
                                     config.ablation.k_values, ift, seed);
    json rows = json::array();
    for (const TokenSweepRow& r : rep.tokens) {
      rows.push_back({{"k", r.k}, {"mean_tokens", r.mean_tokens}, {"referring_miou", r.referring_miou}});
    }
    doc["visual_tokens"] = rows;
  }
  if (sweep == Sweep::Prompts || sweep == Sweep::All) {
    const ProbeConfig probe{config.ablation.probe_epochs, config.ablation.probe_lr,
                            config.ablation.probe_hidden};
    rep.prompts = compare_prompt_paradigms(*model, data.train, data.referring,
                                           config.ablation.box_jitter, probe, seed);
    json rows = json::array();
    for (const ParadigmRow& r : rep.prompts) {
      rows.push_back({{"paradigm", paradigm_name(r.paradigm)},
                      {"train_accuracy", r.train_accuracy},
                      {"accuracy", r.accuracy}});
    }
    doc["prompt_paradigms"] = rows;
  }
  const std::string table = format_ablation_table(rep);
  write_text(out_dir / "ablation.json", doc.dump(2) + "\n");
  write_text(out_dir / "ablation.md", table);
  log << table;
  return rep;
}

}  // namespace ost3d
