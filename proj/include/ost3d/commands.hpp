#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "ost3d/ablation.hpp"
#include "ost3d/config.hpp"
#include "ost3d/metrics.hpp"
#include "ost3d/trainer.hpp"

namespace ost3d {

struct DataSplits {
  std::vector<TrainingScene> train;
  std::vector<TrainingScene> val;
  std::vector<TrainingScene> referring;
};

// Generates every split from the config seeds, or loads scenes written by cmd_gen.
DataSplits build_splits(const RunConfig& config, const std::optional<std::filesystem::path>& data_dir = {});

// Writes train_NNNN / val_NNNN / ref_NNNN scenes, manifest.json and config.resolved.json.
void cmd_gen(const RunConfig& config, const std::filesystem::path& out_dir, std::ostream& log);

struct PretrainReport {
  InstanceEval val;
  bool tuned = false;  // stage 2 ran
  ReferringEval referring;
  ReferringEval zero_target;
};

// Stage 1, then stage 2 when ift.epochs > 0. Writes model.ckpt, metrics.csv,
// ift_metrics.csv (stage 2 only), config.resolved.json and report.json.
PretrainReport cmd_pretrain(const RunConfig& config, const std::filesystem::path& out_dir,
                            const std::optional<std::filesystem::path>& data_dir, std::ostream& log);

// Rebuilds the model from a checkpoint written by cmd_pretrain.
Model load_model(const std::filesystem::path& checkpoint, RunConfig* config_out = nullptr);

// Request: {"scene": "<ply path, relative to the request file>", "template": "...",
// "prompts": [prompt, ...]}. Writes response.json {"text", "mask"} and mask.ply.
Response cmd_infer(const std::filesystem::path& checkpoint, const std::filesystem::path& request,
                   const std::filesystem::path& out_dir, std::ostream& log);

struct EvalReport {
  std::vector<EvalRecord> records;
  MiouSummary miou;
  AccAtIou acc;
  std::size_t box_count = 0;  // records with a target, the acc@IoU denominator
};

// Pairs every label PLY in gt_dir with the same file name in pred_dir and writes
// report.json into out_dir.
EvalReport cmd_eval(const std::filesystem::path& pred_dir, const std::filesystem::path& gt_dir,
                    const std::filesystem::path& out_dir, double dbscan_eps,
                    std::size_t dbscan_min_pts, std::ostream& log);

enum class Sweep { Tokens, Prompts, All };

Sweep parse_sweep(const std::string& name);

struct AblationReport {
  std::vector<TokenSweepRow> tokens;
  std::vector<ParadigmRow> prompts;
};

// Uses the checkpoint when given, otherwise pretrains from the config first.
// Writes ablation.json and ablation.md.
AblationReport cmd_ablate(const RunConfig& config, Sweep sweep,
                          const std::optional<std::filesystem::path>& checkpoint,
                          const std::filesystem::path& out_dir, std::ostream& log);

std::string format_ablation_table(const AblationReport& report);

}  // namespace ost3d
