#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "ost3d/commands.hpp"
#include "ost3d/errors.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kUserError = 1;
constexpr int kInternalError = 2;

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
  std::string out = "out";
  std::string checkpoint;
  std::string request;
  std::string data;
  std::string pred;
  std::string gt;
  std::string sweep = "all";
};

ost3d::RunConfig resolve_config(const Options& o) {
  std::string text = "{}";
  if (!o.config.empty()) {
    std::ifstream in(o.config);
    if (!in) throw ost3d::IoError("cannot open config " + o.config);
    std::stringstream ss;
    ss << in.rdbuf();
    text = ss.str();
  }
  std::vector<std::string> sets = o.overrides;
  if (o.seed) sets.push_back("seed=" + std::to_string(*o.seed));
  return ost3d::parse_run_config(ost3d::apply_overrides(text, sets));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Superpoint-transformer 3D segmentation toolkit"};
  app.require_subcommand(1);
  Options o;

  auto add_config = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "JSON run config")->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "Run seed (overrides the config)");
    sub->add_option("--set", o.overrides, "Config override, e.g. train.epochs=5");
  };

  CLI::App* gen = app.add_subcommand("gen", "Generate synthetic scenes");
  add_config(gen);
  gen->add_option("--out", o.out, "Output directory");

  CLI::App* pre = app.add_subcommand("pretrain", "Stage-1 pretraining, then instruction tuning");
  add_config(pre);
  pre->add_option("--out", o.out, "Output directory");
  pre->add_option("--data", o.data, "Scene directory written by gen")->check(CLI::ExistingDirectory);

  CLI::App* inf = app.add_subcommand("infer", "Answer one segmentation request");
  inf->add_option("--checkpoint", o.checkpoint, "Model checkpoint")->required()->check(CLI::ExistingFile);
  inf->add_option("--request", o.request, "Request JSON")->required()->check(CLI::ExistingFile);
  inf->add_option("--out", o.out, "Output directory");

  CLI::App* ev = app.add_subcommand("eval", "Score predicted masks against ground truth");
  add_config(ev);
  ev->add_option("--pred", o.pred, "Directory of predicted label PLYs")->required();
  ev->add_option("--gt", o.gt, "Directory of ground-truth label PLYs")->required();
  ev->add_option("--out", o.out, "Output directory");

  CLI::App* abl = app.add_subcommand("ablate", "Visual-token and prompt-encoding ablations");
  add_config(abl);
  abl->add_option("--checkpoint", o.checkpoint, "Pretrained checkpoint (skips pretraining)")
      ->check(CLI::ExistingFile);
  abl->add_option("--sweep", o.sweep, "tokens, prompts or all");
  abl->add_option("--out", o.out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUserError;
  }

  try {
    if (gen->parsed()) {
      ost3d::cmd_gen(resolve_config(o), o.out, std::cout);
    } else if (pre->parsed()) {
      std::optional<std::filesystem::path> data;
      if (!o.data.empty()) data = o.data;
      ost3d::cmd_pretrain(resolve_config(o), o.out, data, std::cout);
    } else if (inf->parsed()) {
      ost3d::cmd_infer(o.checkpoint, o.request, o.out, std::cout);
    } else if (ev->parsed()) {
      const ost3d::RunConfig c = resolve_config(o);
      ost3d::cmd_eval(o.pred, o.gt, o.out, c.eval.dbscan_eps, c.eval.dbscan_min_pts, std::cout);
    } else if (abl->parsed()) {
      std::optional<std::filesystem::path> ckpt;
      if (!o.checkpoint.empty()) ckpt = o.checkpoint;
      ost3d::cmd_ablate(resolve_config(o), ost3d::parse_sweep(o.sweep), ckpt, o.out, std::cout);
    }
  } catch (const ost3d::NonFiniteError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInternalError;
  } catch (const ost3d::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUserError;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kInternalError;
  }
  return kOk;
}
