#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"

#include "ost3d/commands.hpp"
#include "ost3d/errors.hpp"
#include "ost3d/ply.hpp"
#include "json.hpp"

using namespace ost3d;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("ost3d_unit_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

RunConfig tiny() {
  RunConfig c = load_run_config(fs::path(OST3D_CONFIG_DIR) / "tiny.json");
  c.data = {2, 1, 2};
  c.ift.epochs = 0;
  c.finalize();
  return c;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("gen is deterministic and writes a manifest") {
  const RunConfig c = tiny();
  const fs::path a = fresh_dir("gen_a"), b = fresh_dir("gen_b");
  std::ostringstream log;
  cmd_gen(c, a, log);
  cmd_gen(c, b, log);
  const auto manifest = nlohmann::json::parse(slurp(a / "manifest.json"));
  CHECK(manifest["train"].size() == 2);
  CHECK(manifest["ref"].size() == 2);
  for (const auto& e : fs::directory_iterator(a)) CHECK(slurp(e.path()) == slurp(b / e.path().filename()));
  const DataSplits loaded = build_splits(c, a);
  const DataSplits generated = build_splits(c);
  CHECK(loaded.train[0].scene.cloud.coords() == generated.train[0].scene.cloud.coords());
}

TEST_CASE("eval of identical prediction and ground truth") {
  const RunConfig c = tiny();
  const DataSplits s = build_splits(c);
  const fs::path gt = fresh_dir("eval_gt"), out = fresh_dir("eval_out");
  const auto& scene = s.val[0].scene;
  save_mask_overlay(gt / "a.ply", scene.cloud, scene.instance_mask(0));
  save_mask_overlay(gt / "b.ply", scene.cloud, PointMask(scene.cloud.size(), 0));
  std::ostringstream log;
  const EvalReport r = cmd_eval(gt, gt, out, c.eval.dbscan_eps, c.eval.dbscan_min_pts, log);
  CHECK(r.miou.all == 1.0);
  CHECK(r.miou.zero_target_count == 1);
  CHECK(r.box_count == 1);
  CHECK(r.acc.acc_50 == 1.0);
  CHECK(fs::exists(out / "report.json"));
  fs::remove(gt / "b.ply");
  const fs::path empty = fresh_dir("eval_empty");
  CHECK_THROWS_AS(cmd_eval(empty, gt, out, 0.04, 4, log), IoError);
}

TEST_CASE("pretrain then infer") {
  RunConfig c = tiny();
  c.train.epochs = 1;
  const fs::path run = fresh_dir("pretrain");
  std::ostringstream log;
  cmd_pretrain(c, run, std::nullopt, log);
  CHECK(fs::exists(run / "model.ckpt"));
  CHECK(slurp(run / "metrics.csv").rfind("step,cls,mask,kd,total\n", 0) == 0);

  RunConfig loaded;
  const Model model = load_model(run / "model.ckpt", &loaded);
  CHECK(run_config_to_json(loaded) == run_config_to_json(c));

  const fs::path req = fresh_dir("infer");
  const auto scene = build_splits(c).val[0].scene;
  save_pointcloud(req / "scene.ply", scene.cloud);
  std::ofstream(req / "request.json")
      << R"({"scene": "scene.ply", "template": "<PC> please segment the chair . <obj>", "prompts": []})";
  const Response r = cmd_infer(run / "model.ckpt", req / "request.json", req / "out", log);
  CHECK(r.segmented);
  const auto resp = nlohmann::json::parse(slurp(req / "out" / "response.json"));
  CHECK(resp["text"] == r.text);
  CHECK(load_mask(req / "out" / "mask.ply") == r.mask);

  std::ofstream(req / "bad.json") << R"({"scene": "scene.ply", "template": "<PC>", "extra": 1})";
  CHECK_THROWS_AS(cmd_infer(run / "model.ckpt", req / "bad.json", req / "out2", log), ConfigError);
  CHECK_THROWS_AS(cmd_infer(run / "model.ckpt", req / "missing.json", req / "out2", log), IoError);
}

TEST_CASE("sweep names") {
  CHECK(parse_sweep("tokens") == Sweep::Tokens);
  CHECK(parse_sweep("prompts") == Sweep::Prompts);
  CHECK(parse_sweep("all") == Sweep::All);
  CHECK_THROWS_AS(parse_sweep("everything"), ConfigError);
}

}  // TEST_SUITE
