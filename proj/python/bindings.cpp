#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "ost3d/commands.hpp"
#include "ost3d/config.hpp"
#include "ost3d/errors.hpp"
#include "ost3d/metrics.hpp"
#include "ost3d/ply.hpp"
#include "ost3d/prompt.hpp"
#include "ost3d/synthetic.hpp"

namespace py = pybind11;
using namespace ost3d;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

py::array_t<double> to_numpy(const Matrix& m) {
  py::array_t<double> out({m.rows(), m.cols()});
  std::copy(m.values().begin(), m.values().end(), out.mutable_data());
  return out;
}

std::vector<Vec3> to_points(const DoubleArray& a) {
  if (a.ndim() != 2 || a.shape(1) != 3) throw ShapeError("expected an N x 3 array");
  std::vector<Vec3> pts(static_cast<std::size_t>(a.shape(0)));
  const double* d = a.data();
  for (std::size_t i = 0; i < pts.size(); ++i) pts[i] = {d[3 * i], d[3 * i + 1], d[3 * i + 2]};
  return pts;
}

py::array_t<double> points_to_numpy(const std::vector<Vec3>& pts) {
  py::array_t<double> out({pts.size(), std::size_t{3}});
  double* d = out.mutable_data();
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t k = 0; k < 3; ++k) d[3 * i + k] = pts[i][k];
  return out;
}

py::array_t<std::uint8_t> mask_to_numpy(const PointMask& m) {
  py::array_t<std::uint8_t> out(m.size());
  std::copy(m.begin(), m.end(), out.mutable_data());
  return out;
}

PointMask to_mask(const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& a) {
  return PointMask(a.data(), a.data() + a.size());
}

Matrix to_matrix(const DoubleArray& a) {
  if (a.ndim() != 2) throw ShapeError("expected a 2-d array");
  Matrix m(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
  std::copy(a.data(), a.data() + a.size(), m.values().begin());
  return m;
}

py::object box_to_py(const std::optional<Aabb>& b) {
  if (!b) return py::none();
  return py::make_tuple(b->min, b->max);
}

RunConfig config_from(const std::string& json_text, const std::vector<std::string>& overrides) {
  return parse_run_config(apply_overrides(json_text, overrides));
}

}  // namespace

PYBIND11_MODULE(_ost3d, m) {
  m.doc() = "Point-cloud segmentation with superpoint transformers and visual prompts";

  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<ParseError>(m, "ParseError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());
  py::register_exception<NonFiniteError>(m, "NonFiniteError", base.ptr());

  m.def("iou", [](const py::array_t<std::uint8_t>& a, const py::array_t<std::uint8_t>& b) {
    return iou(to_mask(a), to_mask(b));
  }, py::arg("pred"), py::arg("gt"));

  m.def("dbscan", [](const DoubleArray& pts, double eps, std::size_t min_pts) {
    return dbscan(to_points(pts), eps, min_pts);
  }, py::arg("points"), py::arg("eps"), py::arg("min_pts"));

  m.def("box_iou", [](const Vec3& amin, const Vec3& amax, const Vec3& bmin, const Vec3& bmax) {
    return box_iou(Aabb{amin, amax}, Aabb{bmin, bmax});
  }, py::arg("a_min"), py::arg("a_max"), py::arg("b_min"), py::arg("b_max"));

  m.def("mask_to_box", [](const py::array_t<std::uint8_t>& mask, const DoubleArray& pts, double eps,
                          std::size_t min_pts) {
    return box_to_py(mask_to_box(to_mask(mask), to_points(pts), eps, min_pts));
  }, py::arg("mask"), py::arg("points"), py::arg("eps") = 0.04, py::arg("min_pts") = 4);

  m.def("hungarian", [](const DoubleArray& cost) { return hungarian(to_matrix(cost)); }, py::arg("cost"));

  m.def("generate_scene", [](std::uint64_t seed) {
    const SyntheticScene s = generate_scene(seed, SceneConfig::toy_default());
    py::dict d;
    d["coords"] = points_to_numpy(s.cloud.coords());
    d["colors"] = points_to_numpy(s.cloud.colors());
    d["instance_labels"] = s.instance_labels;
    d["semantic_labels"] = s.semantic_labels;
    d["categories"] = s.category_names;
    return d;
  }, py::arg("seed"), "Toy scene as a dict of numpy arrays and label lists.");

  m.def("load_pointcloud", [](const std::filesystem::path& path) {
    const PlyPoints p = read_ply(path);
    return py::make_tuple(points_to_numpy(p.cloud.coords()), points_to_numpy(p.cloud.colors()), p.labels);
  }, py::arg("path"), "Returns (coords, colors, labels or None).");

  m.def("resolve_config", [](const std::string& json_text, const std::vector<std::string>& overrides) {
    return run_config_to_json(config_from(json_text, overrides));
  }, py::arg("json_text") = "{}", py::arg("overrides") = std::vector<std::string>{});

  m.def("gen", [](const std::string& json_text, const std::filesystem::path& out,
                  const std::vector<std::string>& overrides) {
    std::ostringstream log;
    cmd_gen(config_from(json_text, overrides), out, log);
    return log.str();
  }, py::arg("config_json"), py::arg("out"), py::arg("overrides") = std::vector<std::string>{});

  m.def("pretrain", [](const std::string& json_text, const std::filesystem::path& out,
                       const std::vector<std::string>& overrides) {
    std::ostringstream log;
    const PretrainReport r = [&] {
      py::gil_scoped_release release;
      return cmd_pretrain(config_from(json_text, overrides), out, std::nullopt, log);
    }();
    py::dict d;
    d["val_mean_iou"] = r.val.mean_iou;
    d["val_accuracy"] = r.val.accuracy;
    d["tuned"] = r.tuned;
    d["referring_mean_iou"] = r.referring.mean_iou;
    d["zero_target_seg_count"] = r.zero_target.seg_count;
    return d;
  }, py::arg("config_json"), py::arg("out"), py::arg("overrides") = std::vector<std::string>{});

  m.def("infer", [](const std::filesystem::path& ckpt, const std::filesystem::path& request,
                    const std::filesystem::path& out) {
    std::ostringstream log;
    const Response r = cmd_infer(ckpt, request, out, log);
    return py::make_tuple(r.text, mask_to_numpy(r.mask));
  }, py::arg("checkpoint"), py::arg("request"), py::arg("out"), "Returns (text, mask).");

  m.def("evaluate", [](const std::filesystem::path& pred, const std::filesystem::path& gt,
                       const std::filesystem::path& out, double eps, std::size_t min_pts) {
    std::ostringstream log;
    const EvalReport r = cmd_eval(pred, gt, out, eps, min_pts, log);
    py::dict d;
    d["miou"] = r.miou.all;
    d["miou_with_target"] = r.miou.with_target;
    d["miou_zero_target"] = r.miou.zero_target;
    d["acc_25"] = r.acc.acc_25;
    d["acc_50"] = r.acc.acc_50;
    d["count"] = r.miou.count;
    return d;
  }, py::arg("pred_dir"), py::arg("gt_dir"), py::arg("out"), py::arg("eps") = 0.04, py::arg("min_pts") = 4);

  m.def("parse_prompt", [](const std::string& json_text) { return prompt_to_json(parse_prompt(json_text)); },
        py::arg("json_text"), "Validates a prompt and returns its canonical JSON.");
}
