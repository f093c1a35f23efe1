#include "ost3d/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include "json.hpp"
#include "ost3d/errors.hpp"
#include "ost3d/ply.hpp"

namespace ost3d {

using nlohmann::json;

ShapeKind parse_shape(const std::string& name) {
  if (name == "box") return ShapeKind::Box;
  if (name == "sphere") return ShapeKind::Sphere;
  if (name == "cylinder") return ShapeKind::Cylinder;
  throw ConfigError("unknown shape '" + name + "' (expected box, sphere or cylinder)");
}

std::string shape_name(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::Box: return "box";
    case ShapeKind::Sphere: return "sphere";
    case ShapeKind::Cylinder: return "cylinder";
  }
  return "box";
}

void SceneConfig::validate() const {
  if (categories.size() < 2) throw ConfigError("scene config needs at least 2 categories");
  if (max_objects == 0) throw ConfigError("scene config allows 0 objects");
  if (min_objects > max_objects) throw ConfigError("scene config: min_objects > max_objects");
  if (unique_categories && max_objects > categories.size()) {
    throw ConfigError("scene config: unique_categories needs max_objects <= category count");
  }
  if (!(floor_extent > 0.0)) throw ConfigError("scene config: floor_extent must be positive");
  if (!(object_spacing > 0.0) || !(floor_spacing > 0.0)) {
    throw ConfigError("scene config: sample spacing must be positive");
  }
  if (teacher_dim == 0) throw ConfigError("scene config: teacher_dim must be positive");
  if (teacher_noise < 0.0 || color_noise < 0.0) {
    throw ConfigError("scene config: noise levels must be non-negative");
  }
  for (const CategorySpec& c : categories) {
    if (c.name.empty()) throw ConfigError("scene config: category without a name");
    if (!(c.min_size > 0.0) || c.max_size < c.min_size) {
      throw ConfigError("scene config: bad size range for " + c.name);
    }
    if (c.shape != ShapeKind::Sphere && (!(c.min_height > 0.0) || c.max_height < c.min_height)) {
      throw ConfigError("scene config: bad height range for " + c.name);
    }
  }
}

SceneConfig SceneConfig::toy_default() {
  SceneConfig c;
  c.categories = {
      {"cabinet", ShapeKind::Box, {0.80, 0.22, 0.20}, 0.30, 0.50, 0.35, 0.60},
      {"ball", ShapeKind::Sphere, {0.20, 0.35, 0.85}, 0.30, 0.50, 0.30, 0.50},
      {"bin", ShapeKind::Cylinder, {0.90, 0.80, 0.20}, 0.30, 0.50, 0.30, 0.55},
      {"crate", ShapeKind::Box, {0.25, 0.70, 0.30}, 0.30, 0.50, 0.30, 0.55},
  };
  return c;
}

std::size_t SyntheticScene::num_instances() const {
  int mx = -1;
  for (int id : instance_labels) mx = std::max(mx, id);
  return static_cast<std::size_t>(mx + 1);
}

std::vector<int> SyntheticScene::instance_categories() const {
  std::vector<int> cats(num_instances(), -1);
  for (std::size_t i = 0; i < instance_labels.size(); ++i) {
    if (instance_labels[i] >= 0) cats[static_cast<std::size_t>(instance_labels[i])] =
        semantic_labels[i];
  }
  return cats;
}

PointMask SyntheticScene::instance_mask(int instance) const {
  PointMask m(instance_labels.size(), 0);
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = instance_labels[i] == instance ? 1 : 0;
  return m;
}

Matrix category_embeddings(const SceneConfig& config) {
  std::mt19937_64 rng(config.teacher_seed);
  Matrix e = Matrix::random_normal(config.categories.size() + 1, config.teacher_dim, rng, 1.0);
  for (std::size_t i = 0; i < e.rows(); ++i) {
    double n = 0.0;
    for (double v : e.row(i)) n += v * v;
    n = std::sqrt(n);
    for (double& v : e.row(i)) v /= n;
  }
  return e;
}

namespace {

struct Placed {
  std::size_t category;
  double cx, cy;
  double size;    // footprint side or diameter
  double height;  // vertical extent
  double yaw;     // boxes only
};

struct Sampler {
  std::mt19937_64& rng;
  std::uniform_real_distribution<double> unit{0.0, 1.0};

  double u() { return unit(rng); }
  std::size_t count(double area, double spacing) {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(area / (spacing * spacing))));
  }
};

void sample_object(const Placed& o, ShapeKind shape, double spacing, Sampler& s,
                   std::vector<Vec3>& out) {
  const double r = 0.5 * o.size;
  switch (shape) {
    case ShapeKind::Box: {
      const double c = std::cos(o.yaw), sn = std::sin(o.yaw);
      auto place = [&](double lx, double ly, double z) {
        out.push_back({o.cx + c * lx - sn * ly, o.cy + sn * lx + c * ly, z});
      };
      const std::size_t top = s.count(o.size * o.size, spacing);
      for (std::size_t i = 0; i < top; ++i) place((s.u() - 0.5) * o.size, (s.u() - 0.5) * o.size, o.height);
      const std::size_t side = s.count(o.size * o.height, spacing);
      for (int f = 0; f < 4; ++f) {
        for (std::size_t i = 0; i < side; ++i) {
          const double t = (s.u() - 0.5) * o.size;
          const double z = s.u() * o.height;
          switch (f) {
            case 0: place(r, t, z); break;
            case 1: place(-r, t, z); break;
            case 2: place(t, r, z); break;
            default: place(t, -r, z); break;
          }
        }
      }
      break;
    }
    case ShapeKind::Sphere: {
      const std::size_t n = s.count(4.0 * std::numbers::pi * r * r, spacing);
      for (std::size_t i = 0; i < n; ++i) {
        const double z = 2.0 * s.u() - 1.0;
        const double phi = 2.0 * std::numbers::pi * s.u();
        const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
        out.push_back({o.cx + r * rho * std::cos(phi), o.cy + r * rho * std::sin(phi), r + r * z});
      }
      break;
    }
    case ShapeKind::Cylinder: {
      const std::size_t side = s.count(2.0 * std::numbers::pi * r * o.height, spacing);
      for (std::size_t i = 0; i < side; ++i) {
        const double phi = 2.0 * std::numbers::pi * s.u();
        out.push_back({o.cx + r * std::cos(phi), o.cy + r * std::sin(phi), s.u() * o.height});
      }
      const std::size_t top = s.count(std::numbers::pi * r * r, spacing);
      for (std::size_t i = 0; i < top; ++i) {
        const double phi = 2.0 * std::numbers::pi * s.u();
        const double rad = r * std::sqrt(s.u());
        out.push_back({o.cx + rad * std::cos(phi), o.cy + rad * std::sin(phi), o.height});
      }
      break;
    }
  }
}

bool under_object(const Placed& o, ShapeKind shape, double x, double y) {
  const double dx = x - o.cx, dy = y - o.cy;
  if (shape == ShapeKind::Box) {
    const double c = std::cos(o.yaw), s = std::sin(o.yaw);
    const double lx = c * dx + s * dy, ly = -s * dx + c * dy;
    return std::abs(lx) <= 0.5 * o.size && std::abs(ly) <= 0.5 * o.size;
  }
  const double reach = shape == ShapeKind::Sphere ? 0.35 * o.size : 0.5 * o.size;
  return dx * dx + dy * dy <= reach * reach;
}

}  // namespace

SyntheticScene generate_scene(std::uint64_t seed, const SceneConfig& config) {
  config.validate();
  std::mt19937_64 rng(seed);
  Sampler s{rng};
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::uniform_int_distribution<std::size_t> count_dist(config.min_objects, config.max_objects);
  const std::size_t wanted = count_dist(rng);

  std::vector<std::size_t> category_pool;
  for (std::size_t c = 0; c < config.categories.size(); ++c) category_pool.push_back(c);
  std::shuffle(category_pool.begin(), category_pool.end(), rng);

  std::vector<Placed> objects;
  const double half = 0.5 * config.floor_extent;
  for (std::size_t k = 0; k < wanted; ++k) {
    const std::size_t cat = config.unique_categories
                                ? category_pool[k]
                                : static_cast<std::size_t>(s.u() * config.categories.size()) %
                                      config.categories.size();
    const CategorySpec& spec = config.categories[cat];
    for (int attempt = 0; attempt < 200; ++attempt) {
      Placed o;
      o.category = cat;
      o.size = spec.min_size + s.u() * (spec.max_size - spec.min_size);
      o.height = spec.shape == ShapeKind::Sphere
                     ? o.size
                     : spec.min_height + s.u() * (spec.max_height - spec.min_height);
      o.yaw = spec.shape == ShapeKind::Box ? s.u() * 0.5 * std::numbers::pi : 0.0;
      const double bound = 0.5 * o.size * std::numbers::sqrt2;
      const double margin = half - bound;
      if (margin <= 0.0) break;
      o.cx = (2.0 * s.u() - 1.0) * margin;
      o.cy = (2.0 * s.u() - 1.0) * margin;
      bool clear = true;
      for (const Placed& p : objects) {
        const double need = bound + 0.5 * p.size * std::numbers::sqrt2 + config.min_gap;
        if (std::hypot(o.cx - p.cx, o.cy - p.cy) < need) {
          clear = false;
          break;
        }
      }
      if (clear) {
        objects.push_back(o);
        break;
      }
    }
  }
  if (objects.empty()) throw ConfigError("generate_scene: could not place any object");

  std::vector<Vec3> coords, colors;
  std::vector<int> instances, semantics;
  auto noisy = [&](const Vec3& base) {
    Vec3 c;
    for (int k = 0; k < 3; ++k) c[k] = std::clamp(base[k] + config.color_noise * gauss(rng), 0.0, 1.0);
    return c;
  };
  for (std::size_t k = 0; k < objects.size(); ++k) {
    const CategorySpec& spec = config.categories[objects[k].category];
    std::vector<Vec3> pts;
    sample_object(objects[k], spec.shape, config.object_spacing, s, pts);
    for (const Vec3& p : pts) {
      coords.push_back(p);
      colors.push_back(noisy(spec.color));
      instances.push_back(static_cast<int>(k));
      semantics.push_back(static_cast<int>(objects[k].category));
    }
  }
  const std::size_t floor_n =
      s.count(config.floor_extent * config.floor_extent, config.floor_spacing);
  for (std::size_t i = 0; i < floor_n; ++i) {
    const double x = (2.0 * s.u() - 1.0) * half;
    const double y = (2.0 * s.u() - 1.0) * half;
    bool hidden = false;
    for (const Placed& o : objects) {
      if (under_object(o, config.categories[o.category].shape, x, y)) {
        hidden = true;
        break;
      }
    }
    if (hidden) continue;
    coords.push_back({x, y, 0.0});
    colors.push_back(noisy(config.floor_color));
    instances.push_back(-1);
    semantics.push_back(-1);
  }

  const Matrix emb = category_embeddings(config);
  const std::size_t floor_row = config.categories.size();
  Matrix teacher(coords.size(), config.teacher_dim);
  for (std::size_t i = 0; i < coords.size(); ++i) {
    const std::size_t row = semantics[i] < 0 ? floor_row : static_cast<std::size_t>(semantics[i]);
    double n = 0.0;
    for (std::size_t j = 0; j < config.teacher_dim; ++j) {
      const double v = emb(row, j) + config.teacher_noise * gauss(rng);
      teacher(i, j) = v;
      n += v * v;
    }
    n = std::sqrt(n);
    for (double& v : teacher.row(i)) v /= n;
  }

  SyntheticScene scene;
  scene.cloud = PointCloud(std::move(coords), std::move(colors));
  scene.instance_labels = std::move(instances);
  scene.semantic_labels = std::move(semantics);
  scene.teacher_features = std::move(teacher);
  for (const CategorySpec& c : config.categories) scene.category_names.push_back(c.name);
  return scene;
}

void save_scene(const std::filesystem::path& dir, const std::string& stem,
                const SyntheticScene& scene) {
  std::filesystem::create_directories(dir);
  save_pointcloud(dir / (stem + ".ply"), scene.cloud);
  const std::string teacher_file = stem + ".teacher.bin";
  {
    std::ofstream os(dir / teacher_file, std::ios::binary);
    if (!os) throw IoError("cannot write " + (dir / teacher_file).string());
    os.write(reinterpret_cast<const char*>(scene.teacher_features.values().data()),
             static_cast<std::streamsize>(scene.teacher_features.size() * sizeof(double)));
  }
  json j;
  j["num_points"] = scene.cloud.size();
  j["categories"] = scene.category_names;
  j["instance_labels"] = scene.instance_labels;
  j["semantic_labels"] = scene.semantic_labels;
  j["teacher_features"] = {{"file", teacher_file},
                           {"rows", scene.teacher_features.rows()},
                           {"cols", scene.teacher_features.cols()},
                           {"dtype", "float64-le"}};
  std::ofstream os(dir / (stem + ".json"));
  if (!os) throw IoError("cannot write sidecar for " + stem);
  os << j.dump(1) << '\n';
}

SyntheticScene load_scene(const std::filesystem::path& dir, const std::string& stem) {
  SyntheticScene scene;
  scene.cloud = load_pointcloud(dir / (stem + ".ply"));
  std::ifstream is(dir / (stem + ".json"));
  if (!is) throw IoError("missing annotation sidecar for " + stem);
  json j;
  try {
    j = json::parse(is);
    scene.category_names = j.at("categories").get<std::vector<std::string>>();
    scene.instance_labels = j.at("instance_labels").get<std::vector<int>>();
    scene.semantic_labels = j.at("semantic_labels").get<std::vector<int>>();
  } catch (const json::exception& e) {
    throw ParseError("annotation sidecar " + stem + ": " + e.what());
  }
  if (scene.instance_labels.size() != scene.cloud.size() ||
      scene.semantic_labels.size() != scene.cloud.size()) {
    throw ParseError("annotation sidecar " + stem + ": label count does not match points");
  }
  if (j.contains("teacher_features")) {
    const auto& tf = j["teacher_features"];
    const auto rows = tf.at("rows").get<std::size_t>();
    const auto cols = tf.at("cols").get<std::size_t>();
    std::vector<double> data(rows * cols);
    std::ifstream bin(dir / tf.at("file").get<std::string>(), std::ios::binary);
    bin.read(reinterpret_cast<char*>(data.data()),
             static_cast<std::streamsize>(data.size() * sizeof(double)));
    if (!bin) throw ParseError("teacher feature file for " + stem + " is truncated");
    scene.teacher_features = Matrix(rows, cols, std::move(data));
  }
  return scene;
}

}  // namespace ost3d
