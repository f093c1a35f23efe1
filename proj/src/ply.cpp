#include "ost3d/ply.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "ost3d/errors.hpp"

namespace ost3d {

namespace {

struct Property {
  std::string name;
  std::string type;
  bool is_list = false;
};

struct Element {
  std::string name;
  std::size_t count = 0;
  std::vector<Property> properties;
};

std::vector<std::string> split(const std::string& line) {
  std::istringstream ss(line);
  std::vector<std::string> out;
  for (std::string tok; ss >> tok;) out.push_back(tok);
  return out;
}

double parse_number(const std::string& tok, std::size_t line) {
  double v = 0.0;
  const char* end = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(tok.data(), end, v);
  if (ec != std::errc() || ptr != end) throw ParseError("malformed number '" + tok + "'", line);
  return v;
}

double color_scale(const std::string& type) {
  if (type == "uchar" || type == "uint8" || type == "char" || type == "int8") return 255.0;
  if (type == "ushort" || type == "uint16" || type == "short" || type == "int16") return 65535.0;
  if (type == "float" || type == "float32" || type == "double" || type == "float64") return 1.0;
  return 255.0;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_ply(const std::filesystem::path& path, const PointCloud& cloud,
               const std::vector<int>* labels, bool uchar_colors,
               const std::vector<Vec3>* color_override) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write PLY: " + path.string());
  const char* ctype = uchar_colors ? "uchar" : "double";
  os << "ply\nformat ascii 1.0\ncomment ost3d point cloud\n";
  os << "element vertex " << cloud.size() << "\n";
  os << "property double x\nproperty double y\nproperty double z\n";
  os << "property " << ctype << " red\nproperty " << ctype << " green\nproperty " << ctype
     << " blue\n";
  if (labels) os << "property int label\n";
  os << "end_header\n";
  const auto& colors = color_override ? *color_override : cloud.colors();
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3& p = cloud.coords()[i];
    const Vec3& c = colors[i];
    os << fmt(p[0]) << ' ' << fmt(p[1]) << ' ' << fmt(p[2]);
    for (int k = 0; k < 3; ++k) {
      if (uchar_colors) {
        os << ' ' << static_cast<int>(std::lround(c[k] * 255.0));
      } else {
        os << ' ' << fmt(c[k]);
      }
    }
    if (labels) os << ' ' << (*labels)[i];
    os << '\n';
  }
  if (!os) throw IoError("failed writing PLY: " + path.string());
}

}  // namespace

PlyPoints parse_ply(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  auto next_line = [&](const char* context) {
    if (!std::getline(in, line)) {
      throw ParseError(std::string("unexpected end of file while reading ") + context,
                       lineno + 1);
    }
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
  };

  next_line("magic");
  if (line != "ply") throw ParseError("missing 'ply' magic", lineno);

  std::vector<Element> elements;
  bool format_seen = false;
  for (;;) {
    next_line("header");
    const auto toks = split(line);
    if (toks.empty() || toks[0] == "comment" || toks[0] == "obj_info") continue;
    if (toks[0] == "end_header") break;
    if (toks[0] == "format") {
      if (toks.size() < 2 || toks[1] != "ascii") {
        throw ParseError("only ascii PLY is supported", lineno);
      }
      format_seen = true;
    } else if (toks[0] == "element") {
      if (toks.size() != 3) throw ParseError("malformed element line", lineno);
      Element e;
      e.name = toks[1];
      e.count = static_cast<std::size_t>(parse_number(toks[2], lineno));
      elements.push_back(std::move(e));
    } else if (toks[0] == "property") {
      if (elements.empty()) throw ParseError("property before any element", lineno);
      Property p;
      if (toks.size() == 5 && toks[1] == "list") {
        p.is_list = true;
        p.type = toks[3];
        p.name = toks[4];
      } else if (toks.size() == 3) {
        p.type = toks[1];
        p.name = toks[2];
      } else {
        throw ParseError("malformed property line", lineno);
      }
      elements.back().properties.push_back(std::move(p));
    } else {
      throw ParseError("unknown header keyword '" + toks[0] + "'", lineno);
    }
  }
  if (!format_seen) throw ParseError("missing format line", lineno);

  std::vector<Vec3> coords, colors;
  std::optional<std::vector<int>> labels;
  bool have_vertex = false;
  for (const Element& e : elements) {
    if (e.name != "vertex") {
      for (std::size_t i = 0; i < e.count; ++i) next_line("element data");
      continue;
    }
    have_vertex = true;
    int ix = -1, iy = -1, iz = -1, ir = -1, ig = -1, ib = -1, il = -1;
    for (std::size_t k = 0; k < e.properties.size(); ++k) {
      const Property& p = e.properties[k];
      if (p.is_list) throw ParseError("list properties on vertices are not supported");
      const int idx = static_cast<int>(k);
      if (p.name == "x") ix = idx;
      if (p.name == "y") iy = idx;
      if (p.name == "z") iz = idx;
      if (p.name == "red" || p.name == "r") ir = idx;
      if (p.name == "green" || p.name == "g") ig = idx;
      if (p.name == "blue" || p.name == "b") ib = idx;
      if (p.name == "label") il = idx;
    }
    if (ix < 0 || iy < 0 || iz < 0) throw ParseError("vertex element lacks x/y/z properties");
    const bool has_color = ir >= 0 && ig >= 0 && ib >= 0;
    const double cs = has_color ? color_scale(e.properties[static_cast<std::size_t>(ir)].type)
                                : 1.0;
    if (il >= 0) labels.emplace();
    coords.reserve(e.count);
    colors.reserve(e.count);
    for (std::size_t i = 0; i < e.count; ++i) {
      next_line("vertex data");
      const auto toks = split(line);
      if (toks.size() != e.properties.size()) {
        throw ParseError("expected " + std::to_string(e.properties.size()) + " values, got " +
                             std::to_string(toks.size()),
                         lineno);
      }
      auto val = [&](int k) { return parse_number(toks[static_cast<std::size_t>(k)], lineno); };
      coords.push_back({val(ix), val(iy), val(iz)});
      if (has_color) {
        colors.push_back({val(ir) / cs, val(ig) / cs, val(ib) / cs});
      } else {
        colors.push_back({0.5, 0.5, 0.5});
      }
      if (il >= 0) labels->push_back(static_cast<int>(val(il)));
    }
  }
  if (!have_vertex) throw ParseError("no vertex element", lineno);
  if (coords.empty()) throw ParseError("vertex element is empty", lineno);
  return PlyPoints{PointCloud(std::move(coords), std::move(colors)), std::move(labels)};
}

PlyPoints read_ply(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open PLY: " + path.string());
  return parse_ply(in);
}

PointCloud load_pointcloud(const std::filesystem::path& path) { return read_ply(path).cloud; }

void save_pointcloud(const std::filesystem::path& path, const PointCloud& cloud) {
  write_ply(path, cloud, nullptr, false, nullptr);
}

void save_labeled_pointcloud(const std::filesystem::path& path, const PointCloud& cloud,
                             const std::vector<int>& labels) {
  if (labels.size() != cloud.size()) throw ShapeError("save_labeled_pointcloud: label count");
  write_ply(path, cloud, &labels, false, nullptr);
}

void save_mask_overlay(const std::filesystem::path& path, const PointCloud& cloud,
                       const PointMask& mask) {
  if (mask.size() != cloud.size()) throw ShapeError("save_mask_overlay: mask length");
  std::vector<int> labels(mask.begin(), mask.end());
  std::vector<Vec3> tinted = cloud.colors();
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) tinted[i] = {1.0, 0.1, 0.1};
  }
  write_ply(path, cloud, &labels, true, &tinted);
}

PointMask load_mask(const std::filesystem::path& path) {
  PlyPoints pts = read_ply(path);
  if (!pts.labels) throw ParseError("mask file has no label property: " + path.string());
  PointMask mask(pts.labels->size());
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = (*pts.labels)[i] != 0 ? 1 : 0;
  return mask;
}

}  // namespace ost3d
