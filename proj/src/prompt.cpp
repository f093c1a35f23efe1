#include "ost3d/prompt.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <utility>

#include "json.hpp"
#include "ost3d/errors.hpp"
#include "ost3d/spatial.hpp"

namespace ost3d {

namespace {

using nlohmann::json;

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

Vec3 read_vec3(const json& j, const char* key) {
  if (!j.contains(key)) throw ParseError(std::string("prompt: missing '") + key + "'");
  const json& v = j.at(key);
  if (!v.is_array() || v.size() != 3) {
    throw ParseError(std::string("prompt: '") + key + "' must be a 3-element array");
  }
  Vec3 out{};
  for (std::size_t k = 0; k < 3; ++k) {
    if (!v[k].is_number()) throw ParseError(std::string("prompt: '") + key + "' must be numeric");
    out[k] = v[k].get<double>();
  }
  return out;
}

void check_features(std::span<const Vec3> coords, const Matrix& features) {
  if (coords.empty()) throw ShapeError("prompt sampling: empty point set");
  if (features.rows() != coords.size()) {
    throw ShapeError("prompt sampling: " + std::to_string(features.rows()) + " feature rows for " +
                     std::to_string(coords.size()) + " points");
  }
}

}  // namespace

Prompt parse_prompt(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("prompt: ") + e.what());
  }
  if (!j.is_object() || !j.contains("type") || !j["type"].is_string()) {
    throw ParseError("prompt: expected an object with a string 'type'");
  }
  const std::string type = j["type"].get<std::string>();
  Prompt p;
  if (type == "click") {
    p = ClickPrompt{read_vec3(j, "xyz")};
  } else if (type == "box") {
    p = BoxPrompt{read_vec3(j, "min"), read_vec3(j, "max")};
  } else if (type == "mask") {
    if (!j.contains("indices") || !j["indices"].is_array()) {
      throw ParseError("prompt: mask needs an 'indices' array");
    }
    MaskPrompt m;
    for (const json& v : j["indices"]) {
      if (!v.is_number_unsigned()) throw ParseError("prompt: mask indices must be non-negative integers");
      m.indices.push_back(v.get<std::size_t>());
    }
    p = std::move(m);
  } else {
    throw ParseError("prompt: unknown type '" + type + "'");
  }
  validate_prompt(p);
  return p;
}

std::string prompt_to_json(const Prompt& prompt) {
  json j = std::visit(Overloaded{
                          [](const ClickPrompt& c) { return json{{"type", "click"}, {"xyz", c.xyz}}; },
                          [](const BoxPrompt& b) {
                            return json{{"type", "box"}, {"min", b.min}, {"max", b.max}};
                          },
                          [](const MaskPrompt& m) {
                            return json{{"type", "mask"}, {"indices", m.indices}};
                          },
                      },
                      prompt);
  return j.dump();
}

void validate_prompt(const Prompt& prompt) {
  if (const auto* b = std::get_if<BoxPrompt>(&prompt)) {
    for (int k = 0; k < 3; ++k)
      if (!(b->min[k] <= b->max[k])) throw ConfigError("box prompt: min must be <= max on every axis");
  } else if (const auto* m = std::get_if<MaskPrompt>(&prompt)) {
    if (m->indices.empty()) throw ConfigError("mask prompt: no indices");
  }
}

Matrix sample_click(const ClickPrompt& click, std::span<const Vec3> coords, const Matrix& features) {
  check_features(coords, features);
  // Best three by (distance, index).
  std::array<std::pair<double, std::size_t>, 3> best;
  best.fill({std::numeric_limits<double>::infinity(), 0});
  std::size_t found = 0;
  for (std::size_t i = 0; i < coords.size(); ++i) {
    std::pair<double, std::size_t> cand{distance(click.xyz, coords[i]), i};
    if (found < 3) ++found;
    if (cand < best[2]) {
      best[2] = cand;
      for (std::size_t s = 2; s > 0 && best[s] < best[s - 1]; --s) std::swap(best[s], best[s - 1]);
    }
  }
  if (best[0].first < kClickEpsilon) return slice_rows(features, best[0].second, 1);
  Matrix out(1, features.cols());
  double total = 0.0;
  for (std::size_t s = 0; s < found; ++s) total += 1.0 / (best[s].first + kClickEpsilon);
  for (std::size_t s = 0; s < found; ++s) {
    const double w = (1.0 / (best[s].first + kClickEpsilon)) / total;
    const auto row = features.row(best[s].second);
    for (std::size_t c = 0; c < out.cols(); ++c) out(0, c) += w * row[c];
  }
  return out;
}

std::vector<std::size_t> region_members(const Prompt& prompt, std::span<const Vec3> coords) {
  validate_prompt(prompt);
  std::vector<std::size_t> members;
  if (const auto* b = std::get_if<BoxPrompt>(&prompt)) {
    for (std::size_t i = 0; i < coords.size(); ++i) {
      const Vec3& p = coords[i];
      bool inside = true;
      for (int k = 0; k < 3; ++k) inside = inside && p[k] >= b->min[k] && p[k] <= b->max[k];
      if (inside) members.push_back(i);
    }
  } else if (const auto* m = std::get_if<MaskPrompt>(&prompt)) {
    members = m->indices;
    std::sort(members.begin(), members.end());
    members.erase(std::unique(members.begin(), members.end()), members.end());
    if (!members.empty() && members.back() >= coords.size()) {
      throw ShapeError("mask prompt: index " + std::to_string(members.back()) + " out of range");
    }
  } else {
    throw ConfigError("region_members: click prompts have no region");
  }
  return members;
}

Matrix sample_region(const Prompt& prompt, std::span<const Vec3> coords, const Matrix& features) {
  check_features(coords, features);
  const std::vector<std::size_t> members = region_members(prompt, coords);
  if (members.empty()) throw EmptyPromptError("prompt region contains no points");
  Matrix out(1, features.cols());
  for (std::size_t i : members) {
    const auto row = features.row(i);
    for (std::size_t c = 0; c < out.cols(); ++c) out(0, c) += row[c];
  }
  out *= 1.0 / static_cast<double>(members.size());
  return out;
}

Matrix sample_prompt(const Prompt& prompt, std::span<const Vec3> coords, const Matrix& features) {
  if (const auto* c = std::get_if<ClickPrompt>(&prompt)) return sample_click(*c, coords, features);
  return sample_region(prompt, coords, features);
}

Vec3 prompt_centroid(const Prompt& prompt, std::span<const Vec3> coords) {
  if (const auto* c = std::get_if<ClickPrompt>(&prompt)) return c->xyz;
  const std::vector<std::size_t> members = region_members(prompt, coords);
  if (members.empty()) throw EmptyPromptError("prompt region contains no points");
  Vec3 sum{0, 0, 0};
  for (std::size_t i : members)
    for (int k = 0; k < 3; ++k) sum[k] += coords[i][k];
  for (double& v : sum) v /= static_cast<double>(members.size());
  return sum;
}

PromptQuery make_prompt_query(const Prompt& prompt, std::span<const Vec3> coords,
                              const Matrix& point_features) {
  return {sample_prompt(prompt, coords, point_features), prompt_centroid(prompt, coords)};
}

Matrix encode_prompt(const Ost& ost, const ParameterSet& params, const Matrix& superpoint_feats,
                     const Matrix& centroids, const Matrix& prompt_feature,
                     const Vec3& prompt_centroid) {
  const PromptQuery q{prompt_feature, prompt_centroid};
  return encode_prompts(ost, params, superpoint_feats, centroids, std::span(&q, 1));
}

Matrix encode_prompts(const Ost& ost, const ParameterSet& params, const Matrix& superpoint_feats,
                      const Matrix& centroids, std::span<const PromptQuery> prompts) {
  std::vector<ExtraSpec> extras;
  extras.reserve(prompts.size());
  for (const PromptQuery& q : prompts) extras.push_back({q.feature, BiasPolicy::Distance, q.centroid});
  const OstOutput out = ost_forward(ost, params, superpoint_feats, centroids, extras);
  return slice_rows(out.alignment, out.num_superpoints, prompts.size());
}

Matrix prompt_coordinates(const Prompt& prompt, std::span<const Vec3> coords) {
  Vec3 lo{}, hi{};
  if (const auto* c = std::get_if<ClickPrompt>(&prompt)) {
    lo = hi = c->xyz;
  } else if (const auto* b = std::get_if<BoxPrompt>(&prompt)) {
    validate_prompt(prompt);
    lo = b->min;
    hi = b->max;
  } else {
    const std::vector<std::size_t> members = region_members(prompt, coords);
    lo = hi = coords[members.front()];
    for (std::size_t i : members)
      for (int k = 0; k < 3; ++k) {
        lo[k] = std::min(lo[k], coords[i][k]);
        hi[k] = std::max(hi[k], coords[i][k]);
      }
  }
  return Matrix(1, 6, {lo[0], lo[1], lo[2], hi[0], hi[1], hi[2]});
}

CoordProjector CoordProjector::create(ParameterSet& params, const std::string& name,
                                      std::size_t hidden, std::size_t out, std::mt19937_64& rng) {
  return {Linear::create(params, name + ".l1", 6, hidden, rng),
          Linear::create(params, name + ".l2", hidden, out, rng)};
}

ad::Var CoordProjector::operator()(const BoundParameters& p, ad::Var coords6) const {
  return l2(p, ad::gelu(l1(p, coords6)));
}

Matrix encode_prompt_coordproj(const Prompt& prompt, std::span<const Vec3> coords,
                               const CoordProjector& mlp, const ParameterSet& params) {
  ad::Tape tape;
  const auto p = BoundParameters::frozen(params, tape);
  return mlp(p, tape.constant(prompt_coordinates(prompt, coords))).value();
}

Matrix encode_prompt_poolonly(const Prompt& prompt, std::span<const Vec3> coords,
                              const Matrix& point_features) {
  return sample_prompt(prompt, coords, point_features);
}

}  // namespace ost3d
