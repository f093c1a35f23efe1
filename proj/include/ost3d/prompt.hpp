#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "ost3d/autodiff.hpp"
#include "ost3d/matrix.hpp"
#include "ost3d/ost.hpp"
#include "ost3d/parameters.hpp"
#include "ost3d/scene.hpp"

namespace ost3d {

struct ClickPrompt {
  Vec3 xyz{0, 0, 0};
};

// Closed interval on every axis.
struct BoxPrompt {
  Vec3 min{0, 0, 0};
  Vec3 max{0, 0, 0};
};

struct MaskPrompt {
  std::vector<std::size_t> indices;
};

using Prompt = std::variant<ClickPrompt, BoxPrompt, MaskPrompt>;

// {"type":"click","xyz":[x,y,z]} | {"type":"box","min":[..],"max":[..]} | {"type":"mask","indices":[..]}
Prompt parse_prompt(std::string_view json_text);
std::string prompt_to_json(const Prompt& prompt);
// Throws ConfigError on an inverted box or an empty mask.
void validate_prompt(const Prompt& prompt);

inline constexpr double kClickEpsilon = 1e-8;

// Inverse-distance weighted 3-NN interpolation (fewer neighbors when N < 3).
// A click within kClickEpsilon of a point returns that point's feature.
Matrix sample_click(const ClickPrompt& click, std::span<const Vec3> coords, const Matrix& features);

// Points inside the box, or the mask indices after range checking. Ascending.
std::vector<std::size_t> region_members(const Prompt& prompt, std::span<const Vec3> coords);
// Mean of member features; EmptyPromptError when no point falls inside.
Matrix sample_region(const Prompt& prompt, std::span<const Vec3> coords, const Matrix& features);

// Click: 3-NN; box and mask: average pooling.
Matrix sample_prompt(const Prompt& prompt, std::span<const Vec3> coords, const Matrix& features);
// Click point, or the mean of the member coordinates for box and mask.
Vec3 prompt_centroid(const Prompt& prompt, std::span<const Vec3> coords);

struct PromptQuery {
  Matrix feature;  // 1 x C_in
  Vec3 centroid{0, 0, 0};
};

PromptQuery make_prompt_query(const Prompt& prompt, std::span<const Vec3> coords,
                              const Matrix& point_features);

// Appends the prompt to the frozen OST with a distance-bias row and returns the
// alignment row (Z_P) of the prompt query.
Matrix encode_prompt(const Ost& ost, const ParameterSet& params, const Matrix& superpoint_feats,
                     const Matrix& centroids, const Matrix& prompt_feature,
                     const Vec3& prompt_centroid);
// Several prompts in one pass; row i belongs to prompts[i].
Matrix encode_prompts(const Ost& ost, const ParameterSet& params, const Matrix& superpoint_feats,
                      const Matrix& centroids, std::span<const PromptQuery> prompts);

// Coordinate-projection paradigm: [min xyz, max xyz] through an MLP. A click is
// a degenerate box; a mask uses the bounds of its points.
Matrix prompt_coordinates(const Prompt& prompt, std::span<const Vec3> coords);

struct CoordProjector {
  Linear l1, l2;

  static CoordProjector create(ParameterSet& params, const std::string& name, std::size_t hidden,
                               std::size_t out, std::mt19937_64& rng);
  ad::Var operator()(const BoundParameters& p, ad::Var coords6) const;
};

Matrix encode_prompt_coordproj(const Prompt& prompt, std::span<const Vec3> coords,
                               const CoordProjector& mlp, const ParameterSet& params);
// Pooling paradigm: sampled feature through the identity projection, no OST pass.
Matrix encode_prompt_poolonly(const Prompt& prompt, std::span<const Vec3> coords,
                              const Matrix& point_features);

}  // namespace ost3d
