#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ost3d/autodiff.hpp"
#include "ost3d/matrix.hpp"
#include "ost3d/parameters.hpp"
#include "ost3d/scene.hpp"

namespace ost3d {

struct OstConfig {
  std::size_t in_channels = 64;  // superpoint feature width, also the mask-kernel width
  std::size_t model_dim = 64;
  std::size_t num_blocks = 3;
  std::size_t num_heads = 1;
  std::size_t ffn_dim = 128;
  std::size_t num_classes = 4;  // foreground categories; logits get one extra no-object column
  std::size_t align_dim = 16;
  std::size_t top_k = 100;

  void validate() const;
};

// How an appended query fills its row of the distance bias.
enum class BiasPolicy { Unset, Distance, Zero };

// Extra query appended after the superpoints. Distance uses the Euclidean
// distance from `centroid` to every superpoint centroid; Zero leaves the row at 0.
struct ExtraQuery {
  ad::Var feature;  // 1 x in_channels
  BiasPolicy policy = BiasPolicy::Unset;
  Vec3 centroid{0, 0, 0};
};

struct ExtraSpec {
  Matrix feature;
  BiasPolicy policy = BiasPolicy::Unset;
  Vec3 centroid{0, 0, 0};
};

// Rows 0..M-1 are superpoints, the rest are extras in order.
struct OstVars {
  ad::Var queries;
  ad::Var class_logits;
  ad::Var mask_kernels;
  ad::Var alignment;
  std::size_t num_superpoints = 0;
};

struct OstOutput {
  Matrix queries;
  Matrix class_logits;  // rows x (num_classes + 1), last column = no-object
  Matrix mask_kernels;  // rows x in_channels
  Matrix alignment;     // rows x align_dim
  std::size_t num_superpoints = 0;

  static OstOutput from(const OstVars& v);
  std::size_t num_extras() const noexcept { return class_logits.rows() - num_superpoints; }
};

// Distance bias D and additive mask for M superpoints plus extras.
// Superpoints cannot see extras; extras see superpoints only.
struct AttentionLayout {
  Matrix distances;
  Matrix mask;  // entries 0 or kMasked
};

AttentionLayout attention_layout(const Matrix& centroids, std::span<const BiasPolicy> policies,
                                 std::span<const Vec3> extra_centroids);

// softmax(q k^T / sqrt(C) - sigma_i * D_ij + mask_ij), C = q.cols().
Matrix attention_weights(const Matrix& q, const Matrix& k, const Matrix& distances,
                         const Matrix& sigma, const Matrix& mask);
Matrix distance_adaptive_attention(const Matrix& q, const Matrix& k, const Matrix& v,
                                   const Matrix& distances, const Matrix& sigma,
                                   const Matrix& mask);
ad::Var distance_adaptive_attention(ad::Var q, ad::Var k, ad::Var v, const Matrix& distances,
                                    ad::Var sigma, const Matrix& mask);

// Omni Superpoint Transformer: self-attention blocks with a per-query distance
// penalty, post-norm residuals, and class / mask-kernel / alignment heads.
class Ost {
 public:
  Ost() = default;
  Ost(const OstConfig& config, ParameterSet& params, std::mt19937_64& rng,
      const std::string& prefix = "ost");

  const OstConfig& config() const noexcept { return config_; }

  OstVars forward(const BoundParameters& p, ad::Var superpoint_feats, const Matrix& centroids,
                  std::span<const ExtraQuery> extras = {}) const;

 private:
  struct LayerNormAffine {
    std::size_t gamma = 0, beta = 0;
  };
  struct Block {
    Linear q, k, v, o, sigma, ffn1, ffn2;
    LayerNormAffine norm1, norm2;
  };

  ad::Var block_forward(const BoundParameters& p, const Block& b, ad::Var x,
                        const AttentionLayout& layout) const;

  OstConfig config_;
  Linear input_;
  std::vector<Block> blocks_;
  Linear class_head_, mask_head_, align_head_;
};

// Tape-free forward for inference.
OstOutput ost_forward(const Ost& ost, const ParameterSet& params, const Matrix& superpoint_feats,
                      const Matrix& centroids, const std::vector<ExtraSpec>& extras = {});

// mask_logits[q, s] = kernels_q . feats_s
Matrix apply_mask_head(const Matrix& kernels, const Matrix& superpoint_feats_in);
ad::Var apply_mask_head(ad::Var kernels, ad::Var superpoint_feats_in);
// Strict sigmoid(logit) > 0.5, i.e. logit > 0.
std::vector<std::uint8_t> binarize_logits(std::span<const double> logits);

// Max foreground softmax probability per row.
std::vector<double> objectness(const Matrix& class_logits);

struct TopK {
  std::vector<std::size_t> indices;  // by descending objectness, ties to the lower index
  Matrix features;                   // alignment rows of the selected queries
};

// Considers superpoint rows only; returns all of them when fewer than K exist.
TopK select_topk(const OstOutput& out, std::size_t k);

}  // namespace ost3d
