#include "ost3d/ost.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ost3d/errors.hpp"
#include "ost3d/spatial.hpp"

namespace ost3d {

void OstConfig::validate() const {
  if (in_channels == 0 || model_dim == 0 || ffn_dim == 0 || align_dim == 0) {
    throw ConfigError("ost: widths must be positive");
  }
  if (num_blocks == 0) throw ConfigError("ost: num_blocks must be >= 1");
  if (num_heads == 0 || model_dim % num_heads != 0) {
    throw ConfigError("ost: model_dim must be divisible by num_heads");
  }
  if (num_classes == 0) throw ConfigError("ost: num_classes must be >= 1");
  if (top_k == 0) throw ConfigError("ost: top_k must be >= 1");
}

OstOutput OstOutput::from(const OstVars& v) {
  return {v.queries.value(), v.class_logits.value(), v.mask_kernels.value(), v.alignment.value(),
          v.num_superpoints};
}

AttentionLayout attention_layout(const Matrix& centroids, std::span<const BiasPolicy> policies,
                                 std::span<const Vec3> extra_centroids) {
  if (centroids.cols() != 3) throw ShapeError("attention_layout: centroids must be M x 3");
  if (policies.size() != extra_centroids.size()) {
    throw ShapeError("attention_layout: policy and centroid counts differ");
  }
  const std::size_t m = centroids.rows();
  const std::size_t total = m + policies.size();
  AttentionLayout layout{Matrix(total, total), Matrix(total, total)};
  auto c = [&](std::size_t i) -> Vec3 { return {centroids(i, 0), centroids(i, 1), centroids(i, 2)}; };
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 1; j < m; ++j) {
      const double d = distance(c(i), c(j));
      layout.distances(i, j) = d;
      layout.distances(j, i) = d;
    }
    for (std::size_t j = m; j < total; ++j) layout.mask(i, j) = kMasked;
  }
  for (std::size_t e = 0; e < policies.size(); ++e) {
    const std::size_t row = m + e;
    switch (policies[e]) {
      case BiasPolicy::Distance:
        for (std::size_t j = 0; j < m; ++j) layout.distances(row, j) = distance(extra_centroids[e], c(j));
        break;
      case BiasPolicy::Zero:
        break;
      case BiasPolicy::Unset:
        throw ProtocolError("extra query " + std::to_string(e) + " has no bias policy");
    }
    for (std::size_t j = m; j < total; ++j) layout.mask(row, j) = kMasked;
  }
  return layout;
}

namespace {

Matrix attention_logits(const Matrix& q, const Matrix& k, const Matrix& distances,
                        const Matrix& sigma, const Matrix& mask) {
  if (q.cols() != k.cols()) throw ShapeError("attention: q and k widths differ");
  Matrix logits = matmul_nt(q, k);
  logits *= 1.0 / std::sqrt(static_cast<double>(q.cols()));
  const bool has_d = !distances.empty();
  const bool has_mask = !mask.empty();
  if (has_d && (distances.rows() != q.rows() || distances.cols() != k.rows())) {
    throw ShapeError("attention: D must be queries x keys");
  }
  if (has_d && (sigma.rows() != q.rows() || sigma.cols() != 1)) {
    throw ShapeError("attention: sigma must be queries x 1");
  }
  if (has_mask && !mask.same_shape(logits)) throw ShapeError("attention: mask shape");
  for (std::size_t i = 0; i < logits.rows(); ++i)
    for (std::size_t j = 0; j < logits.cols(); ++j) {
      if (has_d) logits(i, j) -= distances(i, j) * sigma(i, 0);
      if (has_mask) logits(i, j) += mask(i, j);
    }
  return logits;
}

}  // namespace

Matrix attention_weights(const Matrix& q, const Matrix& k, const Matrix& distances,
                         const Matrix& sigma, const Matrix& mask) {
  return softmax_rows(attention_logits(q, k, distances, sigma, mask));
}

Matrix distance_adaptive_attention(const Matrix& q, const Matrix& k, const Matrix& v,
                                   const Matrix& distances, const Matrix& sigma,
                                   const Matrix& mask) {
  if (k.rows() != v.rows()) throw ShapeError("attention: k and v row counts differ");
  return matmul(attention_weights(q, k, distances, sigma, mask), v);
}

ad::Var distance_adaptive_attention(ad::Var q, ad::Var k, ad::Var v, const Matrix& distances,
                                    ad::Var sigma, const Matrix& mask) {
  ad::Tape& t = *q.tape();
  if (q.cols() != k.cols()) throw ShapeError("attention: q and k widths differ");
  ad::Var logits = ad::scale(ad::matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(q.cols())));
  if (!distances.empty()) logits = ad::sub(logits, ad::mul_col(t.constant(distances), sigma));
  if (!mask.empty()) logits = ad::add(logits, t.constant(mask));
  return ad::matmul(ad::softmax_rows(logits), v);
}

Ost::Ost(const OstConfig& config, ParameterSet& params, std::mt19937_64& rng,
         const std::string& prefix)
    : config_(config) {
  config_.validate();
  const std::size_t c = config_.model_dim;
  input_ = Linear::create(params, prefix + ".input", config_.in_channels, c, rng);
  auto norm = [&](const std::string& name) {
    return LayerNormAffine{params.add(name + ".gamma", Matrix(1, c, 1.0)),
                           params.add(name + ".beta", Matrix(1, c))};
  };
  for (std::size_t b = 0; b < config_.num_blocks; ++b) {
    const std::string n = prefix + ".block" + std::to_string(b);
    Block blk;
    blk.q = Linear::create(params, n + ".q", c, c, rng);
    blk.k = Linear::create(params, n + ".k", c, c, rng);
    blk.v = Linear::create(params, n + ".v", c, c, rng);
    blk.o = Linear::create(params, n + ".o", c, c, rng);
    blk.sigma = Linear::create(params, n + ".sigma", c, config_.num_heads, rng, 0.1);
    blk.ffn1 = Linear::create(params, n + ".ffn1", c, config_.ffn_dim, rng);
    blk.ffn2 = Linear::create(params, n + ".ffn2", config_.ffn_dim, c, rng);
    blk.norm1 = norm(n + ".norm1");
    blk.norm2 = norm(n + ".norm2");
    blocks_.push_back(blk);
  }
  class_head_ = Linear::create(params, prefix + ".class_head", c, config_.num_classes + 1, rng);
  mask_head_ = Linear::create(params, prefix + ".mask_head", c, config_.in_channels, rng);
  align_head_ = Linear::create(params, prefix + ".align_head", c, config_.align_dim, rng);
}

ad::Var Ost::block_forward(const BoundParameters& p, const Block& b, ad::Var x,
                           const AttentionLayout& layout) const {
  const std::size_t heads = config_.num_heads;
  ad::Var q = b.q(p, x), k = b.k(p, x), v = b.v(p, x);
  ad::Var sigma = ad::softplus(b.sigma(p, x));
  ad::Var attn;
  if (heads == 1) {
    attn = distance_adaptive_attention(q, k, v, layout.distances, sigma, layout.mask);
  } else {
    const std::size_t hd = config_.model_dim / heads;
    for (std::size_t h = 0; h < heads; ++h) {
      ad::Var head = distance_adaptive_attention(
          ad::slice_cols(q, h * hd, hd), ad::slice_cols(k, h * hd, hd),
          ad::slice_cols(v, h * hd, hd), layout.distances, ad::slice_cols(sigma, h, 1),
          layout.mask);
      attn = h == 0 ? head : ad::concat_cols(attn, head);
    }
  }
  auto norm = [&](ad::Var y, const LayerNormAffine& n) {
    return ad::add_row(ad::mul_row(ad::layer_norm(y), p[n.gamma]), p[n.beta]);
  };
  x = norm(ad::add(x, b.o(p, attn)), b.norm1);
  ad::Var ff = b.ffn2(p, ad::gelu(b.ffn1(p, x)));
  return norm(ad::add(x, ff), b.norm2);
}

OstVars Ost::forward(const BoundParameters& p, ad::Var superpoint_feats, const Matrix& centroids,
                     std::span<const ExtraQuery> extras) const {
  const std::size_t m = superpoint_feats.rows();
  if (superpoint_feats.cols() != config_.in_channels) {
    throw ShapeError("ost: superpoint features have width " +
                     std::to_string(superpoint_feats.cols()) + ", expected " +
                     std::to_string(config_.in_channels));
  }
  if (centroids.rows() != m) throw ShapeError("ost: centroid count differs from superpoints");
  if (m == 0) throw ShapeError("ost: no superpoints");

  std::vector<BiasPolicy> policies;
  std::vector<Vec3> extra_centroids;
  std::vector<ad::Var> rows{superpoint_feats};
  for (const ExtraQuery& e : extras) {
    if (e.feature.rows() != 1 || e.feature.cols() != config_.in_channels) {
      throw ShapeError("ost: extra query must be 1 x " + std::to_string(config_.in_channels));
    }
    policies.push_back(e.policy);
    extra_centroids.push_back(e.centroid);
    rows.push_back(e.feature);
  }
  const AttentionLayout layout = attention_layout(centroids, policies, extra_centroids);

  ad::Var x = rows.size() == 1 ? superpoint_feats : ad::concat_rows(rows);
  x = input_(p, x);
  for (const Block& b : blocks_) x = block_forward(p, b, x, layout);
  return {x, class_head_(p, x), mask_head_(p, x), align_head_(p, x), m};
}

OstOutput ost_forward(const Ost& ost, const ParameterSet& params, const Matrix& superpoint_feats,
                      const Matrix& centroids, const std::vector<ExtraSpec>& extras) {
  ad::Tape tape;
  const auto p = BoundParameters::frozen(params, tape);
  std::vector<ExtraQuery> vars;
  vars.reserve(extras.size());
  for (const ExtraSpec& e : extras) vars.push_back({tape.constant(e.feature), e.policy, e.centroid});
  return OstOutput::from(ost.forward(p, tape.constant(superpoint_feats), centroids, vars));
}

Matrix apply_mask_head(const Matrix& kernels, const Matrix& superpoint_feats_in) {
  if (kernels.cols() != superpoint_feats_in.cols()) {
    throw ShapeError("apply_mask_head: kernel width " + std::to_string(kernels.cols()) +
                     " vs feature width " + std::to_string(superpoint_feats_in.cols()));
  }
  return matmul_nt(kernels, superpoint_feats_in);
}

ad::Var apply_mask_head(ad::Var kernels, ad::Var superpoint_feats_in) {
  if (kernels.cols() != superpoint_feats_in.cols()) {
    throw ShapeError("apply_mask_head: kernel and feature widths differ");
  }
  return ad::matmul_nt(kernels, superpoint_feats_in);
}

std::vector<std::uint8_t> binarize_logits(std::span<const double> logits) {
  std::vector<std::uint8_t> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] > 0.0 ? 1 : 0;
  return out;
}

std::vector<double> objectness(const Matrix& class_logits) {
  if (class_logits.cols() < 2) throw ShapeError("objectness: need >= 1 foreground column");
  const Matrix prob = softmax_rows(class_logits);
  std::vector<double> out(prob.rows());
  for (std::size_t i = 0; i < prob.rows(); ++i) {
    const auto r = prob.row(i);
    out[i] = *std::max_element(r.begin(), r.end() - 1);
  }
  return out;
}

TopK select_topk(const OstOutput& out, std::size_t k) {
  if (k == 0) throw ConfigError("select_topk: K must be >= 1");
  const std::size_t m = out.num_superpoints;
  const std::vector<double> score = objectness(slice_rows(out.class_logits, 0, m));
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
  if (order.size() > k) order.resize(k);
  return {order, gather_rows(out.alignment, order)};
}

}  // namespace ost3d
