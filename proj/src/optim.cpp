#include "ost3d/optim.hpp"

#include <cmath>
#include <numbers>

#include "ost3d/errors.hpp"

namespace ost3d {

AdamW::AdamW(const ParameterSet& params, std::vector<std::size_t> trainable, AdamWConfig config)
    : config_(config), trainable_(std::move(trainable)) {
  for (std::size_t i : trainable_) {
    const Matrix& p = params.value(i);
    m_.emplace_back(p.rows(), p.cols());
    v_.emplace_back(p.rows(), p.cols());
  }
}

double AdamW::step(ParameterSet& params, const std::vector<Matrix>& grads, double lr) {
  if (grads.size() != trainable_.size()) throw ShapeError("AdamW: one gradient per parameter");
  double sq = 0.0;
  for (const Matrix& g : grads)
    for (double v : g.values()) sq += v * v;
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) throw NonFiniteError("AdamW: non-finite gradient");
  const double clip = config_.grad_clip > 0.0 && norm > config_.grad_clip ? config_.grad_clip / norm : 1.0;

  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t k = 0; k < trainable_.size(); ++k) {
    Matrix& p = params.value(trainable_[k]);
    if (!grads[k].same_shape(p)) throw ShapeError("AdamW: gradient shape for " + params.name(trainable_[k]));
    auto pv = p.values();
    auto mv = m_[k].values();
    auto vv = v_[k].values();
    const auto gv = grads[k].values();
    for (std::size_t i = 0; i < pv.size(); ++i) {
      const double g = gv[i] * clip;
      mv[i] = b1 * mv[i] + (1.0 - b1) * g;
      vv[i] = b2 * vv[i] + (1.0 - b2) * g * g;
      const double mhat = mv[i] / c1, vhat = vv[i] / c2;
      pv[i] -= lr * (mhat / (std::sqrt(vhat) + config_.eps) + config_.weight_decay * pv[i]);
    }
  }
  return norm;
}

double cosine_lr(double lr0, double lr_min, std::size_t step, std::size_t total) {
  if (total == 0 || step >= total) return lr_min;
  const double f = static_cast<double>(step) / static_cast<double>(total);
  return lr_min + (lr0 - lr_min) * 0.5 * (1.0 + std::cos(std::numbers::pi * f));
}

}  // namespace ost3d
