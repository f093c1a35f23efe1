#pragma once

#include <cstddef>
#include <vector>

#include "ost3d/matrix.hpp"
#include "ost3d/parameters.hpp"

namespace ost3d {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  // Global gradient-norm clip; 0 disables.
  double grad_clip = 1.0;
};

// Decoupled weight decay Adam over a subset of a ParameterSet.
class AdamW {
 public:
  AdamW(const ParameterSet& params, std::vector<std::size_t> trainable, AdamWConfig config = {});

  // grads[i] belongs to trainable()[i]. Returns the gradient norm before clipping.
  double step(ParameterSet& params, const std::vector<Matrix>& grads, double lr);

  const std::vector<std::size_t>& trainable() const noexcept { return trainable_; }
  std::size_t steps() const noexcept { return t_; }

 private:
  AdamWConfig config_;
  std::vector<std::size_t> trainable_;
  std::vector<Matrix> m_, v_;
  std::size_t t_ = 0;
};

// lr_min + (lr0 - lr_min) * (1 + cos(pi * step / total)) / 2, held at lr_min past the end.
double cosine_lr(double lr0, double lr_min, std::size_t step, std::size_t total);

}  // namespace ost3d
