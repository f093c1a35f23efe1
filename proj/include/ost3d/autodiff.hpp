#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "ost3d/matrix.hpp"

namespace ost3d::ad {

class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  const Matrix& grad() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  bool requires_grad() const;
  std::size_t id() const noexcept { return id_; }
  Tape* tape() const noexcept { return tape_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Reverse-mode tape. Nodes are appended in execution order; backward walks
// them in exact reverse order and accumulates gradients additively.
// Single-threaded: one training step owns one tape.
class Tape {
 public:
  // Called with the tape and the id of the node whose gradient is complete.
  using Backward = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var variable(Matrix value);
  // Records an op result. The backward closure is dropped when no parent requires grad.
  Var record(Matrix value, std::initializer_list<Var> parents, Backward backward);
  Var record(Matrix value, std::span<const Var> parents, Backward backward);

  // Seeds d(root)/d(root) = 1; root must be 1x1.
  void backward(Var root);
  void backward(Var root, const Matrix& seed);
  void zero_grad();

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  // Zero matrix of the right shape when nothing has been accumulated.
  const Matrix& grad(std::size_t id) const;
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  void accumulate(std::size_t id, const Matrix& g);
  // Mutable gradient buffer for in-place accumulation; nullptr when id needs no grad.
  Matrix* grad_buffer(std::size_t id);

  std::size_t size() const noexcept { return nodes_.size(); }

  // Records the ids visited by the next backward passes, for inspection.
  void set_trace(bool on) { trace_on_ = on; trace_.clear(); }
  const std::vector<std::size_t>& trace() const noexcept { return trace_; }

 private:
  struct Node {
    Matrix value;
    mutable Matrix grad;
    bool requires_grad = false;
    Backward backward;
  };

  std::vector<Node> nodes_;
  bool trace_on_ = false;
  std::vector<std::size_t> trace_;
};

// ---- Differentiable ops -------------------------------------------------

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
// a + row, row is 1 x a.cols
Var add_row(Var a, Var row);
// column-wise scaling: out(i,j) = a(i,j) * row(0,j)
Var mul_row(Var a, Var row);
// row-wise scaling: out(i,j) = a(i,j) * col(i,0)
Var mul_col(Var a, Var col);
Var matmul(Var a, Var b);
// a * b^T
Var matmul_nt(Var a, Var b);
Var transpose(Var a);
// x * w + b, w is in x out, b is 1 x out
Var linear(Var x, Var w, Var b);

Var relu(Var a);
Var gelu(Var a);
Var softplus(Var a);
Var sigmoid(Var a);
Var softmax_rows(Var a);
Var log_softmax_rows(Var a);
// Row-wise normalization to zero mean, unit variance (no affine).
Var layer_norm(Var a, double eps = 1e-5);

Var concat_rows(std::span<const Var> parts);
Var concat_rows(Var top, Var bottom);
Var concat_cols(Var left, Var right);
Var slice_rows(Var a, std::size_t begin, std::size_t count);
Var slice_cols(Var a, std::size_t begin, std::size_t count);
Var gather_rows(Var a, std::vector<std::size_t> indices);
// Row j of the result is the mean of rows i with segment[i] == j.
Var segment_mean(Var a, std::vector<std::size_t> segment, std::size_t num_segments);

Var sum(Var a);
Var mean(Var a);
// r x 1 column of row sums
Var row_sum(Var a);
// 1 x c row of column means
Var col_mean(Var a);

// ---- Gradient verification ----------------------------------------------

struct GradCheckReport {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_entry = 0;
  bool passed = false;
  std::string diagnostic;
};

using GradFn = std::function<Var(Tape&, std::span<const Var>)>;

// Compares analytic gradients of sum(fn(inputs)) against central differences.
// An entry passes when |analytic - numeric| <= max(tol * max(|a|,|n|), abs_floor);
// max_rel_error is normalized so that passing means max_rel_error <= tol.
GradCheckReport grad_check(const GradFn& fn, const std::vector<Matrix>& inputs, double h = 1e-5,
                           double tol = 1e-4, double abs_floor = 1e-6);

}  // namespace ost3d::ad
