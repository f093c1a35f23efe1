#include "ost3d/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "ost3d/errors.hpp"

namespace ost3d::ad {

// ---- Var / Tape ---------------------------------------------------------

const Matrix& Var::value() const { return tape_->value(id_); }
const Matrix& Var::grad() const { return tape_->grad(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), Matrix(), false, nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Tape::variable(Matrix value) {
  nodes_.push_back(Node{std::move(value), Matrix(), true, nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Matrix value, std::initializer_list<Var> parents, Backward backward) {
  return record(std::move(value), std::span<const Var>(parents.begin(), parents.size()),
                std::move(backward));
}

Var Tape::record(Matrix value, std::span<const Var> parents, Backward backward) {
  bool needs = false;
  for (const Var& p : parents) {
    if (p.tape() != this) throw Error("Tape::record: operand belongs to another tape");
    needs = needs || nodes_[p.id()].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), Matrix(), needs, needs ? std::move(backward) : nullptr});
  return Var(this, nodes_.size() - 1);
}

const Matrix& Tape::grad(std::size_t id) const {
  const Node& n = nodes_[id];
  if (n.grad.empty() && !n.value.empty()) n.grad = Matrix(n.value.rows(), n.value.cols());
  return n.grad;
}

Matrix* Tape::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return nullptr;
  if (n.grad.empty()) n.grad = Matrix(n.value.rows(), n.value.cols());
  return &n.grad;
}

void Tape::accumulate(std::size_t id, const Matrix& g) {
  if (Matrix* buf = grad_buffer(id)) *buf += g;
}

void Tape::zero_grad() {
  for (Node& n : nodes_) n.grad = Matrix();
}

void Tape::backward(Var root) {
  if (root.rows() != 1 || root.cols() != 1) {
    throw ShapeError("Tape::backward: root must be a 1x1 scalar");
  }
  backward(root, Matrix(1, 1, 1.0));
}

void Tape::backward(Var root, const Matrix& seed) {
  if (root.tape() != this) throw Error("Tape::backward: root belongs to another tape");
  if (!seed.same_shape(root.value())) throw ShapeError("Tape::backward: seed shape mismatch");
  accumulate(root.id(), seed);
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || !n.backward || n.grad.empty()) continue;
    if (trace_on_) trace_.push_back(i);
    n.backward(*this, i);
  }
}

// ---- helpers --------------------------------------------------------------

namespace {

std::string shape_str(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw ShapeError(msg);
}

template <typename F>
Matrix map(const Matrix& a, F f) {
  Matrix out = a;
  for (double& v : out.values()) v = f(v);
  return out;
}

double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

// ---- elementwise ----------------------------------------------------------

Var add(Var a, Var b) {
  require(a.value().same_shape(b.value()),
          "add: " + shape_str(a.value()) + " vs " + shape_str(b.value()));
  Tape& t = *a.tape();
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(a.value() + b.value(), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    t.accumulate(ia, t.grad(self));
    t.accumulate(ib, t.grad(self));
  });
}

Var sub(Var a, Var b) {
  require(a.value().same_shape(b.value()),
          "sub: " + shape_str(a.value()) + " vs " + shape_str(b.value()));
  Tape& t = *a.tape();
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(a.value() - b.value(), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    t.accumulate(ia, t.grad(self));
    t.accumulate(ib, t.grad(self) * -1.0);
  });
}

Var mul(Var a, Var b) {
  require(a.value().same_shape(b.value()),
          "mul: " + shape_str(a.value()) + " vs " + shape_str(b.value()));
  Tape& t = *a.tape();
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(hadamard(a.value(), b.value()), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(ia)) t.accumulate(ia, hadamard(g, t.value(ib)));
    if (t.requires_grad(ib)) t.accumulate(ib, hadamard(g, t.value(ia)));
  });
}

Var scale(Var a, double s) {
  Tape& t = *a.tape();
  const std::size_t ia = a.id();
  return t.record(a.value() * s, {a},
                  [ia, s](Tape& t, std::size_t self) { t.accumulate(ia, t.grad(self) * s); });
}

Var add_row(Var a, Var row) {
  const Matrix& av = a.value();
  const Matrix& rv = row.value();
  require(rv.rows() == 1 && rv.cols() == av.cols(),
          "add_row: " + shape_str(av) + " + " + shape_str(rv));
  Matrix out = av;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto r = out.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += rv(0, j);
  }
  Tape& t = *a.tape();
  const std::size_t ia = a.id(), ir = row.id();
  return t.record(std::move(out), {a, row}, [ia, ir](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    t.accumulate(ia, g);
    if (Matrix* gr = t.grad_buffer(ir)) {
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) (*gr)(0, j) += g(i, j);
    }
  });
}

Var mul_row(Var a, Var row) {
  const Matrix& av = a.value();
  const Matrix& rv = row.value();
  require(rv.rows() == 1 && rv.cols() == av.cols(),
          "mul_row: " + shape_str(av) + " * " + shape_str(rv));
  Matrix out = av;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto r = out.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] *= rv(0, j);
  }
  Tape& t = *a.tape();
  const std::size_t ia = a.id(), ir = row.id();
  return t.record(std::move(out), {a, row}, [ia, ir](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    const Matrix& av = t.value(ia);
    const Matrix& rv = t.value(ir);
    if (Matrix* ga = t.grad_buffer(ia)) {
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) (*ga)(i, j) += g(i, j) * rv(0, j);
    }
    if (Matrix* gr = t.grad_buffer(ir)) {
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) (*gr)(0, j) += g(i, j) * av(i, j);
    }
  });
}

Var mul_col(Var a, Var col) {
  const Matrix& av = a.value();
  const Matrix& cv = col.value();
  require(cv.cols() == 1 && cv.rows() == av.rows(),
          "mul_col: " + shape_str(av) + " * " + shape_str(cv));
  Matrix out = av;
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (double& v : out.row(i)) v *= cv(i, 0);
  Tape& t = *a.tape();
  const std::size_t ia = a.id(), ic = col.id();
  return t.record(std::move(out), {a, col}, [ia, ic](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    const Matrix& av = t.value(ia);
    const Matrix& cv = t.value(ic);
    if (Matrix* ga = t.grad_buffer(ia)) {
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) (*ga)(i, j) += g(i, j) * cv(i, 0);
    }
    if (Matrix* gc = t.grad_buffer(ic)) {
      for (std::size_t i = 0; i < g.rows(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < g.cols(); ++j) s += g(i, j) * av(i, j);
        (*gc)(i, 0) += s;
      }
    }
  });
}

// ---- products -------------------------------------------------------------

Var matmul(Var a, Var b) {
  Tape& t = *a.tape();
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(ost3d::matmul(a.value(), b.value()), {a, b},
                  [ia, ib](Tape& t, std::size_t self) {
                    const Matrix& g = t.grad(self);
                    if (t.requires_grad(ia)) t.accumulate(ia, ost3d::matmul_nt(g, t.value(ib)));
                    if (t.requires_grad(ib)) t.accumulate(ib, ost3d::matmul_tn(t.value(ia), g));
                  });
}

Var matmul_nt(Var a, Var b) {
  Tape& t = *a.tape();
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(ost3d::matmul_nt(a.value(), b.value()), {a, b},
                  [ia, ib](Tape& t, std::size_t self) {
                    const Matrix& g = t.grad(self);
                    if (t.requires_grad(ia)) t.accumulate(ia, ost3d::matmul(g, t.value(ib)));
                    if (t.requires_grad(ib)) t.accumulate(ib, ost3d::matmul_tn(g, t.value(ia)));
                  });
}

Var transpose(Var a) {
  Tape& t = *a.tape();
  const std::size_t ia = a.id();
  return t.record(ost3d::transpose(a.value()), {a}, [ia](Tape& t, std::size_t self) {
    t.accumulate(ia, ost3d::transpose(t.grad(self)));
  });
}

Var linear(Var x, Var w, Var b) { return add_row(matmul(x, w), b); }

// ---- activations ----------------------------------------------------------

Var relu(Var a) {
  Tape& t = *a.tape();
  const std::size_t ia = a.id();
  return t.record(map(a.value(), [](double v) { return v > 0.0 ? v : 0.0; }), {a},
                  [ia](Tape& t, std::size_t self) {
                    Matrix g = t.grad(self);
                    const Matrix& x = t.value(ia);
                    for (std::size_t i = 0; i < g.size(); ++i)
                      if (x.values()[i] <= 0.0) g.values()[i] = 0.0;
                    t.accumulate(ia, g);
                  });
}

Var gelu(Var a) {
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  Tape& t = *a.tape();
  const std::size_t ia = a.id();
  return t.record(
      map(a.value(), [](double v) { return 0.5 * v * (1.0 + std::erf(v * inv_sqrt2)); }), {a},
      [ia](Tape& t, std::size_t self) {
        constexpr double inv_sqrt_2pi = 0.39894228040143267794;
        Matrix g = t.grad(self);
        const Matrix& x = t.value(ia);
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double v = x.values()[i];
          const double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
          const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
          g.values()[i] *= cdf + v * pdf;
        }
        t.accumulate(ia, g);
      });
}

Var softplus(Var a) {
  Tape& t = *a.tape();
  const std::size_t ia = a.id();
  return t.record(map(a.value(),
                      [](double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); }),
                  {a}, [ia](Tape& t, std::size_t self) {
                    Matrix g = t.grad(self);
                    const Matrix& x = t.value(ia);
                    for (std::size_t i = 0; i < g.size(); ++i)
                      g.values()[i] *= sigmoid_scalar(x.values()[i]);
                    t.accumulate(ia, g);
                  });
}

Var sigmoid(Var a) {
  Tape& t = *a.tape();
  const std::size_t ia = a.id();
  return t.record(map(a.value(), sigmoid_scalar), {a}, [ia](Tape& t, std::size_t self) {
    Matrix g = t.grad(self);
    const Matrix& y = t.value(self);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double s = y.values()[i];
      g.values()[i] *= s * (1.0 - s);
    }
    t.accumulate(ia, g);
  });
}

Var softmax_rows(Var a) {
  Tape& t = *a.tape();
  const std::size_t ia = a.id();
  return t.record(ost3d::softmax_rows(a.value()), {a}, [ia](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    const Matrix& y = t.value(self);
    Matrix dx(g.rows(), g.cols());
    for (std::size_t i = 0; i < g.rows(); ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < g.cols(); ++j) dot += g(i, j) * y(i, j);
      for (std::size_t j = 0; j < g.cols(); ++j) dx(i, j) = y(i, j) * (g(i, j) - dot);
    }
    t.accumulate(ia, dx);
  });
}

Var log_softmax_rows(Var a) {
  const Matrix& x = a.value();
  Matrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double mx = kMasked;
    for (double v : x.row(i)) mx = std::max(mx, v);
    if (mx == kMasked) {
      throw EmptyRowError("log_softmax_rows: row " + std::to_string(i) + " is fully masked");
    }
    double total = 0.0;
    for (double v : x.row(i)) total += v == kMasked ? 0.0 : std::exp(v - mx);
    const double lse = mx + std::log(total);
    for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) = x(i, j) - lse;
  }
  Tape& t = *a.tape();
  const std::size_t ia = a.id();
  return t.record(std::move(out), {a}, [ia](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    const Matrix& y = t.value(self);
    Matrix dx(g.rows(), g.cols());
    for (std::size_t i = 0; i < g.rows(); ++i) {
      double gs = 0.0;
      for (double v : g.row(i)) gs += v;
      for (std::size_t j = 0; j < g.cols(); ++j) dx(i, j) = g(i, j) - std::exp(y(i, j)) * gs;
    }
    t.accumulate(ia, dx);
  });
}

Var layer_norm(Var a, double eps) {
  const Matrix& x = a.value();
  const std::size_t c = x.cols();
  Matrix out(x.rows(), c);
  Matrix inv_std(x.rows(), 1);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double mu = 0.0;
    for (double v : x.row(i)) mu += v;
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (double v : x.row(i)) var += (v - mu) * (v - mu);
    var /= static_cast<double>(c);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std(i, 0) = is;
    for (std::size_t j = 0; j < c; ++j) out(i, j) = (x(i, j) - mu) * is;
  }
  Tape& t = *a.tape();
  const std::size_t ia = a.id();
  return t.record(std::move(out), {a},
                  [ia, inv_std = std::move(inv_std)](Tape& t, std::size_t self) {
                    const Matrix& g = t.grad(self);
                    const Matrix& y = t.value(self);
                    const double n = static_cast<double>(g.cols());
                    Matrix dx(g.rows(), g.cols());
                    for (std::size_t i = 0; i < g.rows(); ++i) {
                      double gm = 0.0, gy = 0.0;
                      for (std::size_t j = 0; j < g.cols(); ++j) {
                        gm += g(i, j);
                        gy += g(i, j) * y(i, j);
                      }
                      gm /= n;
                      gy /= n;
                      for (std::size_t j = 0; j < g.cols(); ++j)
                        dx(i, j) = inv_std(i, 0) * (g(i, j) - gm - y(i, j) * gy);
                    }
                    t.accumulate(ia, dx);
                  });
}

// ---- structural -----------------------------------------------------------

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no operands");
  Tape& t = *parts.front().tape();
  const std::size_t c = parts.front().cols();
  std::size_t total = 0;
  std::vector<std::size_t> ids, offsets;
  for (const Var& p : parts) {
    require(p.cols() == c, "concat_rows: column mismatch");
    ids.push_back(p.id());
    offsets.push_back(total);
    total += p.rows();
  }
  Matrix out(total, c);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Matrix& v = parts[k].value();
    std::copy(v.values().begin(), v.values().end(),
              out.values().begin() + static_cast<std::ptrdiff_t>(offsets[k] * c));
  }
  return t.record(std::move(out), parts, [ids, offsets](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!t.requires_grad(ids[k])) continue;
      t.accumulate(ids[k], ost3d::slice_rows(g, offsets[k], t.value(ids[k]).rows()));
    }
  });
}

Var concat_rows(Var top, Var bottom) {
  const Var parts[] = {top, bottom};
  return concat_rows(std::span<const Var>(parts));
}

Var concat_cols(Var left, Var right) {
  const Matrix& l = left.value();
  const Matrix& r = right.value();
  require(l.rows() == r.rows(), "concat_cols: row mismatch");
  Matrix out(l.rows(), l.cols() + r.cols());
  for (std::size_t i = 0; i < l.rows(); ++i) {
    std::copy(l.row(i).begin(), l.row(i).end(), out.row(i).begin());
    std::copy(r.row(i).begin(), r.row(i).end(),
              out.row(i).begin() + static_cast<std::ptrdiff_t>(l.cols()));
  }
  Tape& t = *left.tape();
  const std::size_t il = left.id(), ir = right.id(), lc = l.cols();
  return t.record(std::move(out), {left, right}, [il, ir, lc](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    if (Matrix* gl = t.grad_buffer(il)) {
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < lc; ++j) (*gl)(i, j) += g(i, j);
    }
    if (Matrix* gr = t.grad_buffer(ir)) {
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = lc; j < g.cols(); ++j) (*gr)(i, j - lc) += g(i, j);
    }
  });
}

Var slice_rows(Var a, std::size_t begin, std::size_t count) {
  Tape& t = *a.tape();
  const std::size_t ia = a.id();
  return t.record(ost3d::slice_rows(a.value(), begin, count), {a},
                  [ia, begin](Tape& t, std::size_t self) {
                    Matrix* ga = t.grad_buffer(ia);
                    const Matrix& g = t.grad(self);
                    for (std::size_t i = 0; i < g.rows(); ++i)
                      for (std::size_t j = 0; j < g.cols(); ++j) (*ga)(begin + i, j) += g(i, j);
                  });
}

Var slice_cols(Var a, std::size_t begin, std::size_t count) {
  const Matrix& av = a.value();
  require(begin + count <= av.cols(), "slice_cols: range out of bounds");
  Matrix out(av.rows(), count);
  for (std::size_t i = 0; i < av.rows(); ++i)
    for (std::size_t j = 0; j < count; ++j) out(i, j) = av(i, begin + j);
  Tape& t = *a.tape();
  const std::size_t ia = a.id();
  return t.record(std::move(out), {a}, [ia, begin](Tape& t, std::size_t self) {
    Matrix* ga = t.grad_buffer(ia);
    const Matrix& g = t.grad(self);
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t j = 0; j < g.cols(); ++j) (*ga)(i, begin + j) += g(i, j);
  });
}

Var gather_rows(Var a, std::vector<std::size_t> indices) {
  Tape& t = *a.tape();
  const std::size_t ia = a.id();
  Matrix out = ost3d::gather_rows(a.value(), indices);
  return t.record(std::move(out), {a},
                  [ia, indices = std::move(indices)](Tape& t, std::size_t self) {
                    Matrix* ga = t.grad_buffer(ia);
                    const Matrix& g = t.grad(self);
                    for (std::size_t i = 0; i < indices.size(); ++i) {
                      auto dst = ga->row(indices[i]);
                      auto src = g.row(i);
                      for (std::size_t j = 0; j < src.size(); ++j) dst[j] += src[j];
                    }
                  });
}

Var segment_mean(Var a, std::vector<std::size_t> segment, std::size_t num_segments) {
  const Matrix& av = a.value();
  require(segment.size() == av.rows(), "segment_mean: " + std::to_string(segment.size()) +
                                           " segment ids for " + std::to_string(av.rows()) +
                                           " rows");
  std::vector<double> counts(num_segments, 0.0);
  Matrix out(num_segments, av.cols());
  for (std::size_t i = 0; i < av.rows(); ++i) {
    const std::size_t s = segment[i];
    if (s >= num_segments) throw ShapeError("segment_mean: segment id out of range");
    counts[s] += 1.0;
    auto dst = out.row(s);
    auto src = av.row(i);
    for (std::size_t j = 0; j < src.size(); ++j) dst[j] += src[j];
  }
  for (std::size_t s = 0; s < num_segments; ++s)
    if (counts[s] > 0.0)
      for (double& v : out.row(s)) v /= counts[s];
  Tape& t = *a.tape();
  const std::size_t ia = a.id();
  return t.record(std::move(out), {a},
                  [ia, segment = std::move(segment), counts = std::move(counts)](
                      Tape& t, std::size_t self) {
                    Matrix* ga = t.grad_buffer(ia);
                    const Matrix& g = t.grad(self);
                    for (std::size_t i = 0; i < segment.size(); ++i) {
                      const std::size_t s = segment[i];
                      auto dst = ga->row(i);
                      auto src = g.row(s);
                      for (std::size_t j = 0; j < src.size(); ++j) dst[j] += src[j] / counts[s];
                    }
                  });
}

// ---- reductions -----------------------------------------------------------

Var sum(Var a) {
  Tape& t = *a.tape();
  const std::size_t ia = a.id();
  return t.record(Matrix(1, 1, ost3d::sum(a.value())), {a}, [ia](Tape& t, std::size_t self) {
    const double g = t.grad(self)(0, 0);
    Matrix* ga = t.grad_buffer(ia);
    for (double& v : ga->values()) v += g;
  });
}

Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  return scale(sum(a), 1.0 / n);
}

Var row_sum(Var a) {
  const Matrix& av = a.value();
  Matrix out(av.rows(), 1);
  for (std::size_t i = 0; i < av.rows(); ++i)
    for (double v : av.row(i)) out(i, 0) += v;
  Tape& t = *a.tape();
  const std::size_t ia = a.id();
  return t.record(std::move(out), {a}, [ia](Tape& t, std::size_t self) {
    Matrix* ga = t.grad_buffer(ia);
    const Matrix& g = t.grad(self);
    for (std::size_t i = 0; i < ga->rows(); ++i)
      for (double& v : ga->row(i)) v += g(i, 0);
  });
}

Var col_mean(Var a) {
  const Matrix& av = a.value();
  const double n = static_cast<double>(av.rows());
  Matrix out(1, av.cols());
  for (std::size_t i = 0; i < av.rows(); ++i)
    for (std::size_t j = 0; j < av.cols(); ++j) out(0, j) += av(i, j);
  for (double& v : out.values()) v /= n;
  Tape& t = *a.tape();
  const std::size_t ia = a.id();
  return t.record(std::move(out), {a}, [ia, n](Tape& t, std::size_t self) {
    Matrix* ga = t.grad_buffer(ia);
    const Matrix& g = t.grad(self);
    for (std::size_t i = 0; i < ga->rows(); ++i)
      for (std::size_t j = 0; j < ga->cols(); ++j) (*ga)(i, j) += g(0, j) / n;
  });
}

// ---- grad check -----------------------------------------------------------

GradCheckReport grad_check(const GradFn& fn, const std::vector<Matrix>& inputs, double h,
                           double tol, double abs_floor) {
  GradCheckReport report;
  auto evaluate = [&](const std::vector<Matrix>& xs) {
    Tape tape;
    std::vector<Var> vars;
    for (const Matrix& x : xs) vars.push_back(tape.constant(x));
    Var out = fn(tape, vars);
    return ost3d::sum(out.value());
  };

  Tape tape;
  std::vector<Var> vars;
  for (const Matrix& x : inputs) vars.push_back(tape.variable(x));
  Var out = fn(tape, vars);
  if (!out.value().all_finite()) {
    report.diagnostic = "non-finite forward output";
    return report;
  }
  Var total = out.rows() == 1 && out.cols() == 1 ? out : sum(out);
  tape.backward(total);

  const double floor_scale = abs_floor / tol;
  std::vector<Matrix> xs = inputs;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Matrix& analytic = vars[k].grad();
    for (std::size_t e = 0; e < inputs[k].size(); ++e) {
      const double orig = xs[k].values()[e];
      xs[k].values()[e] = orig + h;
      const double fp = evaluate(xs);
      xs[k].values()[e] = orig - h;
      const double fm = evaluate(xs);
      xs[k].values()[e] = orig;
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic.values()[e];
      if (!std::isfinite(numeric) || !std::isfinite(a)) {
        report.diagnostic = "non-finite gradient at input " + std::to_string(k) + " entry " +
                            std::to_string(e);
        report.passed = false;
        return report;
      }
      const double abs_err = std::abs(a - numeric);
      const double rel = abs_err / std::max({std::abs(a), std::abs(numeric), floor_scale});
      report.max_abs_error = std::max(report.max_abs_error, abs_err);
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_input = k;
        report.worst_entry = e;
      }
    }
  }
  report.passed = report.max_rel_error <= tol;
  return report;
}

}  // namespace ost3d::ad
