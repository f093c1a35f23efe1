#include "ost3d/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ost3d/errors.hpp"

namespace ost3d {

namespace {

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }
double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Rows <= cols. Potentials method; returns the column of each row.
std::vector<std::size_t> solve_assignment(const Matrix& a) {
  const std::size_t n = a.rows(), m = a.cols();
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<char> used(m + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = a(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> col(n);
  for (std::size_t j = 1; j <= m; ++j)
    if (p[j] != 0) col[p[j] - 1] = j - 1;
  return col;
}

}  // namespace

std::vector<std::pair<std::size_t, std::size_t>> hungarian(const Matrix& cost) {
  if (!cost.all_finite()) throw NonFiniteError("hungarian: cost matrix has non-finite entries");
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  if (cost.rows() == 0 || cost.cols() == 0) return pairs;
  if (cost.rows() <= cost.cols()) {
    const auto col = solve_assignment(cost);
    for (std::size_t r = 0; r < col.size(); ++r) pairs.emplace_back(r, col[r]);
  } else {
    const auto row = solve_assignment(transpose(cost));
    for (std::size_t c = 0; c < row.size(); ++c) pairs.emplace_back(row[c], c);
    std::sort(pairs.begin(), pairs.end());
  }
  return pairs;
}

GtInstances superpoint_targets(std::span<const int> instance_labels,
                               std::span<const int> semantic_labels,
                               const SuperpointPartition& part) {
  if (instance_labels.size() != part.num_points() || semantic_labels.size() != part.num_points()) {
    throw ShapeError("superpoint_targets: label count differs from the partition");
  }
  int max_id = -1;
  for (int id : instance_labels) max_id = std::max(max_id, id);
  const std::size_t g = static_cast<std::size_t>(max_id + 1);
  GtInstances gt;
  gt.categories.assign(g, -1);
  Matrix counts(g, part.size());
  for (std::size_t i = 0; i < instance_labels.size(); ++i) {
    const int id = instance_labels[i];
    if (id < 0) continue;
    gt.categories[static_cast<std::size_t>(id)] = semantic_labels[i];
    counts(static_cast<std::size_t>(id), part.assignment[i]) += 1.0;
  }
  gt.masks = Matrix(g, part.size());
  for (std::size_t k = 0; k < g; ++k)
    for (std::size_t s = 0; s < part.size(); ++s)
      gt.masks(k, s) = 2.0 * counts(k, s) > static_cast<double>(part.sizes[s]) ? 1.0 : 0.0;
  return gt;
}

std::vector<int> MatchResult::query_targets(std::size_t num_queries, int no_object,
                                            std::span<const int> categories) const {
  std::vector<int> t(num_queries, no_object);
  for (const auto& [q, g] : pairs) t.at(q) = categories[g];
  return t;
}

double bce_with_logits(std::span<const double> logits, std::span<const double> target) {
  if (logits.size() != target.size() || logits.empty()) throw ShapeError("bce: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) s += softplus(logits[i]) - logits[i] * target[i];
  return s / static_cast<double>(logits.size());
}

double dice_loss(std::span<const double> logits, std::span<const double> target, double smooth) {
  if (logits.size() != target.size()) throw ShapeError("dice: size mismatch");
  double inter = 0.0, total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double p = sigmoid(logits[i]);
    inter += p * target[i];
    total += p + target[i];
  }
  return 1.0 - (2.0 * inter + smooth) / (total + smooth);
}

Matrix matching_cost(const Matrix& class_logits, const Matrix& mask_logits, const GtInstances& gt,
                     const MatchCosts& w) {
  const std::size_t q = class_logits.rows();
  if (mask_logits.rows() != q) throw ShapeError("matching_cost: logits row counts differ");
  if (gt.size() && gt.masks.cols() != mask_logits.cols()) {
    throw ShapeError("matching_cost: mask widths differ");
  }
  const Matrix prob = softmax_rows(class_logits);
  Matrix cost(q, gt.size());
  for (std::size_t i = 0; i < q; ++i)
    for (std::size_t g = 0; g < gt.size(); ++g) {
      const std::size_t cat = static_cast<std::size_t>(gt.categories[g]);
      const double nll = -std::log(std::max(prob(i, cat), 1e-300));
      const double m = bce_with_logits(mask_logits.row(i), gt.masks.row(g)) +
                       dice_loss(mask_logits.row(i), gt.masks.row(g));
      cost(i, g) = w.cls * nll + w.mask * m;
    }
  return cost;
}

MatchResult hungarian_match(const Matrix& class_logits, const Matrix& mask_logits,
                            const GtInstances& gt, const MatchCosts& w) {
  MatchResult r;
  if (gt.size() == 0) return r;
  const Matrix cost = matching_cost(class_logits, mask_logits, gt, w);
  r.pairs = hungarian(cost);
  for (const auto& [q, g] : r.pairs) r.total_cost += cost(q, g);
  return r;
}

ad::Var cls_loss(ad::Var logits, std::span<const int> targets, double no_object_weight) {
  const Matrix& x = logits.value();
  if (targets.size() != x.rows()) throw ShapeError("cls_loss: one target per row required");
  const int no_object = static_cast<int>(x.cols()) - 1;
  const Matrix prob = softmax_rows(x);
  std::vector<double> w(x.rows());
  double wsum = 0.0, loss = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const int t = targets[i];
    if (t < 0 || t > no_object) throw ShapeError("cls_loss: target out of range");
    w[i] = t == no_object ? no_object_weight : 1.0;
    wsum += w[i];
    loss += w[i] * -std::log(std::max(prob(i, static_cast<std::size_t>(t)), 1e-300));
  }
  if (wsum <= 0.0) throw ConfigError("cls_loss: weights sum to zero");
  std::vector<int> tcopy(targets.begin(), targets.end());
  const std::size_t il = logits.id();
  return logits.tape()->record(
      Matrix(1, 1, loss / wsum), {logits},
      [il, prob, w = std::move(w), wsum, tcopy = std::move(tcopy)](ad::Tape& t, std::size_t self) {
        const double g = t.grad(self)(0, 0);
        Matrix* gx = t.grad_buffer(il);
        for (std::size_t i = 0; i < prob.rows(); ++i) {
          const double s = g * w[i] / wsum;
          for (std::size_t j = 0; j < prob.cols(); ++j) {
            const double onehot = static_cast<int>(j) == tcopy[i] ? 1.0 : 0.0;
            (*gx)(i, j) += s * (prob(i, j) - onehot);
          }
        }
      });
}

ad::Var mask_loss(ad::Var mask_logits, const Matrix& targets, double smooth) {
  const Matrix& x = mask_logits.value();
  if (!x.same_shape(targets)) throw ShapeError("mask_loss: logits and targets differ in shape");
  ad::Tape& tape = *mask_logits.tape();
  if (x.rows() == 0) return tape.constant(Matrix(1, 1));
  double loss = 0.0;
  for (std::size_t r = 0; r < x.rows(); ++r)
    loss += bce_with_logits(x.row(r), targets.row(r)) + dice_loss(x.row(r), targets.row(r), smooth);
  loss /= static_cast<double>(x.rows());
  const std::size_t il = mask_logits.id();
  return tape.record(Matrix(1, 1, loss), {mask_logits},
                     [il, targets, smooth](ad::Tape& t, std::size_t self) {
                       const double g = t.grad(self)(0, 0);
                       const Matrix& x = t.value(il);
                       Matrix* gx = t.grad_buffer(il);
                       const double rows = static_cast<double>(x.rows());
                       const double cols = static_cast<double>(x.cols());
                       std::vector<double> p(x.cols());
                       for (std::size_t r = 0; r < x.rows(); ++r) {
                         double inter = 0.0, total = 0.0;
                         for (std::size_t j = 0; j < x.cols(); ++j) {
                           p[j] = sigmoid(x(r, j));
                           inter += p[j] * targets(r, j);
                           total += p[j] + targets(r, j);
                         }
                         const double num = 2.0 * inter + smooth, den = total + smooth;
                         for (std::size_t j = 0; j < x.cols(); ++j) {
                           const double bce = (p[j] - targets(r, j)) / cols;
                           const double ddice_dp = -(2.0 * targets(r, j) * den - num) / (den * den);
                           (*gx)(r, j) += g / rows * (bce + ddice_dp * p[j] * (1.0 - p[j]));
                         }
                       }
                     });
}

ad::Var kd_loss(ad::Var student, const Matrix& targets, std::span<const std::uint8_t> valid) {
  const Matrix& z = student.value();
  if (!z.same_shape(targets)) throw ShapeError("kd_loss: student and target shapes differ");
  if (valid.size() != z.rows()) throw ShapeError("kd_loss: one valid flag per row required");
  constexpr double eps = 1e-12;
  const double c = static_cast<double>(z.cols());
  double loss = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < z.rows(); ++i) {
    if (!valid[i]) continue;
    ++count;
    double mse = 0.0, dot = 0.0, nz = 0.0, nt = 0.0;
    for (std::size_t k = 0; k < z.cols(); ++k) {
      const double d = z(i, k) - targets(i, k);
      mse += d * d;
      dot += z(i, k) * targets(i, k);
      nz += z(i, k) * z(i, k);
      nt += targets(i, k) * targets(i, k);
    }
    loss += mse / c + 1.0 - dot / std::max(std::sqrt(nz * nt), eps);
  }
  ad::Tape& tape = *student.tape();
  if (count == 0) return tape.constant(Matrix(1, 1));
  loss /= static_cast<double>(count);
  std::vector<std::uint8_t> vcopy(valid.begin(), valid.end());
  const std::size_t is = student.id();
  return tape.record(
      Matrix(1, 1, loss), {student},
      [is, targets, vcopy = std::move(vcopy), count, c](ad::Tape& t, std::size_t self) {
        const double g = t.grad(self)(0, 0) / static_cast<double>(count);
        const Matrix& z = t.value(is);
        Matrix* gz = t.grad_buffer(is);
        for (std::size_t i = 0; i < z.rows(); ++i) {
          if (!vcopy[i]) continue;
          double dot = 0.0, nz = 0.0, nt = 0.0;
          for (std::size_t k = 0; k < z.cols(); ++k) {
            dot += z(i, k) * targets(i, k);
            nz += z(i, k) * z(i, k);
            nt += targets(i, k) * targets(i, k);
          }
          const double norm_z = std::sqrt(nz), norm_t = std::sqrt(nt);
          const double denom = std::max(norm_z * norm_t, 1e-12);
          const double cosv = dot / denom;
          for (std::size_t k = 0; k < z.cols(); ++k) {
            const double dmse = 2.0 * (z(i, k) - targets(i, k)) / c;
            double dcos = targets(i, k) / denom;
            if (nz > 0.0) dcos -= cosv * z(i, k) / nz;
            (*gz)(i, k) += g * (dmse - dcos);
          }
        }
      });
}

ad::Var ift_loss(ad::Var text_loss, ad::Var mask_loss) {
  return ad::add(text_loss, ad::scale(mask_loss, 0.1));
}

double ift_loss(double text_loss, double mask_loss) { return text_loss + 0.1 * mask_loss; }

}  // namespace ost3d
