#include <cmath>
#include <random>

#include "doctest.h"

#include "../common/oracles.hpp"
#include "ost3d/autodiff.hpp"
#include "ost3d/errors.hpp"
#include "ost3d/matrix.hpp"

using namespace ost3d;

TEST_SUITE("tensor-core") {

TEST_CASE("matmul against a hand-computed product") {
  const Matrix a = Matrix::from_rows({{1, 2}, {3, 4}, {5, 6}});
  const Matrix b = Matrix::from_rows({{7, 8, 9}, {10, 11, 12}});
  const Matrix c = matmul(a, b);
  CHECK(c == Matrix::from_rows({{27, 30, 33}, {61, 68, 75}, {95, 106, 117}}));
  CHECK(matmul_nt(a, transpose(b)) == c);
  CHECK(matmul_tn(transpose(a), b) == c);
  CHECK_THROWS_AS(matmul(a, a), ShapeError);
}

TEST_CASE("softmax rows: masked entries get zero weight, all-masked rows raise") {
  Matrix m = Matrix::from_rows({{1.0, kMasked, 1.0}, {0.0, 0.0, 0.0}});
  const Matrix s = softmax_rows(m);
  CHECK(s(0, 0) == doctest::Approx(0.5));
  CHECK(s(0, 1) == 0.0);
  CHECK(s(1, 2) == doctest::Approx(1.0 / 3.0));
  m(1, 0) = m(1, 1) = m(1, 2) = kMasked;
  CHECK_THROWS_AS(softmax_rows(m), EmptyRowError);
}

TEST_CASE("softmax is stable for large logits") {
  const Matrix s = softmax_rows(Matrix::from_rows({{1000.0, 999.0}}));
  CHECK(s.all_finite());
  CHECK(s(0, 0) == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))));
}

TEST_CASE("backward accumulates shared-input gradients additively") {
  ad::Tape t;
  ad::Var x = t.variable(Matrix::from_rows({{2.0, -3.0}}));
  ad::Var y = ad::sum(ad::add(ad::mul(x, x), ad::scale(x, 3.0)));
  t.backward(y);
  CHECK(x.grad()(0, 0) == doctest::Approx(2 * 2.0 + 3));
  CHECK(x.grad()(0, 1) == doctest::Approx(2 * -3.0 + 3));
}

TEST_CASE("constants carry no gradient and closures are skipped") {
  ad::Tape t;
  ad::Var c = t.constant(Matrix(2, 2, 1.0));
  ad::Var d = ad::relu(c);
  CHECK_FALSE(d.requires_grad());
  ad::Var x = t.variable(Matrix(2, 2, 0.5));
  t.set_trace(true);
  t.backward(ad::sum(ad::mul(d, x)));
  for (std::size_t id : t.trace()) CHECK(id != d.id());
  CHECK(x.grad()(1, 1) == doctest::Approx(1.0));
}

TEST_CASE("backward requires a scalar root") {
  ad::Tape t;
  ad::Var x = t.variable(Matrix(2, 2, 1.0));
  CHECK_THROWS_AS(t.backward(x), ShapeError);
}

TEST_CASE("gradient suite passes finite-difference checks") {
  for (const oracle::GradCase& c : oracle::gradient_suite(42)) {
    CAPTURE(c.name);
    const ad::GradCheckReport r = ad::grad_check(c.fn, c.inputs);
    CAPTURE(r.diagnostic);
    CHECK(r.passed);
    CHECK(r.max_rel_error <= 1e-4);
  }
}

TEST_CASE("grad_check flags a wrong backward") {
  auto broken = [](ad::Tape& t, std::span<const ad::Var> x) {
    const std::size_t id = x[0].id();
    Matrix v = x[0].value();
    for (double& e : v.values()) e = e * e;
    return ad::sum(t.record(v, {x[0]}, [id](ad::Tape& tt, std::size_t self) {
      tt.accumulate(id, tt.grad(self));  // should be 2x * g
    }));
  };
  std::mt19937_64 rng(3);
  const ad::GradCheckReport r = ad::grad_check(broken, {Matrix::random_uniform(2, 2, rng, 1.0, 2.0)});
  CHECK_FALSE(r.passed);
}

TEST_CASE("matmul rows are computed independently") {
  std::mt19937_64 rng(5);
  const Matrix a = Matrix::random_normal(4, 7, rng, 1.0);
  const Matrix extra = Matrix::random_normal(2, 7, rng, 1.0);
  const Matrix b = Matrix::random_normal(7, 3, rng, 1.0);
  const Matrix full = matmul(concat_rows(a, extra), b);
  CHECK(slice_rows(full, 0, 4) == matmul(a, b));
}

TEST_CASE("layer_norm rows have zero mean and unit variance") {
  ad::Tape t;
  ad::Var y = ad::layer_norm(t.constant(Matrix::from_rows({{1, 2, 3, 4}, {-5, 0, 5, 10}})), 0.0);
  for (std::size_t r = 0; r < 2; ++r) {
    double m = 0, v = 0;
    for (double e : y.value().row(r)) m += e / 4;
    for (double e : y.value().row(r)) v += (e - m) * (e - m) / 4;
    CHECK(m == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(v == doctest::Approx(1.0));
  }
}

}  // TEST_SUITE
