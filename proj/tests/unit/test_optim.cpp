#include <cmath>

#include "doctest.h"

#include "ost3d/errors.hpp"
#include "ost3d/optim.hpp"

using namespace ost3d;

TEST_SUITE("training") {

TEST_CASE("AdamW first step matches the closed form") {
  ParameterSet params;
  params.add("w", Matrix::from_rows({{1.0, -2.0}}));
  params.add("frozen", Matrix(1, 1, 5.0));
  AdamWConfig cfg;
  cfg.grad_clip = 0.0;
  AdamW opt(params, {0}, cfg);
  const Matrix g = Matrix::from_rows({{0.5, -0.25}});
  opt.step(params, {g}, 0.1);
  // m_hat = g and v_hat = g^2 after bias correction
  for (std::size_t i = 0; i < 2; ++i) {
    const double p0 = i == 0 ? 1.0 : -2.0;
    const double gi = g(0, i);
    const double expected = p0 - 0.1 * (gi / (std::abs(gi) + 1e-8) + 0.01 * p0);
    CHECK(params.value(0)(0, i) == doctest::Approx(expected).epsilon(1e-14));
  }
  CHECK(params.value(1)(0, 0) == 5.0);
  CHECK(opt.steps() == 1);
}

TEST_CASE("AdamW second step follows the moment recursion") {
  ParameterSet params;
  params.add("w", Matrix(1, 1, 0.0));
  AdamWConfig cfg;
  cfg.weight_decay = 0.0;
  cfg.grad_clip = 0.0;
  AdamW opt(params, {0}, cfg);
  opt.step(params, {Matrix(1, 1, 1.0)}, 0.01);
  opt.step(params, {Matrix(1, 1, -3.0)}, 0.01);
  const double m = 0.9 * 0.1 * 1.0 + 0.1 * -3.0;
  const double v = 0.999 * 0.001 * 1.0 + 0.001 * 9.0;
  const double mhat = m / (1 - 0.81), vhat = v / (1 - 0.999 * 0.999);
  CHECK(params.value(0)(0, 0) == doctest::Approx(-0.01 / (1.0 + 1e-8) - 0.01 * mhat / (std::sqrt(vhat) + 1e-8)).epsilon(1e-12));
}

TEST_CASE("gradient clipping rescales the global norm") {
  ParameterSet a, b;
  a.add("w", Matrix(1, 2, 0.0));
  b.add("w", Matrix(1, 2, 0.0));
  AdamWConfig clipped;
  clipped.weight_decay = 0.0;
  AdamWConfig loose = clipped;
  loose.grad_clip = 0.0;
  AdamW oa(a, {0}, clipped), ob(b, {0}, loose);
  CHECK(oa.step(a, {Matrix::from_rows({{30, 40}})}, 1.0) == doctest::Approx(50.0));
  ob.step(b, {Matrix::from_rows({{0.6, 0.8}})}, 1.0);
  CHECK(max_abs_diff(a.value(0), b.value(0)) < 1e-12);
  CHECK_THROWS_AS(oa.step(a, {Matrix(1, 2, std::nan(""))}, 1.0), NonFiniteError);
  CHECK_THROWS_AS(oa.step(a, {}, 1.0), ShapeError);
}

TEST_CASE("cosine schedule endpoints and midpoint") {
  CHECK(cosine_lr(1e-3, 1e-5, 0, 100) == doctest::Approx(1e-3));
  CHECK(cosine_lr(1e-3, 1e-5, 50, 100) == doctest::Approx((1e-3 + 1e-5) / 2));
  CHECK(cosine_lr(1e-3, 1e-5, 100, 100) == 1e-5);
  CHECK(cosine_lr(1e-3, 1e-5, 250, 100) == 1e-5);
  CHECK(cosine_lr(1e-3, 0.0, 25, 100) == doctest::Approx(1e-3 * (1 + std::cos(M_PI / 4)) / 2));
}

}  // TEST_SUITE
