#pragma once

#include <cstddef>
#include <initializer_list>
#include <limits>
#include <random>
#include <span>
#include <vector>

namespace ost3d {

// Sentinel for masked attention logits. Only softmax_rows interprets it.
inline constexpr double kMasked = -std::numeric_limits<double>::infinity();

// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix identity(std::size_t n);
  static Matrix row_vector(std::span<const double> values);
  static Matrix random_normal(std::size_t rows, std::size_t cols, std::mt19937_64& rng,
                              double stddev);
  static Matrix random_uniform(std::size_t rows, std::size_t cols, std::mt19937_64& rng,
                               double lo, double hi);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  const std::vector<double>& storage() const noexcept { return data_; }

  bool same_shape(const Matrix& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  bool all_finite() const noexcept;

  Matrix& operator+=(const Matrix& other);
  Matrix& operator-=(const Matrix& other);
  Matrix& operator*=(double s);

  bool operator==(const Matrix& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(Matrix a, double s);

// Plain (tape-free) kernels shared by the autodiff ops and inference code.
Matrix matmul(const Matrix& a, const Matrix& b);
// a * b^T
Matrix matmul_nt(const Matrix& a, const Matrix& b);
// a^T * b
Matrix matmul_tn(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
Matrix hadamard(const Matrix& a, const Matrix& b);

// Row-wise softmax with max subtraction. kMasked entries get weight 0;
// a row with every entry masked raises EmptyRowError.
Matrix softmax_rows(const Matrix& m);

Matrix concat_rows(const Matrix& top, const Matrix& bottom);
Matrix slice_rows(const Matrix& m, std::size_t begin, std::size_t count);
Matrix gather_rows(const Matrix& m, std::span<const std::size_t> indices);

double max_abs_diff(const Matrix& a, const Matrix& b);
double sum(const Matrix& m);

}  // namespace ost3d
