// SPDX-License-Identifier: Apache-2.0
/**
 * @file   linalg.hpp
 * @brief  Dense row-major matrices, the norms used by the bound
 *         diagnostics, and a max-shifted row softmax.
 *
 * Everything is double precision. Vectors are 1 x n matrices.
 */
#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace badgnn {

class Matrix {
public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);
  static Matrix row_vector(std::span<const double> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double &operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  double &operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  bool same_shape(const Matrix &o) const noexcept {
    return rows_ == o.rows_ && cols_ == o.cols_;
  }

  void fill(double v);

  Matrix &operator+=(const Matrix &o);
  Matrix &operator-=(const Matrix &o);
  Matrix &operator*=(double s);

  /// this += s * o
  void add_scaled(const Matrix &o, double s);

  bool operator==(const Matrix &o) const = default;

private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix &b);
Matrix operator-(Matrix a, const Matrix &b);
Matrix operator*(Matrix a, double s);
Matrix operator*(double s, Matrix a);

/// A * B
Matrix matmul(const Matrix &a, const Matrix &b);
/// A^T * B
Matrix matmul_tn(const Matrix &a, const Matrix &b);
/// A * B^T
Matrix matmul_nt(const Matrix &a, const Matrix &b);

Matrix transpose(const Matrix &m);
Matrix hadamard(const Matrix &a, const Matrix &b);

/// Horizontal concatenation of row vectors / equal-height blocks.
Matrix hconcat(std::initializer_list<const Matrix *> blocks);
/// Columns [begin, begin + count) of m.
Matrix col_slice(const Matrix &m, std::size_t begin, std::size_t count);
/// Rows [begin, begin + count) of m.
Matrix row_slice(const Matrix &m, std::size_t begin, std::size_t count);

bool all_finite(const Matrix &m) noexcept;
/// Throws NumericError naming `where` if any entry is NaN/Inf.
void require_finite(const Matrix &m, const char *where);

double sum(const Matrix &m) noexcept;
double dot(const Matrix &a, const Matrix &b);

double frobenius_norm(const Matrix &m);
double max_abs(const Matrix &m);

struct SpectralNorm {
  double value = 0.0;
  bool converged = false;
  int iterations = 0;
};

struct PowerIterationOptions {
  double rel_tol = 1e-9;
  int max_iterations = 1000;
  unsigned long long restart_seed = 0x5eed5eedULL;
};

/// Largest singular value by power iteration on M^T M. Starts from the
/// normalized all-ones vector; if that vector lies in the null space of a
/// non-zero M, restarts from a seeded random vector.
SpectralNorm spectral_norm_detailed(const Matrix &m, const PowerIterationOptions &opts = {});
double spectral_norm(const Matrix &m);

/// Softmax along each row, computed after subtracting the row maximum.
Matrix row_softmax(const Matrix &m);

} // namespace badgnn
