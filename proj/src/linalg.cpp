// SPDX-License-Identifier: Apache-2.0
#include <badgnn/linalg.hpp>

#include <algorithm>
#include <cmath>
#include <string>

#include <badgnn/error.hpp>
#include <badgnn/random.hpp>

namespace badgnn {

namespace {

std::string shape(const Matrix &m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void require_same_shape(const Matrix &a, const Matrix &b, const char *op) {
  if (!a.same_shape(b))
    throw DimensionError(std::string(op) + ": shape " + shape(a) + " vs " + shape(b));
}

void require_non_empty(const Matrix &m, const char *op) {
  if (m.empty())
    throw DimensionError(std::string(op) + ": empty matrix");
}

} // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
  : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
  : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_)
    throw DimensionError("Matrix: data length " + std::to_string(data_.size()) +
                         " does not match " + std::to_string(rows) + "x" +
                         std::to_string(cols));
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto &r : rows) {
    if (r.size() != cols_)
      throw DimensionError("Matrix: ragged initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i)
    m(i, i) = 1.0;
  return m;
}

Matrix Matrix::row_vector(std::span<const double> values) {
  return Matrix(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Matrix &Matrix::operator+=(const Matrix &o) {
  require_same_shape(*this, o, "operator+=");
  for (std::size_t i = 0; i < data_.size(); ++i)
    data_[i] += o.data_[i];
  return *this;
}

Matrix &Matrix::operator-=(const Matrix &o) {
  require_same_shape(*this, o, "operator-=");
  for (std::size_t i = 0; i < data_.size(); ++i)
    data_[i] -= o.data_[i];
  return *this;
}

Matrix &Matrix::operator*=(double s) {
  for (auto &v : data_)
    v *= s;
  return *this;
}

void Matrix::add_scaled(const Matrix &o, double s) {
  require_same_shape(*this, o, "add_scaled");
  for (std::size_t i = 0; i < data_.size(); ++i)
    data_[i] += s * o.data_[i];
}

Matrix operator+(Matrix a, const Matrix &b) { return a += b; }
Matrix operator-(Matrix a, const Matrix &b) { return a -= b; }
Matrix operator*(Matrix a, double s) { return a *= s; }
Matrix operator*(double s, Matrix a) { return a *= s; }

Matrix matmul(const Matrix &a, const Matrix &b) {
  if (a.cols() != b.rows())
    throw DimensionError("matmul: " + shape(a) + " * " + shape(b));
  Matrix out(a.rows(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double *o = out.row(i).data();
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0)
        continue;
      const double *br = b.row(k).data();
      for (std::size_t j = 0; j < n; ++j)
        o[j] += aik * br[j];
    }
  }
  return out;
}

Matrix matmul_tn(const Matrix &a, const Matrix &b) {
  if (a.rows() != b.rows())
    throw DimensionError("matmul_tn: " + shape(a) + "^T * " + shape(b));
  Matrix out(a.cols(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const double *br = b.row(k).data();
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = a(k, i);
      if (aki == 0.0)
        continue;
      double *o = out.row(i).data();
      for (std::size_t j = 0; j < n; ++j)
        o[j] += aki * br[j];
    }
  }
  return out;
}

Matrix matmul_nt(const Matrix &a, const Matrix &b) {
  if (a.cols() != b.cols())
    throw DimensionError("matmul_nt: " + shape(a) + " * " + shape(b) + "^T");
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double *ar = a.row(i).data();
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const double *br = b.row(j).data();
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k)
        acc += ar[k] * br[k];
      out(i, j) = acc;
    }
  }
  return out;
}

Matrix transpose(const Matrix &m) {
  Matrix out(m.cols(), m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j)
      out(j, i) = m(i, j);
  return out;
}

Matrix hadamard(const Matrix &a, const Matrix &b) {
  require_same_shape(a, b, "hadamard");
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] *= b[i];
  return out;
}

Matrix hconcat(std::initializer_list<const Matrix *> blocks) {
  std::size_t rows = 0;
  std::size_t cols = 0;
  bool first = true;
  for (const Matrix *b : blocks) {
    if (first) {
      rows = b->rows();
      first = false;
    } else if (b->rows() != rows) {
      throw DimensionError("hconcat: row count mismatch");
    }
    cols += b->cols();
  }
  Matrix out(rows, cols);
  std::size_t offset = 0;
  for (const Matrix *b : blocks) {
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(b->row(r).data(), b->cols(), out.row(r).data() + offset);
    offset += b->cols();
  }
  return out;
}

Matrix col_slice(const Matrix &m, std::size_t begin, std::size_t count) {
  if (begin + count > m.cols())
    throw DimensionError("col_slice: out of range");
  Matrix out(m.rows(), count);
  for (std::size_t r = 0; r < m.rows(); ++r)
    std::copy_n(m.row(r).data() + begin, count, out.row(r).data());
  return out;
}

Matrix row_slice(const Matrix &m, std::size_t begin, std::size_t count) {
  if (begin + count > m.rows())
    throw DimensionError("row_slice: out of range");
  Matrix out(count, m.cols());
  std::copy_n(m.row(begin).data(), count * m.cols(), out.values().data());
  return out;
}

bool all_finite(const Matrix &m) noexcept {
  return std::all_of(m.values().begin(), m.values().end(),
                     [](double v) { return std::isfinite(v); });
}

void require_finite(const Matrix &m, const char *where) {
  if (!all_finite(m))
    throw NumericError(std::string(where) + ": non-finite entry");
}

double sum(const Matrix &m) noexcept {
  double s = 0.0;
  for (double v : m.values())
    s += v;
  return s;
}

double dot(const Matrix &a, const Matrix &b) {
  if (a.size() != b.size())
    throw DimensionError("dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    s += a[i] * b[i];
  return s;
}

double frobenius_norm(const Matrix &m) {
  require_non_empty(m, "frobenius_norm");
  double s = 0.0;
  for (double v : m.values())
    s += v * v;
  return std::sqrt(s);
}

double max_abs(const Matrix &m) {
  require_non_empty(m, "max_abs");
  double best = 0.0;
  for (double v : m.values())
    best = std::max(best, std::abs(v));
  return best;
}

namespace {

// v <- M^T M v, returns Rayleigh quotient v . M^T M v for unit v.
double gram_apply(const Matrix &m, std::vector<double> &v, std::vector<double> &scratch_r,
                  std::vector<double> &out) {
  const std::size_t r = m.rows();
  const std::size_t c = m.cols();
  for (std::size_t i = 0; i < r; ++i) {
    double acc = 0.0;
    const double *mr = m.row(i).data();
    for (std::size_t j = 0; j < c; ++j)
      acc += mr[j] * v[j];
    scratch_r[i] = acc;
  }
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t i = 0; i < r; ++i) {
    const double *mr = m.row(i).data();
    for (std::size_t j = 0; j < c; ++j)
      out[j] += mr[j] * scratch_r[i];
  }
  double rq = 0.0;
  for (std::size_t j = 0; j < c; ++j)
    rq += v[j] * out[j];
  return rq;
}

double normalize(std::vector<double> &v) {
  double n = 0.0;
  for (double x : v)
    n += x * x;
  n = std::sqrt(n);
  if (n > 0.0)
    for (double &x : v)
      x /= n;
  return n;
}

} // namespace

SpectralNorm spectral_norm_detailed(const Matrix &m, const PowerIterationOptions &opts) {
  require_non_empty(m, "spectral_norm");
  require_finite(m, "spectral_norm");
  SpectralNorm result;
  if (max_abs(m) == 0.0) {
    result.converged = true;
    return result;
  }

  const std::size_t c = m.cols();
  std::vector<double> v(c, 1.0 / std::sqrt(static_cast<double>(c)));
  std::vector<double> scratch(m.rows());
  std::vector<double> next(c);
  Rng restart(opts.restart_seed);
  bool restarted = false;

  double lambda = 0.0;
  for (int it = 1; it <= opts.max_iterations; ++it) {
    const double rq = gram_apply(m, v, scratch, next);
    result.iterations = it;
    const double norm = normalize(next);
    if (norm == 0.0 || rq <= 0.0) {
      // v sits in the null space of M; a non-zero M always has some
      // direction with positive Rayleigh quotient.
      if (restarted && norm == 0.0)
        break;
      for (double &x : v)
        x = restart.normal();
      normalize(v);
      restarted = true;
      lambda = 0.0;
      continue;
    }
    const double prev = lambda;
    lambda = rq;
    v.swap(next);
    if (it > 1 && std::abs(lambda - prev) <= opts.rel_tol * lambda) {
      result.converged = true;
      break;
    }
  }
  // Final Rayleigh quotient on the last iterate.
  const double rq = gram_apply(m, v, scratch, next);
  result.value = std::sqrt(std::max(rq, lambda));
  return result;
}

double spectral_norm(const Matrix &m) { return spectral_norm_detailed(m).value; }

Matrix row_softmax(const Matrix &m) {
  require_non_empty(m, "row_softmax");
  Matrix out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto in = m.row(i);
    auto o = out.row(i);
    const double mx = *std::max_element(in.begin(), in.end());
    double z = 0.0;
    for (std::size_t j = 0; j < in.size(); ++j) {
      o[j] = std::exp(in[j] - mx);
      z += o[j];
    }
    for (double &x : o)
      x /= z;
  }
  return out;
}

} // namespace badgnn
