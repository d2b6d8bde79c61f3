// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include <gtest/gtest.h>

#include <badgnn/error.hpp>
#include <badgnn/linalg.hpp>
#include <badgnn/random.hpp>

#include "oracles.hpp"

using namespace badgnn;

TEST(FrobeniusNorm, Examples) {
  EXPECT_NEAR(frobenius_norm(Matrix::identity(2)), 1.41421356, 1e-8);
  EXPECT_DOUBLE_EQ(frobenius_norm(Matrix{{3, 4}, {0, 0}}), 5.0);
  EXPECT_EQ(frobenius_norm(Matrix(3, 3)), 0.0);
  EXPECT_THROW(frobenius_norm(Matrix()), DimensionError);
}

TEST(FrobeniusNorm, AbsoluteHomogeneity) {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    Matrix m = normal_matrix(1 + rng.below(5), 1 + rng.below(5), 1.0, rng);
    const double c = rng.uniform(-10.0, 10.0);
    Matrix cm = m;
    cm *= c;
    EXPECT_NEAR(frobenius_norm(cm), std::abs(c) * frobenius_norm(m),
                1e-12 * std::abs(c) * frobenius_norm(m));
  }
}

TEST(SpectralNorm, Examples) {
  EXPECT_NEAR(spectral_norm(Matrix{{3, 0}, {0, 1}}), 3.0, 1e-12);
  EXPECT_NEAR(spectral_norm(Matrix{{0, 1}, {0, 0}}), 1.0, 1e-12);
  EXPECT_EQ(spectral_norm(Matrix(2, 3)), 0.0);
  EXPECT_THROW(spectral_norm(Matrix()), DimensionError);
}

TEST(SpectralNorm, MatchesCharacteristicPolynomialOracle) {
  Rng rng(5);
  const Matrix m = normal_matrix(5, 4, 1.0, rng);
  EXPECT_NEAR(spectral_norm(m), oracle::spectral_norm(m), 1e-7);
  for (int trial = 0; trial < 40; ++trial) {
    const Matrix a = normal_matrix(1 + rng.below(6), 1 + rng.below(6), 1.0, rng);
    EXPECT_NEAR(spectral_norm(a), oracle::spectral_norm(a), 1e-7 * (1.0 + spectral_norm(a)));
  }
}

TEST(SpectralNorm, ReportsConvergence) {
  Rng rng(2);
  const SpectralNorm s = spectral_norm_detailed(normal_matrix(4, 4, 1.0, rng));
  EXPECT_TRUE(s.converged);
  EXPECT_GT(s.iterations, 0);
  PowerIterationOptions capped;
  capped.max_iterations = 1;
  capped.rel_tol = 0.0;
  const SpectralNorm c = spectral_norm_detailed(normal_matrix(6, 6, 1.0, rng), capped);
  EXPECT_FALSE(c.converged);
  EXPECT_GT(c.value, 0.0);
}

TEST(SpectralNorm, RestartsWhenStartVectorIsInNullSpace) {
  // The all-ones start vector is annihilated by this matrix.
  const Matrix m{{1, -1}, {2, -2}};
  EXPECT_NEAR(spectral_norm(m), oracle::spectral_norm(m), 1e-9);
  EXPECT_GT(spectral_norm(m), 3.0);
}

TEST(Norms, OrderingProperties) {
  Rng rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t r = 1 + rng.below(6), c = 1 + rng.below(6);
    const Matrix m = normal_matrix(r, c, 2.0, rng);
    const double s = spectral_norm(m);
    EXPECT_LE(s, frobenius_norm(m) * (1 + 1e-12));
    EXPECT_LE(max_abs(m), s * (1 + 1e-9));
    EXPECT_LE(s, std::sqrt(static_cast<double>(r * c)) * max_abs(m) * (1 + 1e-12));
  }
}

TEST(MaxAbs, Examples) {
  EXPECT_EQ(max_abs(Matrix{{-7, 2}, {3, 0}}), 7.0);
  EXPECT_EQ(max_abs(Matrix(2, 2)), 0.0);
  EXPECT_EQ(max_abs(Matrix{{-0.5}}), 0.5);
  EXPECT_THROW(max_abs(Matrix()), DimensionError);
}

TEST(RowSoftmax, Examples) {
  const Matrix u = row_softmax(Matrix(1, 4));
  for (double x : u.values())
    EXPECT_DOUBLE_EQ(x, 0.25);
  const Matrix r = row_softmax(Matrix{{0.0, std::log(3.0)}});
  EXPECT_NEAR(r[0], 0.25, 1e-15);
  EXPECT_NEAR(r[1], 0.75, 1e-15);
  const Matrix big = row_softmax(Matrix{{1000.0, 0.0}});
  EXPECT_TRUE(all_finite(big));
  EXPECT_NEAR(big[0], 1.0, 1e-15);
  EXPECT_NEAR(big[1], 0.0, 1e-15);
}

TEST(RowSoftmax, RowsSumToOneAndShiftInvariance) {
  Rng rng(23);
  for (int trial = 0; trial < 100; ++trial) {
    Matrix m = normal_matrix(1 + rng.below(4), 1 + rng.below(7), 30.0, rng);
    // Dyadic entries keep x - max exact before and after an integer shift.
    for (double &x : m.values())
      x = std::round(x * 8.0) / 8.0;
    const Matrix s = row_softmax(m);
    for (std::size_t i = 0; i < s.rows(); ++i) {
      double sum = 0.0;
      for (double x : s.row(i)) {
        EXPECT_GE(x, 0.0);
        EXPECT_LE(x, 1.0);
        sum += x;
      }
      EXPECT_NEAR(sum, 1.0, 1e-12);
    }
    Matrix shifted = m;
    for (std::size_t i = 0; i < m.rows(); ++i) {
      const double c = std::round(rng.uniform(-100.0, 100.0));
      for (double &x : shifted.row(i))
        x += c;
    }
    EXPECT_EQ(row_softmax(shifted), s);
  }
}

TEST(Matrix, ProductsMatchLoops) {
  Rng rng(3);
  const Matrix a = normal_matrix(3, 4, 1.0, rng), b = normal_matrix(4, 2, 1.0, rng);
  const Matrix c = matmul(a, b), o = oracle::matmul(a, b);
  for (std::size_t i = 0; i < c.size(); ++i)
    EXPECT_NEAR(c[i], o[i], 1e-13);
  const Matrix at = oracle::transpose(a);
  const Matrix tn = matmul_tn(at, b), nt = matmul_nt(a, oracle::transpose(b));
  for (std::size_t i = 0; i < c.size(); ++i) {
    EXPECT_NEAR(tn[i], o[i], 1e-13);
    EXPECT_NEAR(nt[i], o[i], 1e-13);
  }
  EXPECT_THROW(matmul(a, a), DimensionError);
}

TEST(Matrix, SlicesAndConcat) {
  const Matrix a{{1, 2}, {3, 4}}, b{{5}, {6}};
  const Matrix c = hconcat({&a, &b});
  EXPECT_EQ(c, (Matrix{{1, 2, 5}, {3, 4, 6}}));
  EXPECT_EQ(col_slice(c, 1, 2), (Matrix{{2, 5}, {4, 6}}));
  EXPECT_EQ(row_slice(c, 1, 1), (Matrix{{3, 4, 6}}));
  EXPECT_THROW(col_slice(c, 2, 2), DimensionError);
  const Matrix one_row = row_slice(c, 0, 1);
  EXPECT_THROW(hconcat({&a, &one_row}), DimensionError);
}

TEST(Matrix, RejectsNonFinite) {
  Matrix m(1, 2);
  m[1] = std::nan("");
  EXPECT_FALSE(all_finite(m));
  EXPECT_THROW(require_finite(m, "test"), NumericError);
}

TEST(Matrix, DataLengthInvariant) {
  EXPECT_THROW(Matrix(2, 2, std::vector<double>(3)), DimensionError);
  const Matrix m(3, 5);
  EXPECT_EQ(m.values().size(), 15u);
}
