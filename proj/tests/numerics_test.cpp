// Copyright 2026 The dsa Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "dsa/numerics.hpp"
#include "dsa/reference.hpp"

namespace dsa {
namespace {

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  const Matrix m = seeded_gaussian(3, 4, 1, 1.0);
  EXPECT_EQ(matmul(Matrix::identity(3), m), m);
}

TEST(Matmul, HandCheckedTwoByTwo) {
  EXPECT_EQ(matmul(Matrix{{1, 2}, {3, 4}}, Matrix{{1}, {1}}), (Matrix{{3}, {7}}));
}

TEST(Matmul, MatchesTripleLoop) {
  const Matrix a = seeded_gaussian(5, 4, 2, 1.0);
  const Matrix b = seeded_gaussian(4, 3, 3, 1.0);
  EXPECT_LT(max_abs_diff(matmul(a, b), reference::matmul(a, b)), 1e-12);
  EXPECT_LT(max_abs_diff(matmul_transposed(a, transpose(b)), reference::matmul(a, b)), 1e-12);
}

TEST(Matmul, RejectsMismatchedShapes) {
  EXPECT_THROW(matmul(Matrix(2, 3), Matrix(2, 3)), ShapeError);
}

TEST(Matmul, ChargesOnlyCountedProducts) {
  MultiplyLedger ledger;
  matmul(Matrix(2, 3), Matrix(3, 4), &ledger, true);
  EXPECT_EQ(ledger.counted(), 24u);
  matmul(Matrix(2, 3), Matrix(3, 4), &ledger, false);
  EXPECT_EQ(ledger.counted(), 24u);
}

TEST(RowSoftmax, SymmetricRowIsUniform) {
  const Matrix s = row_softmax(Matrix{{0, 0}});
  EXPECT_DOUBLE_EQ(s(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(s(0, 1), 0.5);
}

TEST(RowSoftmax, LogTwoGivesTwoThirds) {
  const Matrix s = row_softmax(Matrix{{std::log(2.0), 0}});
  EXPECT_NEAR(s(0, 0), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(s(0, 1), 1.0 / 3.0, 1e-15);
}

TEST(RowSoftmax, MatchesDirectFormulaAndSumsToOne) {
  const Matrix m = seeded_gaussian(3, 5, 4, 3.0);
  const Matrix s = row_softmax(m);
  for (std::size_t r = 0; r < 3; ++r) {
    double z = 0;
    for (double v : m.row(r)) z += std::exp(v);
    double total = 0;
    for (std::size_t c = 0; c < 5; ++c) {
      EXPECT_NEAR(s(r, c), std::exp(m(r, c)) / z, 1e-12);
      total += s(r, c);
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(RowSoftmax, LargeScoresStayFinite) {
  const Matrix s = row_softmax(Matrix{{1000, 999}});
  EXPECT_TRUE(std::isfinite(s(0, 0)));
  EXPECT_NEAR(s(0, 0) + s(0, 1), 1.0, 1e-15);
}

TEST(LayerNorm, ConstantRowMapsToZero) {
  const Matrix y = layer_norm(Matrix{{5, 5, 5}}, Matrix(1, 3, 1.0), Matrix(1, 3));
  EXPECT_EQ(y, Matrix(1, 3));
}

TEST(LayerNorm, TwoValuesWithoutEpsilon) {
  const Matrix y = layer_norm(Matrix{{1, 3}}, Matrix(1, 2, 1.0), Matrix(1, 2), 0.0);
  EXPECT_DOUBLE_EQ(y(0, 0), -1.0);
  EXPECT_DOUBLE_EQ(y(0, 1), 1.0);
}

TEST(LayerNorm, RandomRowIsStandardized) {
  const Matrix y = layer_norm(seeded_gaussian(1, 64, 5, 4.0), Matrix(1, 64, 1.0), Matrix(1, 64));
  const auto row = y.row(0);
  const double mean = std::accumulate(row.begin(), row.end(), 0.0) / 64;
  double var = 0;
  for (double v : row) var += (v - mean) * (v - mean);
  EXPECT_LT(std::fabs(mean), 1e-12);
  EXPECT_LT(std::fabs(var / 64 - 1.0), 1e-9);
}

TEST(SinusoidalPe, FirstRowAlternatesZeroOne) {
  const Matrix pe = sinusoidal_pe(4, 8);
  for (std::size_t c = 0; c < 8; ++c) EXPECT_EQ(pe(0, c), c % 2 ? 1.0 : 0.0);
  EXPECT_NEAR(pe(1, 0), std::sin(1.0), 1e-15);
  for (double v : sinusoidal_pe(50, 16).values()) {
    EXPECT_LE(std::fabs(v), 1.0);
  }
  EXPECT_THROW(sinusoidal_pe(2, 3), std::invalid_argument);
}

TEST(FiniteDiff, SumHasUnitGradient) {
  const Matrix x = seeded_gaussian(2, 3, 6, 1.0);
  const Matrix g = finite_diff_grad(
      [](const Matrix& m) {
        double s = 0;
        for (double v : m.values()) s += v;
        return s;
      },
      x, 1e-5);
  EXPECT_LT(max_abs_diff(g, Matrix(2, 3, 1.0)), 1e-9);
}

TEST(FiniteDiff, HalfSquaredNormHasGradientX) {
  const Matrix x = seeded_gaussian(3, 2, 7, 1.0);
  const Matrix g = finite_diff_grad(
      [](const Matrix& m) { return 0.5 * frobenius_inner(m, m); }, x, 1e-5);
  EXPECT_LT(max_abs_diff(g, x), 1e-8);
}

TEST(Concat, TimeAndFeature) {
  const Matrix a{{1, 2}};
  const Matrix b{{3, 4}, {5, 6}};
  const Matrix t[] = {a, b};
  EXPECT_EQ(concat_time(t), (Matrix{{1, 2}, {3, 4}, {5, 6}}));
  const Matrix f[] = {b, Matrix{{7}, {8}}};
  EXPECT_EQ(concat_feature(f), (Matrix{{3, 4, 7}, {5, 6, 8}}));
  const Matrix bad[] = {a, Matrix(1, 3)};
  EXPECT_THROW(concat_time(bad), ShapeError);
}

TEST(Relu, ClampsNegatives) {
  EXPECT_EQ(relu(Matrix{{-1, 0, 2}}), (Matrix{{0, 0, 2}}));
}

TEST(SeededGaussian, DeterministicPerSeed) {
  EXPECT_EQ(seeded_gaussian(4, 4, 9, 1.0), seeded_gaussian(4, 4, 9, 1.0));
  EXPECT_NE(seeded_gaussian(4, 4, 9, 1.0), seeded_gaussian(4, 4, 10, 1.0));
}

TEST(MaxAbsDiff, NanIsNeverSmall) {
  const Matrix a{{NAN}};
  EXPECT_TRUE(std::isnan(max_abs_diff(a, Matrix{{0}})));
}

}  // namespace
}  // namespace dsa
