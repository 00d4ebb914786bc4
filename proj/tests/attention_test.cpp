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

#include <algorithm>
#include <cmath>

#include "dsa/attention.hpp"
#include "dsa/reference.hpp"

namespace dsa {
namespace {

MhaParams random_mha(std::size_t d_model, std::size_t d_h, std::uint64_t seed) {
  MhaParams p;
  const std::size_t d_k = d_model / d_h;
  for (std::size_t h = 0; h < d_h; ++h) {
    p.heads.push_back({seeded_gaussian(d_model, d_k, seed + 3 * h, 0.5),
                       seeded_gaussian(d_model, d_k, seed + 3 * h + 1, 0.5),
                       seeded_gaussian(d_model, d_k, seed + 3 * h + 2, 0.5)});
  }
  p.w_h = seeded_gaussian(d_model, d_model, seed + 99, 0.5);
  return p;
}

TEST(ScaledDotAttention, SingleKeyReturnsItsValue) {
  const Matrix q = seeded_gaussian(3, 2, 1, 1.0);
  const Matrix out = scaled_dot_attention(q, Matrix{{0.3, -1}}, Matrix{{4, 5, 6}});
  for (std::size_t r = 0; r < 3; ++r) EXPECT_EQ(out.slice_rows(r, r + 1), (Matrix{{4, 5, 6}}));
}

TEST(ScaledDotAttention, IdenticalKeysAverageValues) {
  const Matrix out =
      scaled_dot_attention(Matrix{{1, 2}}, Matrix{{1, 1}, {1, 1}}, Matrix{{2, 0}, {0, 4}});
  EXPECT_NEAR(out(0, 0), 1.0, 1e-15);
  EXPECT_NEAR(out(0, 1), 2.0, 1e-15);
}

TEST(ScaledDotAttention, WorkedExample) {
  const Matrix out =
      scaled_dot_attention(Matrix{{1, 0}}, Matrix{{1, 0}, {0, 1}}, Matrix{{2, 0}, {0, 4}});
  const double w = 1.0 / (1.0 + std::exp(-1.0 / std::sqrt(2.0)));
  EXPECT_NEAR(out(0, 0), 2 * w, 1e-15);
  EXPECT_NEAR(out(0, 1), 4 * (1 - w), 1e-15);
  EXPECT_NEAR(out(0, 0), 1.340, 5e-4);
  EXPECT_NEAR(out(0, 1), 1.321, 5e-4);
}

TEST(ScaledDotAttention, OutputsAreConvexCombinations) {
  const Matrix q = seeded_gaussian(4, 3, 2, 2.0);
  const Matrix k = seeded_gaussian(6, 3, 3, 2.0);
  const Matrix v = seeded_gaussian(6, 5, 4, 2.0);
  const Matrix out = scaled_dot_attention(q, k, v);
  EXPECT_LT(max_abs_diff(out, reference::attention(q, k, v)), 1e-12);
  for (std::size_t c = 0; c < 5; ++c) {
    double lo = INFINITY, hi = -INFINITY;
    for (std::size_t r = 0; r < 6; ++r) lo = std::min(lo, v(r, c)), hi = std::max(hi, v(r, c));
    for (std::size_t r = 0; r < 4; ++r) {
      EXPECT_GE(out(r, c), lo - 1e-9);
      EXPECT_LE(out(r, c), hi + 1e-9);
    }
  }
}

TEST(ScaledDotAttention, RejectsEmptyKeysAndBadShapes) {
  EXPECT_THROW(scaled_dot_attention(Matrix(1, 2), Matrix(0, 2), Matrix(0, 2)), ShapeError);
  EXPECT_THROW(scaled_dot_attention(Matrix(1, 2), Matrix(2, 3), Matrix(2, 2)), ShapeError);
}

TEST(AttentionBackward, ZeroUpstreamGivesZeroGradients) {
  const auto g = attention_backward(seeded_gaussian(2, 3, 1, 1.0), seeded_gaussian(4, 3, 2, 1.0),
                                    seeded_gaussian(4, 2, 3, 1.0), Matrix(2, 2));
  EXPECT_EQ(g.q, Matrix(2, 3));
  EXPECT_EQ(g.k, Matrix(4, 3));
  EXPECT_EQ(g.v, Matrix(4, 2));
}

TEST(AttentionBackward, SingleKey) {
  const Matrix up = seeded_gaussian(3, 2, 4, 1.0);
  const auto g = attention_backward(seeded_gaussian(3, 4, 5, 1.0), seeded_gaussian(1, 4, 6, 1.0),
                                    seeded_gaussian(1, 2, 7, 1.0), up);
  EXPECT_LT(max_abs_diff(g.q, Matrix(3, 4)), 1e-15);
  EXPECT_LT(max_abs_diff(g.k, Matrix(1, 4)), 1e-15);
  Matrix summed(1, 2);
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 2; ++c) summed(0, c) += up(r, c);
  EXPECT_LT(max_abs_diff(g.v, summed), 1e-15);
}

TEST(AttentionBackward, MatchesFiniteDifferences) {
  const Matrix q = seeded_gaussian(3, 4, 8, 1.0);
  const Matrix k = seeded_gaussian(3, 4, 9, 1.0);
  const Matrix v = seeded_gaussian(3, 4, 10, 1.0);
  const Matrix up = seeded_gaussian(3, 4, 11, 1.0);
  const auto g = attention_backward(q, k, v, up);
  const Matrix num = finite_diff_grad(
      [&](const Matrix& m) { return frobenius_inner(up, scaled_dot_attention(q, m, v)); }, k,
      1e-5);
  EXPECT_LT(frobenius_norm(add(g.k, scale(num, -1))) / frobenius_norm(num), 1e-4);
}

TEST(Mha, SingleHeadCollapsesToAttention) {
  const Matrix x = seeded_gaussian(5, 4, 12, 1.0);
  MhaParams p = random_mha(4, 1, 13);
  p.w_h = Matrix::identity(4);
  const auto proj = project_head(x, x, p.heads[0]);
  EXPECT_LT(max_abs_diff(mha_forward(x, x, p), scaled_dot_attention(proj.q, proj.k, proj.v)),
            1e-15);
}

TEST(Mha, DuplicateHeadsGiveDuplicateBlocks) {
  const Matrix x = seeded_gaussian(5, 4, 14, 1.0);
  MhaParams p = random_mha(4, 2, 15);
  p.heads[1] = p.heads[0];
  p.w_h = Matrix::identity(4);
  const Matrix out = mha_forward(x, x, p);
  for (std::size_t r = 0; r < 5; ++r) {
    EXPECT_EQ(out(r, 0), out(r, 2));
    EXPECT_EQ(out(r, 1), out(r, 3));
  }
}

TEST(Mha, MatchesHeadByHeadOracle) {
  const Matrix x = seeded_gaussian(7, 6, 16, 1.0);
  const Matrix y = seeded_gaussian(9, 6, 17, 1.0);
  const MhaParams p = random_mha(6, 3, 18);
  EXPECT_LT(max_abs_diff(mha_forward(x, y, p), reference::mha(x, y, p)), 1e-10);
}

TEST(RestrictionWindow, ClipsAtEdges) {
  const RestrictionWindow w{2, 1};
  EXPECT_EQ(w.size(), 4u);
  const auto first = w.clip(0, 6);
  EXPECT_EQ(first.begin, 0u);
  EXPECT_EQ(first.end, 2u);
  const auto mid = w.clip(3, 6);
  EXPECT_EQ(mid.begin, 1u);
  EXPECT_EQ(mid.end, 5u);
  const auto last = w.clip(5, 6);
  EXPECT_EQ(last.begin, 3u);
  EXPECT_EQ(last.end, 6u);
}

TEST(RestrictedMha, CoveringWindowEqualsFull) {
  const Matrix x = seeded_gaussian(8, 4, 19, 1.0);
  const MhaParams p = random_mha(4, 2, 20);
  EXPECT_LT(max_abs_diff(restricted_mha_forward(x, p, {7, 7}), mha_forward(x, x, p)), 1e-10);
}

TEST(RestrictedMha, WindowOfOneIgnoresOtherFrames) {
  const Matrix x = seeded_gaussian(6, 4, 21, 1.0);
  const MhaParams p = random_mha(4, 2, 22);
  const Matrix base = restricted_mha_forward(x, p, {0, 0});
  Matrix moved = x;
  for (double& v : moved.row(4)) v += 10;
  const Matrix out = restricted_mha_forward(moved, p, {0, 0});
  for (std::size_t r = 0; r < 6; ++r) {
    if (r == 4) continue;
    EXPECT_EQ(out.slice_rows(r, r + 1), base.slice_rows(r, r + 1));
  }
}

TEST(RestrictedMha, MatchesPerQuerySlicing) {
  const Matrix x = seeded_gaussian(6, 4, 23, 1.0);
  const MhaParams p = random_mha(4, 1, 24);
  const RestrictionWindow w{2, 1};
  MhaParams single = p;
  single.w_h = Matrix::identity(4);
  const Matrix got = restricted_mha_forward(x, single, w);
  const Matrix want = reference::restricted_head(x, p.heads[0], w);
  EXPECT_LT(max_abs_diff(got, want), 1e-10);
}

TEST(RestrictedMha, LedgerChargesClippedWindows) {
  const Matrix x = seeded_gaussian(8, 4, 25, 1.0);
  const MhaParams p = random_mha(4, 2, 26);
  MultiplyLedger ledger;
  restricted_mha_forward(x, p, {2, 2}, &ledger);
  // 40 window entries minus 6 clipped at each edge, times d_model.
  EXPECT_EQ(ledger.counted(), (8u * 5 - 6) * 4);
}

TEST(FeedForward, ZeroWeightsAndIdentity) {
  const Matrix x{{1, 2}, {0, 3}};
  FeedForwardParams zero{Matrix(2, 3), Matrix(1, 3), Matrix(3, 2), Matrix(1, 2)};
  EXPECT_EQ(ff_forward(x, zero), Matrix(2, 2));
  FeedForwardParams id{Matrix::identity(2), Matrix(1, 2), Matrix::identity(2), Matrix(1, 2)};
  EXPECT_EQ(ff_forward(x, id), x);
}

TEST(FeedForward, MatchesDirectFormula) {
  const Matrix x = seeded_gaussian(3, 4, 27, 1.0);
  FeedForwardParams p{seeded_gaussian(4, 5, 28, 1.0), seeded_gaussian(1, 5, 29, 1.0),
                      seeded_gaussian(5, 4, 30, 1.0), seeded_gaussian(1, 4, 31, 1.0)};
  const Matrix h = relu(add_row_bias(reference::matmul(x, p.w1), p.b1));
  EXPECT_LT(max_abs_diff(ff_forward(x, p), add_row_bias(reference::matmul(h, p.w2), p.b2)), 1e-12);
}

}  // namespace
}  // namespace dsa
