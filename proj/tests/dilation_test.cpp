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

#include "dsa/dilation.hpp"
#include "dsa/reference.hpp"

namespace dsa {
namespace {

Matrix frames(std::size_t n, std::size_t d) {
  Matrix m(n, d);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) m(r, c) = static_cast<double>(10 * r + c + 1);
  return m;
}

HeadParams random_head(std::size_t d_model, std::size_t d_k, std::uint64_t seed) {
  return {seeded_gaussian(d_model, d_k, seed, 0.5), seeded_gaussian(d_model, d_k, seed + 1, 0.5),
          seeded_gaussian(d_model, d_k, seed + 2, 0.5)};
}

DilationParams random_params(const DilationConfig& cfg, std::size_t d, std::uint64_t seed) {
  DilationParams p;
  p.ap.query_embeddings = seeded_gaussian(cfg.heads, d, seed, 1.0);
  for (PpBranch* b : {&p.pp.key, &p.pp.value}) {
    *b = {seeded_gaussian(d * cfg.heads, cfg.d_in, ++seed, 0.5),
          seeded_gaussian(1, cfg.d_in, ++seed, 0.5), seeded_gaussian(cfg.d_in, d, ++seed, 0.5),
          seeded_gaussian(1, d, ++seed, 0.5)};
  }
  return p;
}

TEST(SplitChunks, PadsTheLastChunk) {
  const Matrix seq = frames(7, 2);
  const auto chunks = split_chunks(seq, 3);
  ASSERT_EQ(chunks.size(), 3u);
  EXPECT_EQ(chunks[0], seq.slice_rows(0, 3));
  EXPECT_EQ(chunks[1], seq.slice_rows(3, 6));
  EXPECT_EQ(chunks[2].slice_rows(0, 1), seq.slice_rows(6, 7));
  EXPECT_EQ(chunks[2].slice_rows(1, 3), Matrix(2, 2));

  const auto plan = ChunkingPlan::make(7, 3);
  EXPECT_EQ(plan.l, 3u);
  EXPECT_EQ(plan.pad, 2u);
  EXPECT_EQ(plan.valid_frames(2), 1u);
}

TEST(SplitChunks, ExactFitAndPartition) {
  EXPECT_EQ(split_chunks(frames(4, 2), 4).size(), 1u);
  const Matrix seq = frames(11, 3);
  const Matrix joined = concat_time(split_chunks(seq, 4));
  EXPECT_EQ(joined.slice_rows(0, 11), seq);
  EXPECT_THROW(split_chunks(seq, 0), std::invalid_argument);
}

TEST(Subsample, TakesFirstFrameOfEachChunk) {
  const Matrix seq = frames(7, 2);
  const auto d = dilate_subsample(seq, seq, 3);
  EXPECT_EQ(d.delta_k, (concat_time(std::vector<Matrix>{seq.slice_rows(0, 1), seq.slice_rows(3, 4),
                                                        seq.slice_rows(6, 7)})));
  EXPECT_EQ(dilate_subsample(seq, seq, 1).delta_v, seq);
  EXPECT_EQ(dilate_subsample(seq, seq, 9).delta_k, seq.slice_rows(0, 1));
}

TEST(MeanPool, AveragesChunks) {
  const Matrix c(6, 3, 2.5);
  EXPECT_EQ(dilate_mean_pool(c, c, 3).delta_k, Matrix(2, 3, 2.5));
  const Matrix chunk{{1, 2}, {3, 4}, {5, 6}};
  EXPECT_EQ(dilate_mean_pool(chunk, chunk, 3).delta_k, (Matrix{{3, 4}}));
}

TEST(MeanPool, PaddedChunkIsDiluted) {
  const Matrix seq = frames(4, 2);
  const auto d = dilate_mean_pool(seq, seq, 3);
  EXPECT_DOUBLE_EQ(d.delta_k(1, 0), seq(3, 0) / 3);
  EXPECT_DOUBLE_EQ(d.delta_k(1, 1), seq(3, 1) / 3);
  const auto valid = dilate_mean_pool(seq, seq, 3, PadDivisor::valid_frames);
  EXPECT_DOUBLE_EQ(valid.delta_k(1, 0), seq(3, 0));
}

TEST(AttnPool, ZeroEmbeddingsEqualMeanPool) {
  const Matrix k = seeded_gaussian(10, 3, 1, 1.0);
  const Matrix v = seeded_gaussian(10, 2, 2, 1.0);
  const auto ap = dilate_attn_pool(k, v, 4, ApParams{Matrix(2, 3)});
  const auto mp = dilate_mean_pool(k, v, 4);
  EXPECT_EQ(ap.pooled.delta_k, mp.delta_k);
  EXPECT_EQ(ap.pooled.delta_v, mp.delta_v);
}

TEST(AttnPool, SingleFrameChunks) {
  const Matrix k = seeded_gaussian(5, 3, 3, 1.0);
  const auto ap = dilate_attn_pool(k, k, 1, ApParams{seeded_gaussian(2, 3, 4, 1.0)});
  for (const auto& head : ap.heads_k) EXPECT_LT(max_abs_diff(head, k), 1e-15);
}

TEST(AttnPool, MatchesPerChunkOracleAndStaysInRange) {
  DilationConfig cfg;
  cfg.mechanism = Mechanism::attn_pool;
  cfg.chunk = 4;
  cfg.heads = 2;
  const Matrix k = seeded_gaussian(10, 3, 5, 1.0);
  const Matrix v = seeded_gaussian(10, 3, 6, 1.0);
  const DilationParams p = random_params(cfg, 3, 7);
  const auto got = dilate_attn_pool(k, v, 4, p.ap).pooled;
  const auto want = reference::dilation(k, v, cfg, p);
  EXPECT_LT(max_abs_diff(got.delta_k, want.delta_k), 1e-10);
  EXPECT_LT(max_abs_diff(got.delta_v, want.delta_v), 1e-10);
  // Last chunk holds frames 8, 9 and two zero pads.
  for (std::size_t c = 0; c < 3; ++c) {
    const double lo = std::min({v(8, c), v(9, c), 0.0});
    const double hi = std::max({v(8, c), v(9, c), 0.0});
    EXPECT_GE(got.delta_v(2, c), lo - 1e-12);
    EXPECT_LE(got.delta_v(2, c), hi + 1e-12);
  }
}

TEST(AttnPool, ChargesOnePassOverTheKeys) {
  MultiplyLedger ledger;
  dilate_attn_pool(Matrix(10, 3), Matrix(10, 2), 4, ApParams{Matrix(2, 3)}, &ledger);
  EXPECT_EQ(ledger.counted(), 10u * 2 * 3);
}

TEST(PostProcess, ZeroParametersKeepThePooledSequence) {
  const Matrix k = seeded_gaussian(9, 3, 8, 1.0);
  const auto pooled = dilate_attn_pool(k, k, 3, ApParams{seeded_gaussian(2, 3, 9, 1.0)});
  PpParams zero;
  zero.key = zero.value = {Matrix(6, 4), Matrix(1, 4), Matrix(4, 3), Matrix(1, 3)};
  const auto out = post_process(pooled, zero);
  EXPECT_EQ(out.delta_k, pooled.pooled.delta_k);
  EXPECT_EQ(out.delta_v, pooled.pooled.delta_v);
}

TEST(PostProcess, ZeroOutputWeightsAddTheBias) {
  const Matrix k = seeded_gaussian(6, 2, 10, 1.0);
  const auto pooled = dilate_attn_pool(k, k, 3, ApParams{seeded_gaussian(1, 2, 11, 1.0)});
  const Matrix raw[] = {pooled.heads_k[0]};
  const Matrix b2{{0.5, -1}};
  const PpBranch branch{seeded_gaussian(2, 4, 12, 1.0), seeded_gaussian(1, 4, 13, 1.0),
                        Matrix(4, 2), b2};
  const Matrix p = post_process_branch(raw, pooled.pooled.delta_k, branch);
  EXPECT_LT(max_abs_diff(p, add_row_bias(pooled.pooled.delta_k, b2)), 1e-15);
}

TEST(PostProcess, MatchesDirectOracle) {
  DilationConfig cfg;
  cfg.mechanism = Mechanism::attn_pool_pp;
  cfg.chunk = 3;
  cfg.heads = 2;
  cfg.d_in = 5;
  const Matrix k = seeded_gaussian(8, 3, 14, 1.0);
  const Matrix v = seeded_gaussian(8, 3, 15, 1.0);
  const DilationParams p = random_params(cfg, 3, 16);
  const auto got = compute_dilation(k, v, cfg, p);
  const auto want = reference::dilation(k, v, cfg, p);
  EXPECT_LT(max_abs_diff(got.delta_k, want.delta_k), 1e-10);
  EXPECT_LT(max_abs_diff(got.delta_v, want.delta_v), 1e-10);
}

TEST(DilatedHead, NoMechanismEqualsRestrictedHead) {
  const Matrix x = seeded_gaussian(9, 4, 17, 1.0);
  const HeadParams head = random_head(4, 3, 18);
  DilationConfig cfg;
  cfg.chunk = 4;
  const RestrictionWindow w{2, 1};
  EXPECT_LT(max_abs_diff(dilated_head_forward(x, head, w, cfg, {}),
                         reference::restricted_head(x, head, w)),
            1e-12);
}

TEST(DilatedHead, EveryMechanismMatchesAssemblyOracle) {
  const Matrix x = seeded_gaussian(12, 5, 19, 1.0);
  const HeadParams head = random_head(5, 3, 20);
  const RestrictionWindow w{2, 1};
  for (auto [mech, b] : {std::pair{Mechanism::subsample, 1}, {Mechanism::mean_pool, 1},
                         {Mechanism::attn_pool, 1}, {Mechanism::attn_pool, 2},
                         {Mechanism::attn_pool_pp, 2}}) {
    DilationConfig cfg;
    cfg.mechanism = mech;
    cfg.chunk = 4;
    cfg.heads = static_cast<std::size_t>(b);
    cfg.d_in = 4;
    const DilationParams p = random_params(cfg, 3, 21);
    const Matrix got = dilated_head_forward(x, head, w, cfg, p);
    EXPECT_LT(max_abs_diff(got, reference::dilated_head(x, head, w, cfg, p)), 1e-10)
        << to_string(mech) << " B=" << b;
  }
}

TEST(DilatedHead, RejectsMisshapenParameters) {
  DilationConfig cfg;
  cfg.mechanism = Mechanism::attn_pool;
  cfg.chunk = 2;
  cfg.heads = 2;
  DilationParams p;
  p.ap.query_embeddings = Matrix(1, 3);
  EXPECT_THROW(dilated_head_forward(Matrix(4, 4), random_head(4, 3, 22), {1, 1}, cfg, p),
               ShapeError);
}

TEST(Mechanism, NamesRoundTrip) {
  for (auto m : {Mechanism::none, Mechanism::subsample, Mechanism::mean_pool,
                 Mechanism::attn_pool, Mechanism::attn_pool_pp}) {
    EXPECT_EQ(parse_mechanism(to_string(m)), m);
  }
  EXPECT_THROW(parse_mechanism("max_pool"), std::invalid_argument);
}

class StreamingTest : public ::testing::Test {
 protected:
  void SetUp() override {
    cfg.mechanism = Mechanism::attn_pool_pp;
    cfg.chunk = 3;
    cfg.heads = 2;
    cfg.d_in = 4;
    params = random_params(cfg, 3, 30);
  }
  Matrix x = seeded_gaussian(14, 4, 31, 1.0);
  HeadParams head = random_head(4, 3, 32);
  RestrictionWindow window{4, 1};
  DilationConfig cfg;
  DilationParams params;
};

TEST_F(StreamingTest, FutureFramesDoNotMatter) {
  const std::size_t n = 6;
  const Matrix base = streaming_dilate(x, n, head, window, cfg, params);
  Matrix moved = x;
  for (std::size_t t = n + window.nu_la + 1; t < x.rows(); ++t)
    for (double& v : moved.row(t)) v = -v + 3;
  EXPECT_EQ(streaming_dilate(moved, n, head, window, cfg, params), base);
  EXPECT_EQ(streaming_dilate(x.slice_rows(0, n + 2), n, head, window, cfg, params), base);
}

TEST_F(StreamingTest, NoCompletedChunkIsRestrictedAttention) {
  const Matrix got = streaming_dilate(x, 1, head, window, cfg, params);
  const Matrix prefix = x.slice_rows(0, 3);
  const Matrix want = reference::restricted_head(prefix, head, window).slice_rows(1, 2);
  EXPECT_LT(max_abs_diff(got, want), 1e-12);
}

TEST_F(StreamingTest, TwoCompletedChunksMatchOfflinePrefix) {
  const std::size_t n = 2 * cfg.chunk + 1;
  EXPECT_EQ(completed_chunks(n, cfg.chunk), 2u);
  const Matrix got = streaming_dilate(x, n, head, window, cfg, params);
  EXPECT_LT(max_abs_diff(got, reference::streaming_frame(x, n, head, window, cfg, params)), 1e-10);
}

TEST_F(StreamingTest, IncrementalHeadMatches) {
  StreamingDilatedHead stream(head, window, cfg, params);
  std::vector<StreamingDilatedHead::Output> out;
  for (std::size_t t = 0; t < x.rows(); ++t) {
    for (auto& o : stream.push(x.row(t))) out.push_back(std::move(o));
    EXPECT_EQ(stream.dilation_rows(), (t + 1) / cfg.chunk);
  }
  for (auto& o : stream.finish()) out.push_back(std::move(o));
  ASSERT_EQ(out.size(), x.rows());
  for (std::size_t n = 0; n < x.rows(); ++n) {
    EXPECT_EQ(out[n].frame, n);
    EXPECT_LT(max_abs_diff(Matrix::row_vector(out[n].values),
                           streaming_dilate(x, n, head, window, cfg, params)),
              1e-12);
  }
}

TEST_F(StreamingTest, UnreceivedFrameThrows) {
  EXPECT_THROW(streaming_dilate(x.slice_rows(0, 3), 3, head, window, cfg, params),
               std::out_of_range);
}

}  // namespace
}  // namespace dsa
