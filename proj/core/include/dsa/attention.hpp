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

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dsa/matrix.hpp"
#include "dsa/numerics.hpp"

namespace dsa {

/// Per-head projections. w_q and w_k share their column count d_k.
struct HeadParams {
  Matrix w_q;  // d_model x d_k
  Matrix w_k;  // d_model x d_k
  Matrix w_v;  // d_model x d_v
};

struct MhaParams {
  std::vector<HeadParams> heads;
  Matrix w_h;  // (heads * d_v) x d_model

  std::size_t d_model() const { return w_h.cols(); }
};

/// Look-back / look-ahead frame counts of restricted self-attention.
struct RestrictionWindow {
  std::size_t nu_lb = 0;
  std::size_t nu_la = 0;

  /// Half-open frame range [begin, end).
  struct Range {
    std::size_t begin = 0;
    std::size_t end = 0;
    std::size_t size() const { return end - begin; }
  };

  std::size_t size() const { return nu_lb + nu_la + 1; }

  /// Window of query frame n clipped to a sequence of `length` frames.
  Range clip(std::size_t n, std::size_t length) const;

  /// A window that never clips anything out of an `n`-frame sequence.
  static RestrictionWindow covering(std::size_t n) { return {n, n}; }

  friend bool operator==(const RestrictionWindow&, const RestrictionWindow&) = default;
};

struct FeedForwardParams {
  Matrix w1;  // d_model x d_ff
  Matrix b1;  // 1 x d_ff
  Matrix w2;  // d_ff x d_model
  Matrix b2;  // 1 x d_model
};

struct AttentionGrads {
  Matrix q;
  Matrix k;
  Matrix v;
};

/// Softmax(q k^T / sqrt(d_k)) v. Score products are charged to the ledger.
Matrix scaled_dot_attention(const Matrix& q, const Matrix& k, const Matrix& v,
                            MultiplyLedger* ledger = nullptr);

/// Gradients of <upstream, scaled_dot_attention(q, k, v)>.
AttentionGrads attention_backward(const Matrix& q, const Matrix& k, const Matrix& v,
                                  const Matrix& upstream);

struct HeadProjections {
  Matrix q;
  Matrix k;
  Matrix v;
};

HeadProjections project_head(const Matrix& x_q, const Matrix& x_kv, const HeadParams& head);

/// Concat_f(head outputs) * w_h.
Matrix combine_heads(std::span<const Matrix> head_outputs, const Matrix& w_h);

Matrix mha_forward(const Matrix& x_q, const Matrix& x_kv, const MhaParams& params,
                   MultiplyLedger* ledger = nullptr);

/// Self-attention where query n sees only frames window.clip(n, N).
Matrix restricted_mha_forward(const Matrix& x, const MhaParams& params,
                              const RestrictionWindow& window,
                              MultiplyLedger* ledger = nullptr);

/// Per query n: attention over Concat_t(k[window.clip(n)], extra_k) and the
/// matching values. `extra_k`/`extra_v` may have zero rows. The windowed
/// slice is gathered per query, so only the scores actually formed are
/// charged: sum_n (|window_n| + extra_k.rows) * d_k.
Matrix windowed_attention(const Matrix& q, const Matrix& k, const Matrix& v,
                          const RestrictionWindow& window, const Matrix& extra_k,
                          const Matrix& extra_v, MultiplyLedger* ledger = nullptr);

/// ReLU(x w1 + b1) w2 + b2.
Matrix ff_forward(const Matrix& x, const FeedForwardParams& params);

/// Throws ShapeError unless the parameter shapes are mutually consistent.
void validate(const MhaParams& params);

namespace detail {

/// Attends one query over a sequence of key blocks (and the parallel value
/// blocks) and writes the result to `out`. `scratch` is reused for scores.
void attend_query(std::span<const double> query, std::span<const RowBlock> keys,
                  std::span<const RowBlock> values, double scale, std::span<double> out,
                  std::vector<double>& scratch);

}  // namespace detail
}  // namespace dsa
