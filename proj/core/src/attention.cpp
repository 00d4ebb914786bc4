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

#include "dsa/attention.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace dsa {
namespace {

void check_qkv(const Matrix& q, const Matrix& k, const Matrix& v, const char* op) {
  if (k.rows() == 0) throw ShapeError(std::string(op) + ": empty key set");
  if (q.cols() != k.cols()) {
    throw ShapeError(std::string(op) + ": query " + q.shape_string() + " and key " +
                     k.shape_string() + " widths differ");
  }
  if (k.rows() != v.rows()) {
    throw ShapeError(std::string(op) + ": key " + k.shape_string() + " and value " +
                     v.shape_string() + " lengths differ");
  }
}

double score_scale(std::size_t d_k) { return 1.0 / std::sqrt(static_cast<double>(d_k)); }

}  // namespace

RestrictionWindow::Range RestrictionWindow::clip(std::size_t n, std::size_t length) const {
  Range r;
  r.begin = n > nu_lb ? n - nu_lb : 0;
  r.end = std::min(length, n + nu_la + 1);
  return r;
}

namespace detail {

void attend_query(std::span<const double> query, std::span<const RowBlock> keys,
                  std::span<const RowBlock> values, double scale, std::span<double> out,
                  std::vector<double>& scratch) {
  std::size_t total = 0;
  for (const auto& b : keys) total += b.rows;
  scratch.resize(total);
  std::size_t at = 0;
  for (const auto& b : keys) {
    for (std::size_t r = 0; r < b.rows; ++r) scratch[at++] = dot(query, b.row(r)) * scale;
  }
  softmax_inplace(scratch);
  std::fill(out.begin(), out.end(), 0.0);
  at = 0;
  for (const auto& b : values) {
    for (std::size_t r = 0; r < b.rows; ++r) {
      const double w = scratch[at++];
      auto row = b.row(r);
      for (std::size_t j = 0; j < out.size(); ++j) out[j] += w * row[j];
    }
  }
}

}  // namespace detail

Matrix scaled_dot_attention(const Matrix& q, const Matrix& k, const Matrix& v,
                            MultiplyLedger* ledger) {
  check_qkv(q, k, v, "scaled_dot_attention");
  Matrix out(q.rows(), v.cols());
  const RowBlock kb[] = {RowBlock::of(k)};
  const RowBlock vb[] = {RowBlock::of(v)};
  const double s = score_scale(q.cols());
  parallel_for(q.rows(), [&](std::size_t n) {
    thread_local std::vector<double> scratch;
    detail::attend_query(q.row(n), kb, vb, s, out.row(n), scratch);
  });
  charge(ledger, std::uint64_t{q.rows()} * k.rows() * q.cols());
  return out;
}

AttentionGrads attention_backward(const Matrix& q, const Matrix& k, const Matrix& v,
                                  const Matrix& upstream) {
  check_qkv(q, k, v, "attention_backward");
  if (upstream.rows() != q.rows() || upstream.cols() != v.cols()) {
    throw ShapeError("attention_backward: upstream " + upstream.shape_string() +
                     " does not match output " + std::to_string(q.rows()) + "x" +
                     std::to_string(v.cols()));
  }
  const double s = score_scale(q.cols());
  const Matrix weights = row_softmax(scale(matmul_transposed(q, k), s));
  const Matrix d_weights = matmul_transposed(upstream, v);

  Matrix d_scores(weights.rows(), weights.cols());
  for (std::size_t i = 0; i < weights.rows(); ++i) {
    const double centre = dot(d_weights.row(i), weights.row(i));
    for (std::size_t j = 0; j < weights.cols(); ++j) {
      d_scores(i, j) = weights(i, j) * (d_weights(i, j) - centre) * s;
    }
  }
  AttentionGrads g;
  g.q = matmul(d_scores, k);
  g.k = matmul(transpose(d_scores), q);
  g.v = matmul(transpose(weights), upstream);
  return g;
}

HeadProjections project_head(const Matrix& x_q, const Matrix& x_kv, const HeadParams& head) {
  return {matmul(x_q, head.w_q), matmul(x_kv, head.w_k), matmul(x_kv, head.w_v)};
}

Matrix combine_heads(std::span<const Matrix> head_outputs, const Matrix& w_h) {
  return matmul(concat_feature(head_outputs), w_h);
}

void validate(const MhaParams& params) {
  if (params.heads.empty()) throw ShapeError("multi-head attention needs at least one head");
  const std::size_t d_model = params.w_h.cols();
  std::size_t concat = 0;
  for (std::size_t i = 0; i < params.heads.size(); ++i) {
    const auto& h = params.heads[i];
    const std::string tag = "head " + std::to_string(i) + ": ";
    if (h.w_q.rows() != d_model || h.w_k.rows() != d_model || h.w_v.rows() != d_model) {
      throw ShapeError(tag + "projection input width must be d_model=" +
                       std::to_string(d_model));
    }
    if (h.w_q.cols() != h.w_k.cols()) {
      throw ShapeError(tag + "w_q " + h.w_q.shape_string() + " and w_k " +
                       h.w_k.shape_string() + " must share d_k");
    }
    concat += h.w_v.cols();
  }
  if (params.w_h.rows() != concat) {
    throw ShapeError("w_h " + params.w_h.shape_string() + " expects " + std::to_string(concat) +
                     " concatenated head features");
  }
}

namespace {

void check_model_input(const Matrix& x, const MhaParams& params, const char* what) {
  if (x.cols() != params.d_model()) {
    throw ShapeError(std::string(what) + " " + x.shape_string() + " does not have d_model=" +
                     std::to_string(params.d_model()) + " columns");
  }
}

}  // namespace

Matrix mha_forward(const Matrix& x_q, const Matrix& x_kv, const MhaParams& params,
                   MultiplyLedger* ledger) {
  validate(params);
  check_model_input(x_q, params, "mha_forward: query input");
  check_model_input(x_kv, params, "mha_forward: key/value input");
  std::vector<Matrix> heads;
  heads.reserve(params.heads.size());
  for (const auto& h : params.heads) {
    const auto p = project_head(x_q, x_kv, h);
    heads.push_back(scaled_dot_attention(p.q, p.k, p.v, ledger));
  }
  return combine_heads(heads, params.w_h);
}

Matrix windowed_attention(const Matrix& q, const Matrix& k, const Matrix& v,
                          const RestrictionWindow& window, const Matrix& extra_k,
                          const Matrix& extra_v, MultiplyLedger* ledger) {
  if (q.rows() != k.rows() || k.rows() != v.rows()) {
    throw ShapeError("windowed_attention: self-attention needs equal lengths, got q " +
                     q.shape_string() + ", k " + k.shape_string() + ", v " + v.shape_string());
  }
  if (q.cols() != k.cols()) {
    throw ShapeError("windowed_attention: query " + q.shape_string() + " and key " +
                     k.shape_string() + " widths differ");
  }
  if (extra_k.rows() != extra_v.rows() ||
      (extra_k.rows() > 0 && (extra_k.cols() != k.cols() || extra_v.cols() != v.cols()))) {
    throw ShapeError("windowed_attention: appended keys " + extra_k.shape_string() +
                     " / values " + extra_v.shape_string() + " do not match " +
                     k.shape_string() + " / " + v.shape_string());
  }
  const std::size_t n_frames = q.rows();
  Matrix out(n_frames, v.cols());
  const double s = score_scale(q.cols());
  parallel_for(n_frames, [&](std::size_t n) {
    thread_local std::vector<double> scratch;
    const auto r = window.clip(n, n_frames);
    const RowBlock kb[] = {RowBlock::of(k, r.begin, r.end), RowBlock::of(extra_k)};
    const RowBlock vb[] = {RowBlock::of(v, r.begin, r.end), RowBlock::of(extra_v)};
    detail::attend_query(q.row(n), kb, vb, s, out.row(n), scratch);
  });
  if (ledger != nullptr) {
    std::uint64_t keys = 0;
    for (std::size_t n = 0; n < n_frames; ++n) keys += window.clip(n, n_frames).size();
    keys += std::uint64_t{n_frames} * extra_k.rows();
    ledger->add(keys * q.cols());
  }
  return out;
}

Matrix restricted_mha_forward(const Matrix& x, const MhaParams& params,
                              const RestrictionWindow& window, MultiplyLedger* ledger) {
  validate(params);
  check_model_input(x, params, "restricted_mha_forward: input");
  if (x.rows() == 0) throw ShapeError("restricted_mha_forward: empty sequence");
  std::vector<Matrix> heads;
  heads.reserve(params.heads.size());
  for (const auto& h : params.heads) {
    const auto p = project_head(x, x, h);
    const Matrix none_k(0, p.k.cols());
    const Matrix none_v(0, p.v.cols());
    heads.push_back(windowed_attention(p.q, p.k, p.v, window, none_k, none_v, ledger));
  }
  return combine_heads(heads, params.w_h);
}

Matrix ff_forward(const Matrix& x, const FeedForwardParams& params) {
  const Matrix hidden = relu(add_row_bias(matmul(x, params.w1), params.b1));
  return add_row_bias(matmul(hidden, params.w2), params.b2);
}

}  // namespace dsa
