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

#include "dsa/dilation.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>

namespace dsa {
namespace {

void check_sequences(const Matrix& k_seq, const Matrix& v_seq, std::size_t m, const char* op) {
  if (m == 0) throw std::invalid_argument(std::string(op) + ": chunk size must be >= 1");
  if (k_seq.rows() == 0) throw ShapeError(std::string(op) + ": empty sequence");
  if (k_seq.rows() != v_seq.rows()) {
    throw ShapeError(std::string(op) + ": key " + k_seq.shape_string() + " and value " +
                     v_seq.shape_string() + " lengths differ");
  }
}

void check_branch(const PpBranch& b, std::size_t d, std::size_t heads, std::size_t d_in,
                  const char* name) {
  const auto bad = [&](const Matrix& m, std::size_t r, std::size_t c, const char* what) {
    if (m.rows() != r || m.cols() != c) {
      throw ShapeError(std::string("post-processing ") + name + "." + what + " is " +
                       m.shape_string() + ", expected " + std::to_string(r) + "x" +
                       std::to_string(c));
    }
  };
  bad(b.w1, d * heads, d_in, "w1");
  bad(b.b1, 1, d_in, "b1");
  bad(b.w2, d_in, d, "w2");
  bad(b.b2, 1, d, "b2");
}

}  // namespace

std::string_view to_string(Mechanism m) {
  switch (m) {
    case Mechanism::none: return "none";
    case Mechanism::subsample: return "subsample";
    case Mechanism::mean_pool: return "mean_pool";
    case Mechanism::attn_pool: return "attn_pool";
    case Mechanism::attn_pool_pp: return "attn_pool_pp";
  }
  return "none";
}

Mechanism parse_mechanism(std::string_view name) {
  for (auto m : {Mechanism::none, Mechanism::subsample, Mechanism::mean_pool,
                 Mechanism::attn_pool, Mechanism::attn_pool_pp}) {
    if (to_string(m) == name) return m;
  }
  throw std::invalid_argument("unknown dilation mechanism '" + std::string(name) + "'");
}

ChunkingPlan ChunkingPlan::make(std::size_t n, std::size_t m) {
  if (m == 0) throw std::invalid_argument("chunk size must be >= 1");
  ChunkingPlan p;
  p.m = m;
  p.n = n;
  p.l = (n + m - 1) / m;
  p.pad = p.l * m - n;
  return p;
}

std::size_t ChunkingPlan::valid_frames(std::size_t index) const {
  const std::size_t begin = index * m;
  return std::min(n, begin + m) - begin;
}

std::vector<Matrix> split_chunks(const Matrix& seq, std::size_t m) {
  if (seq.rows() == 0) throw ShapeError("split_chunks: empty sequence");
  const auto plan = ChunkingPlan::make(seq.rows(), m);
  std::vector<Matrix> chunks;
  chunks.reserve(plan.l);
  for (std::size_t l = 0; l < plan.l; ++l) {
    Matrix c(m, seq.cols());
    for (std::size_t r = 0; r < plan.valid_frames(l); ++r) {
      auto src = seq.row(l * m + r);
      std::copy(src.begin(), src.end(), c.row(r).begin());
    }
    chunks.push_back(std::move(c));
  }
  return chunks;
}

DilationSequences dilate_subsample(const Matrix& k_seq, const Matrix& v_seq, std::size_t m) {
  check_sequences(k_seq, v_seq, m, "dilate_subsample");
  const auto plan = ChunkingPlan::make(k_seq.rows(), m);
  DilationSequences d{Matrix(plan.l, k_seq.cols()), Matrix(plan.l, v_seq.cols())};
  for (std::size_t l = 0; l < plan.l; ++l) {
    std::ranges::copy(k_seq.row(l * m), d.delta_k.row(l).begin());
    std::ranges::copy(v_seq.row(l * m), d.delta_v.row(l).begin());
  }
  return d;
}

namespace {

Matrix mean_pool_one(const Matrix& seq, const ChunkingPlan& plan, PadDivisor divisor) {
  Matrix out(plan.l, seq.cols());
  for (std::size_t l = 0; l < plan.l; ++l) {
    const std::size_t valid = plan.valid_frames(l);
    auto o = out.row(l);
    for (std::size_t r = 0; r < valid; ++r) {
      auto src = seq.row(l * plan.m + r);
      for (std::size_t j = 0; j < o.size(); ++j) o[j] += src[j];
    }
    const double denom =
        static_cast<double>(divisor == PadDivisor::chunk_size ? plan.m : valid);
    for (double& x : o) x /= denom;
  }
  return out;
}

}  // namespace

DilationSequences dilate_mean_pool(const Matrix& k_seq, const Matrix& v_seq, std::size_t m,
                                   PadDivisor divisor) {
  check_sequences(k_seq, v_seq, m, "dilate_mean_pool");
  const auto plan = ChunkingPlan::make(k_seq.rows(), m);
  return {mean_pool_one(k_seq, plan, divisor), mean_pool_one(v_seq, plan, divisor)};
}

AttnPoolResult dilate_attn_pool(const Matrix& k_seq, const Matrix& v_seq, std::size_t m,
                                const ApParams& ap, MultiplyLedger* ledger) {
  check_sequences(k_seq, v_seq, m, "dilate_attn_pool");
  const Matrix& queries = ap.query_embeddings;
  const std::size_t n_heads = queries.rows();
  if (n_heads == 0) throw std::invalid_argument("dilate_attn_pool: B must be >= 1");
  if (queries.cols() != k_seq.cols()) {
    throw ShapeError("dilate_attn_pool: embeddings " + queries.shape_string() +
                     " do not match key width " + std::to_string(k_seq.cols()));
  }
  const auto plan = ChunkingPlan::make(k_seq.rows(), m);
  const double s = 1.0 / std::sqrt(static_cast<double>(k_seq.cols()));

  AttnPoolResult res;
  res.pooled = {Matrix(plan.l, k_seq.cols()), Matrix(plan.l, v_seq.cols())};
  res.heads_k.assign(n_heads, Matrix(plan.l, k_seq.cols()));
  res.heads_v.assign(n_heads, Matrix(plan.l, v_seq.cols()));

  std::vector<double> weights(m);
  for (std::size_t l = 0; l < plan.l; ++l) {
    const std::size_t valid = plan.valid_frames(l);
    const std::size_t first = l * m;
    for (std::size_t b = 0; b < n_heads; ++b) {
      // Pad keys are zero vectors: their score is exactly 0.
      std::fill(weights.begin(), weights.end(), 0.0);
      for (std::size_t r = 0; r < valid; ++r) {
        weights[r] = dot(queries.row(b), k_seq.row(first + r)) * s;
      }
      const double peak = *std::max_element(weights.begin(), weights.end());
      double total = 0.0;
      for (double& w : weights) total += (w = std::exp(w - peak));
      // Unnormalized accumulation then one division: uniform weights give
      // exactly the mean-pooling result.
      auto ak = res.heads_k[b].row(l);
      auto av = res.heads_v[b].row(l);
      for (std::size_t r = 0; r < valid; ++r) {
        auto kr = k_seq.row(first + r);
        auto vr = v_seq.row(first + r);
        for (std::size_t j = 0; j < ak.size(); ++j) ak[j] += weights[r] * kr[j];
        for (std::size_t j = 0; j < av.size(); ++j) av[j] += weights[r] * vr[j];
      }
      for (double& x : ak) x /= total;
      for (double& x : av) x /= total;
    }
    // g = a_0 + sum_b (a_b - a_0) / B, so identical heads average to a_0 exactly.
    auto average = [&](const std::vector<Matrix>& heads, std::span<double> g) {
      auto a0 = heads[0].row(l);
      for (std::size_t j = 0; j < g.size(); ++j) {
        double spread = 0.0;
        for (std::size_t b = 1; b < n_heads; ++b) spread += heads[b](l, j) - a0[j];
        g[j] = a0[j] + spread / static_cast<double>(n_heads);
      }
    };
    average(res.heads_k, res.pooled.delta_k.row(l));
    average(res.heads_v, res.pooled.delta_v.row(l));
  }
  charge(ledger, std::uint64_t{k_seq.rows()} * n_heads * k_seq.cols());
  return res;
}

Matrix post_process_branch(std::span<const Matrix> raw_heads, const Matrix& pooled,
                           const PpBranch& branch, MultiplyLedger* ledger) {
  const Matrix joined = concat_feature(raw_heads);
  if (joined.cols() != branch.w1.rows()) {
    throw ShapeError("post_process: concatenated heads " + joined.shape_string() +
                     " do not match w1 " + branch.w1.shape_string());
  }
  const Matrix hidden = relu(add_row_bias(matmul(joined, branch.w1, ledger, true), branch.b1));
  const Matrix ff = add_row_bias(matmul(hidden, branch.w2, ledger, true), branch.b2);
  if (ff.rows() != pooled.rows() || ff.cols() != pooled.cols()) {
    throw ShapeError("post_process: residual " + pooled.shape_string() +
                     " does not match feed-forward output " + ff.shape_string());
  }
  return add(ff, pooled);
}

DilationSequences post_process(const AttnPoolResult& pooled, const PpParams& pp,
                               MultiplyLedger* ledger) {
  return {post_process_branch(pooled.heads_k, pooled.pooled.delta_k, pp.key, ledger),
          post_process_branch(pooled.heads_v, pooled.pooled.delta_v, pp.value, ledger)};
}

void validate(const DilationParams& params, const DilationConfig& cfg, std::size_t d_k,
              std::size_t d_v) {
  if (cfg.chunk == 0) throw std::invalid_argument("dilation chunk size must be >= 1");
  if (!cfg.uses_attention_pooling()) return;
  if (cfg.heads == 0) throw std::invalid_argument("attention pooling needs B >= 1");
  const Matrix& q = params.ap.query_embeddings;
  if (q.rows() != cfg.heads || q.cols() != d_k) {
    throw ShapeError("pooling embeddings are " + q.shape_string() + ", expected " +
                     std::to_string(cfg.heads) + "x" + std::to_string(d_k));
  }
  if (cfg.mechanism == Mechanism::attn_pool_pp) {
    if (cfg.d_in == 0) throw std::invalid_argument("post-processing needs d_in >= 1");
    check_branch(params.pp.key, d_k, cfg.heads, cfg.d_in, "key");
    check_branch(params.pp.value, d_v, cfg.heads, cfg.d_in, "value");
  }
}

DilationSequences compute_dilation(const Matrix& k_seq, const Matrix& v_seq,
                                   const DilationConfig& cfg, const DilationParams& params,
                                   MultiplyLedger* ledger) {
  validate(params, cfg, k_seq.cols(), v_seq.cols());
  switch (cfg.mechanism) {
    case Mechanism::none:
      return {Matrix(0, k_seq.cols()), Matrix(0, v_seq.cols())};
    case Mechanism::subsample:
      return dilate_subsample(k_seq, v_seq, cfg.chunk);
    case Mechanism::mean_pool:
      return dilate_mean_pool(k_seq, v_seq, cfg.chunk, cfg.pad_divisor);
    case Mechanism::attn_pool:
      return dilate_attn_pool(k_seq, v_seq, cfg.chunk, params.ap, ledger).pooled;
    case Mechanism::attn_pool_pp:
      return post_process(dilate_attn_pool(k_seq, v_seq, cfg.chunk, params.ap, ledger),
                          params.pp, ledger);
  }
  throw std::logic_error("unhandled dilation mechanism");
}

Matrix dilated_head_forward(const Matrix& x, const HeadParams& head,
                            const RestrictionWindow& window, const DilationConfig& cfg,
                            const DilationParams& params, MultiplyLedger* ledger) {
  if (x.rows() == 0) throw ShapeError("dilated_head_forward: empty sequence");
  const auto p = project_head(x, x, head);
  const auto delta = compute_dilation(p.k, p.v, cfg, params, ledger);
  return windowed_attention(p.q, p.k, p.v, window, delta.delta_k, delta.delta_v, ledger);
}

Matrix dilated_mha_forward(const Matrix& x, const MhaParams& params,
                           const RestrictionWindow& window, const DilationConfig& cfg,
                           std::span<const DilationParams> per_head, MultiplyLedger* ledger) {
  validate(params);
  if (x.cols() != params.d_model()) {
    throw ShapeError("dilated_mha_forward: input " + x.shape_string() +
                     " does not have d_model=" + std::to_string(params.d_model()) + " columns");
  }
  if (per_head.size() != params.heads.size()) {
    throw ShapeError("dilated_mha_forward: " + std::to_string(per_head.size()) +
                     " dilation parameter sets for " + std::to_string(params.heads.size()) +
                     " heads");
  }
  std::vector<Matrix> heads;
  heads.reserve(params.heads.size());
  for (std::size_t i = 0; i < params.heads.size(); ++i) {
    heads.push_back(
        dilated_head_forward(x, params.heads[i], window, cfg, per_head[i], ledger));
  }
  return combine_heads(heads, params.w_h);
}

Matrix attn_pool_embedding_grad(const Matrix& k_seq, const Matrix& v_seq, std::size_t m,
                                const ApParams& ap, const Matrix& upstream_k,
                                const Matrix& upstream_v) {
  check_sequences(k_seq, v_seq, m, "attn_pool_embedding_grad");
  const auto plan = ChunkingPlan::make(k_seq.rows(), m);
  if (upstream_k.rows() != plan.l || upstream_k.cols() != k_seq.cols() ||
      upstream_v.rows() != plan.l || upstream_v.cols() != v_seq.cols()) {
    throw ShapeError("attn_pool_embedding_grad: upstream " + upstream_k.shape_string() + " / " +
                     upstream_v.shape_string() + " does not match dilation sequences");
  }
  const Matrix& queries = ap.query_embeddings;
  const double inv_b = 1.0 / static_cast<double>(queries.rows());
  const auto k_chunks = split_chunks(k_seq, m);
  const auto v_chunks = split_chunks(v_seq, m);
  Matrix grad(queries.rows(), queries.cols());
  for (std::size_t b = 0; b < queries.rows(); ++b) {
    const Matrix q = queries.slice_rows(b, b + 1);
    auto g = grad.row(b);
    for (std::size_t l = 0; l < plan.l; ++l) {
      const Matrix uk = scale(upstream_k.slice_rows(l, l + 1), inv_b);
      const Matrix uv = scale(upstream_v.slice_rows(l, l + 1), inv_b);
      const auto from_k = attention_backward(q, k_chunks[l], k_chunks[l], uk);
      const auto from_v = attention_backward(q, k_chunks[l], v_chunks[l], uv);
      for (std::size_t j = 0; j < g.size(); ++j) g[j] += from_k.q(0, j) + from_v.q(0, j);
    }
  }
  return grad;
}

Matrix streaming_dilate(const Matrix& x_prefix, std::size_t n, const HeadParams& head,
                        const RestrictionWindow& window, const DilationConfig& cfg,
                        const DilationParams& params) {
  if (n >= x_prefix.rows()) {
    throw std::out_of_range("streaming_dilate: frame " + std::to_string(n) +
                            " not received (have " + std::to_string(x_prefix.rows()) + ")");
  }
  const std::size_t visible = std::min(x_prefix.rows(), n + window.nu_la + 1);
  const Matrix x = x_prefix.slice_rows(0, visible);
  const auto p = project_head(x, x, head);

  DilationSequences delta{Matrix(0, p.k.cols()), Matrix(0, p.v.cols())};
  const std::size_t chunks = cfg.mechanism == Mechanism::none ? 0 : completed_chunks(n, cfg.chunk);
  if (chunks > 0) {
    const std::size_t frames = chunks * cfg.chunk;
    delta = compute_dilation(p.k.slice_rows(0, frames), p.v.slice_rows(0, frames), cfg, params);
  } else {
    validate(params, cfg, p.k.cols(), p.v.cols());
  }

  const auto r = window.clip(n, visible);
  const RowBlock kb[] = {RowBlock::of(p.k, r.begin, r.end), RowBlock::of(delta.delta_k)};
  const RowBlock vb[] = {RowBlock::of(p.v, r.begin, r.end), RowBlock::of(delta.delta_v)};
  Matrix out(1, p.v.cols());
  std::vector<double> scratch;
  detail::attend_query(p.q.row(n), kb, vb, 1.0 / std::sqrt(static_cast<double>(p.q.cols())),
                       out.row(0), scratch);
  return out;
}

StreamingDilatedHead::StreamingDilatedHead(HeadParams head, RestrictionWindow window,
                                           DilationConfig cfg, DilationParams params)
    : head_(std::move(head)),
      window_(window),
      cfg_(cfg),
      params_(std::move(params)),
      d_model_(head_.w_q.rows()),
      d_k_(head_.w_k.cols()),
      d_v_(head_.w_v.cols()) {
  if (head_.w_q.cols() != d_k_ || head_.w_k.rows() != d_model_ || head_.w_v.rows() != d_model_) {
    throw ShapeError("StreamingDilatedHead: inconsistent head projections");
  }
  validate(params_, cfg_, d_k_, d_v_);
}

std::vector<StreamingDilatedHead::Output> StreamingDilatedHead::push(
    std::span<const double> frame) {
  if (frame.size() != d_model_) {
    throw ShapeError("StreamingDilatedHead::push: frame has " + std::to_string(frame.size()) +
                     " features, expected " + std::to_string(d_model_));
  }
  const Matrix x = Matrix::row_vector(frame);
  const auto p = project_head(x, x, head_);
  q_.insert(q_.end(), p.q.values().begin(), p.q.values().end());
  k_.insert(k_.end(), p.k.values().begin(), p.k.values().end());
  v_.insert(v_.end(), p.v.values().begin(), p.v.values().end());
  ++received_;

  if (cfg_.mechanism != Mechanism::none && received_ % cfg_.chunk == 0) {
    const std::size_t first = received_ - cfg_.chunk;
    Matrix ck(cfg_.chunk, d_k_);
    Matrix cv(cfg_.chunk, d_v_);
    std::copy(k_.begin() + static_cast<std::ptrdiff_t>(first * d_k_), k_.end(),
              ck.values().begin());
    std::copy(v_.begin() + static_cast<std::ptrdiff_t>(first * d_v_), v_.end(),
              cv.values().begin());
    const auto d = compute_dilation(ck, cv, cfg_, params_);
    delta_k_.insert(delta_k_.end(), d.delta_k.values().begin(), d.delta_k.values().end());
    delta_v_.insert(delta_v_.end(), d.delta_v.values().begin(), d.delta_v.values().end());
  }

  std::vector<Output> out;
  while (emitted_ < received_ && emitted_ + window_.nu_la < received_) {
    out.push_back(emit(emitted_++));
  }
  return out;
}

std::vector<StreamingDilatedHead::Output> StreamingDilatedHead::finish() {
  std::vector<Output> out;
  while (emitted_ < received_) out.push_back(emit(emitted_++));
  return out;
}

StreamingDilatedHead::Output StreamingDilatedHead::emit(std::size_t n) const {
  const auto r = window_.clip(n, received_);
  const std::size_t chunks =
      cfg_.mechanism == Mechanism::none ? 0 : completed_chunks(n, cfg_.chunk);
  const RowBlock kb[] = {{k_.data() + r.begin * d_k_, r.size(), d_k_},
                         {delta_k_.data(), chunks, d_k_}};
  const RowBlock vb[] = {{v_.data() + r.begin * d_v_, r.size(), d_v_},
                         {delta_v_.data(), chunks, d_v_}};
  Output o;
  o.frame = n;
  o.values.resize(d_v_);
  std::vector<double> scratch;
  detail::attend_query({q_.data() + n * d_k_, d_k_}, kb, vb,
                       1.0 / std::sqrt(static_cast<double>(d_k_)), o.values, scratch);
  return o;
}

}  // namespace dsa
