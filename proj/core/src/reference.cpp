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

#include "dsa/reference.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace dsa::reference {
namespace {

Matrix add_bias(Matrix m, const Matrix& bias) {
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) m(i, j) += bias(0, j);
  return m;
}

Matrix clamp_negative(Matrix m) {
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j)
      if (m(i, j) < 0.0) m(i, j) = 0.0;
  return m;
}

Matrix rows_of(const Matrix& m, std::size_t begin, std::size_t end) {
  Matrix out(end - begin, m.cols());
  for (std::size_t i = begin; i < end; ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out(i - begin, j) = m(i, j);
  return out;
}

Matrix stack(const Matrix& top, const Matrix& bottom) {
  Matrix out(top.rows() + bottom.rows(), top.cols());
  for (std::size_t i = 0; i < top.rows(); ++i)
    for (std::size_t j = 0; j < top.cols(); ++j) out(i, j) = top(i, j);
  for (std::size_t i = 0; i < bottom.rows(); ++i)
    for (std::size_t j = 0; j < top.cols(); ++j) out(top.rows() + i, j) = bottom(i, j);
  return out;
}

/// Chunk l of seq, zero-padded to m rows.
Matrix chunk(const Matrix& seq, std::size_t l, std::size_t m) {
  Matrix c(m, seq.cols());
  for (std::size_t r = 0; r < m; ++r) {
    const std::size_t t = l * m + r;
    if (t >= seq.rows()) break;
    for (std::size_t j = 0; j < seq.cols(); ++j) c(r, j) = seq(t, j);
  }
  return c;
}

Matrix normalize_rows(const Matrix& x, const Matrix& gain, const Matrix& bias) {
  Matrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < x.cols(); ++j) mean += x(i, j);
    mean /= static_cast<double>(x.cols());
    double var = 0.0;
    for (std::size_t j = 0; j < x.cols(); ++j) var += (x(i, j) - mean) * (x(i, j) - mean);
    var /= static_cast<double>(x.cols());
    for (std::size_t j = 0; j < x.cols(); ++j) {
      out(i, j) = (x(i, j) - mean) / std::sqrt(var + 1e-12) * gain(0, j) + bias(0, j);
    }
  }
  return out;
}

Matrix pp_branch(const std::vector<Matrix>& heads, std::size_t l, const Matrix& g_row,
                 const PpBranch& br) {
  const std::size_t d = heads.front().cols();
  Matrix joined(1, d * heads.size());
  for (std::size_t b = 0; b < heads.size(); ++b)
    for (std::size_t j = 0; j < d; ++j) joined(0, b * d + j) = heads[b](l, j);
  const Matrix hidden = clamp_negative(add_bias(reference::matmul(joined, br.w1), br.b1));
  Matrix out = add_bias(reference::matmul(hidden, br.w2), br.b2);
  for (std::size_t j = 0; j < out.cols(); ++j) out(0, j) += g_row(0, j);
  return out;
}

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw ShapeError("reference::matmul shape mismatch");
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      out(i, j) = s;
    }
  return out;
}

Matrix attention(const Matrix& q, const Matrix& k, const Matrix& v) {
  const double d_k = static_cast<double>(q.cols());
  Matrix out(q.rows(), v.cols());
  std::vector<double> w(k.rows());
  for (std::size_t i = 0; i < q.rows(); ++i) {
    for (std::size_t t = 0; t < k.rows(); ++t) {
      double s = 0.0;
      for (std::size_t j = 0; j < q.cols(); ++j) s += q(i, j) * k(t, j);
      w[t] = s / std::sqrt(d_k);
    }
    const double peak = *std::max_element(w.begin(), w.end());
    double z = 0.0;
    for (double& x : w) z += (x = std::exp(x - peak));
    for (std::size_t t = 0; t < k.rows(); ++t)
      for (std::size_t j = 0; j < v.cols(); ++j) out(i, j) += w[t] / z * v(t, j);
  }
  return out;
}

DilationSequences dilation(const Matrix& k, const Matrix& v, const DilationConfig& cfg,
                           const DilationParams& params) {
  const std::size_t m = cfg.chunk;
  const std::size_t n_chunks = (k.rows() + m - 1) / m;
  DilationSequences out{Matrix(n_chunks, k.cols()), Matrix(n_chunks, v.cols())};
  if (cfg.mechanism == Mechanism::none) return {Matrix(0, k.cols()), Matrix(0, v.cols())};

  std::vector<Matrix> heads_k, heads_v;
  if (cfg.uses_attention_pooling()) {
    heads_k.assign(cfg.heads, Matrix(n_chunks, k.cols()));
    heads_v.assign(cfg.heads, Matrix(n_chunks, v.cols()));
  }
  for (std::size_t l = 0; l < n_chunks; ++l) {
    const Matrix ck = chunk(k, l, m);
    const Matrix cv = chunk(v, l, m);
    switch (cfg.mechanism) {
      case Mechanism::subsample:
        for (std::size_t j = 0; j < k.cols(); ++j) out.delta_k(l, j) = ck(0, j);
        for (std::size_t j = 0; j < v.cols(); ++j) out.delta_v(l, j) = cv(0, j);
        break;
      case Mechanism::mean_pool: {
        const std::size_t real = std::min(m, k.rows() - l * m);
        const double denom =
            static_cast<double>(cfg.pad_divisor == PadDivisor::chunk_size ? m : real);
        for (std::size_t r = 0; r < m; ++r) {
          for (std::size_t j = 0; j < k.cols(); ++j) out.delta_k(l, j) += ck(r, j);
          for (std::size_t j = 0; j < v.cols(); ++j) out.delta_v(l, j) += cv(r, j);
        }
        for (std::size_t j = 0; j < k.cols(); ++j) out.delta_k(l, j) /= denom;
        for (std::size_t j = 0; j < v.cols(); ++j) out.delta_v(l, j) /= denom;
        break;
      }
      case Mechanism::attn_pool:
      case Mechanism::attn_pool_pp: {
        for (std::size_t b = 0; b < cfg.heads; ++b) {
          const Matrix q = rows_of(params.ap.query_embeddings, b, b + 1);
          const Matrix ak = attention(q, ck, ck);
          const Matrix av = attention(q, ck, cv);
          for (std::size_t j = 0; j < k.cols(); ++j) {
            heads_k[b](l, j) = ak(0, j);
            out.delta_k(l, j) += ak(0, j) / static_cast<double>(cfg.heads);
          }
          for (std::size_t j = 0; j < v.cols(); ++j) {
            heads_v[b](l, j) = av(0, j);
            out.delta_v(l, j) += av(0, j) / static_cast<double>(cfg.heads);
          }
        }
        break;
      }
      case Mechanism::none:
        break;
    }
  }
  if (cfg.mechanism == Mechanism::attn_pool_pp) {
    DilationSequences pp{Matrix(n_chunks, k.cols()), Matrix(n_chunks, v.cols())};
    for (std::size_t l = 0; l < n_chunks; ++l) {
      const Matrix pk = pp_branch(heads_k, l, rows_of(out.delta_k, l, l + 1), params.pp.key);
      const Matrix pv = pp_branch(heads_v, l, rows_of(out.delta_v, l, l + 1), params.pp.value);
      for (std::size_t j = 0; j < k.cols(); ++j) pp.delta_k(l, j) = pk(0, j);
      for (std::size_t j = 0; j < v.cols(); ++j) pp.delta_v(l, j) = pv(0, j);
    }
    return pp;
  }
  return out;
}

Matrix assemble_and_attend(const Matrix& q, const Matrix& k, const Matrix& v,
                           const RestrictionWindow& window, const Matrix& delta_k,
                           const Matrix& delta_v) {
  const std::size_t n_frames = k.rows();
  Matrix out(q.rows(), v.cols());
  for (std::size_t n = 0; n < q.rows(); ++n) {
    const std::size_t lo = n >= window.nu_lb ? n - window.nu_lb : 0;
    const std::size_t hi = std::min(n_frames - 1, n + window.nu_la);
    const Matrix keys = stack(rows_of(k, lo, hi + 1), delta_k);
    const Matrix values = stack(rows_of(v, lo, hi + 1), delta_v);
    const Matrix o = attention(rows_of(q, n, n + 1), keys, values);
    for (std::size_t j = 0; j < v.cols(); ++j) out(n, j) = o(0, j);
  }
  return out;
}

Matrix dilated_head(const Matrix& x, const HeadParams& head, const RestrictionWindow& window,
                    const DilationConfig& cfg, const DilationParams& params) {
  const Matrix q = reference::matmul(x, head.w_q);
  const Matrix k = reference::matmul(x, head.w_k);
  const Matrix v = reference::matmul(x, head.w_v);
  const DilationSequences d = dilation(k, v, cfg, params);
  return assemble_and_attend(q, k, v, window, d.delta_k, d.delta_v);
}

Matrix restricted_head(const Matrix& x, const HeadParams& head, const RestrictionWindow& window) {
  const Matrix k = reference::matmul(x, head.w_k);
  const Matrix v = reference::matmul(x, head.w_v);
  return assemble_and_attend(reference::matmul(x, head.w_q), k, v, window, Matrix(0, k.cols()),
                             Matrix(0, v.cols()));
}

namespace {

Matrix combine(const std::vector<Matrix>& heads, const Matrix& w_h) {
  std::size_t width = 0;
  for (const auto& h : heads) width += h.cols();
  Matrix joined(heads.front().rows(), width);
  std::size_t at = 0;
  for (const auto& h : heads) {
    for (std::size_t i = 0; i < h.rows(); ++i)
      for (std::size_t j = 0; j < h.cols(); ++j) joined(i, at + j) = h(i, j);
    at += h.cols();
  }
  return reference::matmul(joined, w_h);
}

}  // namespace

Matrix mha(const Matrix& x_q, const Matrix& x_kv, const MhaParams& params) {
  std::vector<Matrix> heads;
  for (const auto& h : params.heads) {
    heads.push_back(
        attention(reference::matmul(x_q, h.w_q), reference::matmul(x_kv, h.w_k), reference::matmul(x_kv, h.w_v)));
  }
  return combine(heads, params.w_h);
}

Matrix encoder(const Matrix& x, const EncoderWeights& w, const EncoderConfig& cfg) {
  Matrix h = reference::matmul(x, w.input_proj);
  for (std::size_t n = 0; n < h.rows(); ++n) {
    for (std::size_t i = 0; 2 * i < cfg.d_model; ++i) {
      const double angle =
          static_cast<double>(n) /
          std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(cfg.d_model));
      h(n, 2 * i) += std::sin(angle);
      h(n, 2 * i + 1) += std::cos(angle);
    }
  }
  for (const auto& layer : w.layers) {
    const Matrix normed = normalize_rows(h, layer.norm_mha_gain, layer.norm_mha_bias);
    std::vector<Matrix> heads;
    for (std::size_t i = 0; i < layer.mha.heads.size(); ++i) {
      const auto& hp = layer.mha.heads[i];
      switch (cfg.attention_type) {
        case AttentionType::full:
          heads.push_back(attention(reference::matmul(normed, hp.w_q), reference::matmul(normed, hp.w_k),
                                    reference::matmul(normed, hp.w_v)));
          break;
        case AttentionType::restricted:
          heads.push_back(restricted_head(normed, hp, cfg.window));
          break;
        case AttentionType::dilated:
          heads.push_back(dilated_head(normed, hp, cfg.window, cfg.dilation, layer.dilation[i]));
          break;
      }
    }
    const Matrix attended = combine(heads, layer.mha.w_h);
    for (std::size_t i = 0; i < h.rows(); ++i)
      for (std::size_t j = 0; j < h.cols(); ++j) h(i, j) += attended(i, j);

    const Matrix normed_ff = normalize_rows(h, layer.norm_ff_gain, layer.norm_ff_bias);
    const Matrix inner = clamp_negative(add_bias(reference::matmul(normed_ff, layer.ff.w1), layer.ff.b1));
    const Matrix ff = add_bias(reference::matmul(inner, layer.ff.w2), layer.ff.b2);
    for (std::size_t i = 0; i < h.rows(); ++i)
      for (std::size_t j = 0; j < h.cols(); ++j) h(i, j) += ff(i, j);
  }
  return h;
}

Matrix streaming_frame(const Matrix& x_prefix, std::size_t n, const HeadParams& head,
                       const RestrictionWindow& window, const DilationConfig& cfg,
                       const DilationParams& params) {
  const std::size_t visible = std::min(x_prefix.rows(), n + window.nu_la + 1);
  const Matrix x = rows_of(x_prefix, 0, visible);
  const Matrix q = reference::matmul(x, head.w_q);
  const Matrix k = reference::matmul(x, head.w_k);
  const Matrix v = reference::matmul(x, head.w_v);
  const std::size_t done = cfg.mechanism == Mechanism::none ? 0 : (n + 1) / cfg.chunk;
  Matrix dk(0, k.cols()), dv(0, v.cols());
  if (done > 0) {
    const DilationSequences d = dilation(k, v, cfg, params);
    dk = rows_of(d.delta_k, 0, done);
    dv = rows_of(d.delta_v, 0, done);
  }
  return rows_of(assemble_and_attend(q, k, v, window, dk, dv), n, n + 1);
}

}  // namespace dsa::reference
