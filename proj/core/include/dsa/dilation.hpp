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
#include <string>
#include <string_view>
#include <vector>

#include "dsa/attention.hpp"
#include "dsa/matrix.hpp"
#include "dsa/numerics.hpp"

namespace dsa {

/// How distant keys/values are summarized into the dilation sequence.
enum class Mechanism { none, subsample, mean_pool, attn_pool, attn_pool_pp };

std::string_view to_string(Mechanism m);
/// Accepts the names produced by to_string(); throws std::invalid_argument.
Mechanism parse_mechanism(std::string_view name);

/// Divisor used when mean-pooling the zero-padded final chunk.
enum class PadDivisor {
  chunk_size,    // always M; pad rows dilute the mean
  valid_frames,  // number of real frames in the chunk
};

struct DilationConfig {
  Mechanism mechanism = Mechanism::none;
  std::size_t chunk = 1;  // M
  std::size_t heads = 1;  // B, pooling queries per chunk
  std::size_t d_in = 16;  // post-processing bottleneck
  PadDivisor pad_divisor = PadDivisor::chunk_size;

  bool uses_attention_pooling() const {
    return mechanism == Mechanism::attn_pool || mechanism == Mechanism::attn_pool_pp;
  }
  friend bool operator==(const DilationConfig&, const DilationConfig&) = default;
};

/// Split of an n-frame sequence into ceil(n/m) chunks of m frames.
struct ChunkingPlan {
  std::size_t m = 1;
  std::size_t n = 0;
  std::size_t l = 0;
  std::size_t pad = 0;

  static ChunkingPlan make(std::size_t n, std::size_t m);
  /// Real (unpadded) frames in chunk `index`.
  std::size_t valid_frames(std::size_t index) const;
};

/// Learned pooling queries of one attention head, B x d_k.
struct ApParams {
  Matrix query_embeddings;
};

/// ReLU(a w1 + b1) w2 + b2 over the B concatenated pooling outputs.
struct PpBranch {
  Matrix w1;  // (d * B) x d_in
  Matrix b1;  // 1 x d_in
  Matrix w2;  // d_in x d
  Matrix b2;  // 1 x d
};

struct PpParams {
  PpBranch value;
  PpBranch key;
};

/// Dilation parameters owned by one attention head of one layer.
struct DilationParams {
  ApParams ap;
  PpParams pp;
};

struct DilationSequences {
  Matrix delta_k;  // L x d_k
  Matrix delta_v;  // L x d_v

  std::size_t length() const { return delta_k.rows(); }
};

struct AttnPoolResult {
  DilationSequences pooled;     // g: average over the B pooling heads
  std::vector<Matrix> heads_k;  // heads_k[b] is L x d_k
  std::vector<Matrix> heads_v;  // heads_v[b] is L x d_v
};

/// Chunk l holds frames [l*m, min((l+1)*m, N)); the last chunk is zero-padded
/// to m rows.
std::vector<Matrix> split_chunks(const Matrix& seq, std::size_t m);

/// First frame of every chunk.
DilationSequences dilate_subsample(const Matrix& k_seq, const Matrix& v_seq, std::size_t m);

/// Per-chunk mean over the padded chunk (see PadDivisor).
DilationSequences dilate_mean_pool(const Matrix& k_seq, const Matrix& v_seq, std::size_t m,
                                   PadDivisor divisor = PadDivisor::chunk_size);

/// Attention pooling: each embedding attends over the key chunk and the same
/// weights summarize both the key and the value chunk. Zero pad keys take part
/// in the softmax with score 0. Charges N * B * d_k score products.
AttnPoolResult dilate_attn_pool(const Matrix& k_seq, const Matrix& v_seq, std::size_t m,
                                const ApParams& ap, MultiplyLedger* ledger = nullptr);

/// p = FF(Concat_f(a_1 .. a_B)) + g for a single branch. All products are charged.
Matrix post_process_branch(std::span<const Matrix> raw_heads, const Matrix& pooled,
                           const PpBranch& branch, MultiplyLedger* ledger = nullptr);

DilationSequences post_process(const AttnPoolResult& pooled, const PpParams& pp,
                               MultiplyLedger* ledger = nullptr);

/// Dilation sequences of one head for the configured mechanism. Returns
/// zero-row sequences for Mechanism::none.
DilationSequences compute_dilation(const Matrix& k_seq, const Matrix& v_seq,
                                   const DilationConfig& cfg, const DilationParams& params,
                                   MultiplyLedger* ledger = nullptr);

/// Restricted self-attention of one head with the whole dilation sequence
/// appended to every query's windowed keys/values.
Matrix dilated_head_forward(const Matrix& x, const HeadParams& head,
                            const RestrictionWindow& window, const DilationConfig& cfg,
                            const DilationParams& params, MultiplyLedger* ledger = nullptr);

/// Multi-head variant; `per_head` holds one DilationParams per head.
Matrix dilated_mha_forward(const Matrix& x, const MhaParams& params,
                           const RestrictionWindow& window, const DilationConfig& cfg,
                           std::span<const DilationParams> per_head,
                           MultiplyLedger* ledger = nullptr);

/// Gradient of <upstream_k, delta_k> + <upstream_v, delta_v> of plain
/// attention pooling with respect to the query embeddings (B x d_k).
Matrix attn_pool_embedding_grad(const Matrix& k_seq, const Matrix& v_seq, std::size_t m,
                                const ApParams& ap, const Matrix& upstream_k,
                                const Matrix& upstream_v);

/// Chunks whose last frame is at or before frame n.
inline std::size_t completed_chunks(std::size_t n, std::size_t m) { return (n + 1) / m; }

/// Causal dilated attention output (1 x d_v) of frame n given the frames
/// received so far. The window is clipped to the received frames and only
/// chunks completed by frame n are summarized. Throws std::out_of_range when
/// n has not been received.
Matrix streaming_dilate(const Matrix& x_prefix, std::size_t n, const HeadParams& head,
                        const RestrictionWindow& window, const DilationConfig& cfg,
                        const DilationParams& params);

/// Checks AP/PP shapes against the config and head widths.
void validate(const DilationParams& params, const DilationConfig& cfg, std::size_t d_k,
              std::size_t d_v);

/// Incremental form of streaming_dilate for one head. Frames are pushed one
/// at a time; a chunk is summarized once, when its M-th frame arrives, and an
/// output for frame n is emitted as soon as frame n + nu_la is available.
class StreamingDilatedHead {
 public:
  struct Output {
    std::size_t frame = 0;
    std::vector<double> values;
  };

  StreamingDilatedHead(HeadParams head, RestrictionWindow window, DilationConfig cfg,
                       DilationParams params);

  std::vector<Output> push(std::span<const double> frame);
  /// End of stream: emits the remaining frames with a truncated look-ahead.
  std::vector<Output> finish();

  std::size_t frames_received() const { return received_; }
  std::size_t dilation_rows() const { return delta_k_.size() / d_k_; }

 private:
  Output emit(std::size_t n) const;

  HeadParams head_;
  RestrictionWindow window_;
  DilationConfig cfg_;
  DilationParams params_;
  std::size_t d_model_ = 0;
  std::size_t d_k_ = 0;
  std::size_t d_v_ = 0;
  std::size_t received_ = 0;
  std::size_t emitted_ = 0;
  std::vector<double> q_, k_, v_;
  std::vector<double> delta_k_, delta_v_;
};

}  // namespace dsa
