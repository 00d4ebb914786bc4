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

// Straight-line reference implementations used as test oracles. They share
// only the parameter structs with the library and deliberately re-derive
// every computation with naive loops: explicit key/value assembly, literal
// zero-padded chunks, plain left-to-right sums.

#include <cstddef>
#include <span>

#include "dsa/attention.hpp"
#include "dsa/dilation.hpp"
#include "dsa/encoder.hpp"
#include "dsa/matrix.hpp"

namespace dsa::reference {

Matrix matmul(const Matrix& a, const Matrix& b);

/// Softmax(q k^T / sqrt(d_k)) v evaluated by the textbook formula.
Matrix attention(const Matrix& q, const Matrix& k, const Matrix& v);

/// Literal per-chunk dilation over explicitly zero-padded chunks.
DilationSequences dilation(const Matrix& k, const Matrix& v, const DilationConfig& cfg,
                           const DilationParams& params);

/// For each query: build Concat_t(k[window], delta_k) as a fresh matrix and
/// attend over it.
Matrix assemble_and_attend(const Matrix& q, const Matrix& k, const Matrix& v,
                           const RestrictionWindow& window, const Matrix& delta_k,
                           const Matrix& delta_v);

Matrix dilated_head(const Matrix& x, const HeadParams& head, const RestrictionWindow& window,
                    const DilationConfig& cfg, const DilationParams& params);

Matrix restricted_head(const Matrix& x, const HeadParams& head, const RestrictionWindow& window);

Matrix mha(const Matrix& x_q, const Matrix& x_kv, const MhaParams& params);

/// Pre-norm encoder stack written out step by step.
Matrix encoder(const Matrix& x, const EncoderWeights& w, const EncoderConfig& cfg);

/// Causal output of frame n: window clipped to frames [0, n + nu_la] and Δ
/// limited to the chunks completed by frame n, computed on the full prefix.
Matrix streaming_frame(const Matrix& x_prefix, std::size_t n, const HeadParams& head,
                       const RestrictionWindow& window, const DilationConfig& cfg,
                       const DilationParams& params);

}  // namespace dsa::reference
