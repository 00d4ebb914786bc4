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
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dsa/dilation.hpp"
#include "dsa/encoder.hpp"

namespace dsa {

/// Multiplication counts of one self-attention layer (all heads).
///
/// Only query-key score products and the post-processing network are
/// counted; this is the same convention as MultiplyLedger, so an
/// instrumented forward pass must reproduce estimate_exact() exactly.
struct CostQuery {
  std::uint64_t n = 1;
  std::uint64_t d_model = 1;
  AttentionType type = AttentionType::full;
  std::uint64_t nu_lb = 0;
  std::uint64_t nu_la = 0;
  std::uint64_t m = 1;
  Mechanism mechanism = Mechanism::none;
  std::uint64_t b = 1;
  std::uint64_t d_in = 16;

  std::uint64_t window() const { return nu_lb + nu_la + 1; }
  /// Dilation sequence length, 0 without a mechanism.
  std::uint64_t dilation_length() const;

  /// Symmetric window of odd size r.
  static CostQuery symmetric(std::uint64_t n, std::uint64_t d_model, AttentionType type,
                             std::uint64_t r);
};

struct CostReport {
  std::uint64_t total = 0;
  std::uint64_t attention_term = 0;
  std::uint64_t xi_ap = 0;
  std::uint64_t xi_pp = 0;

  std::string display() const;
  friend bool operator==(const CostReport&, const CostReport&) = default;
};

/// total in millions with one decimal ("6.5M"). Rounds half away from zero
/// to 0.01M first and then to 0.1M, which is how the published tables were
/// rounded.
std::string format_millions(std::uint64_t total);

/// Closed-form counts: N^2 d, N R d, or N (R + ceil(N/M)) d + xi.
CostReport estimate_closed_form(const CostQuery& q);

/// Same terms, but with each query's window clipped at the sequence edges.
CostReport estimate_exact(const CostQuery& q);

enum class Preset { wsj, librispeech };
Preset parse_preset(std::string_view name);

struct TableRow {
  std::string label;
  std::optional<std::uint64_t> r;
  std::optional<std::uint64_t> m;
  CostReport report;
  std::optional<std::string> printed;  // value printed in the published table
};

/// Every row of the published table for the preset, computed with estimate_closed_form.
std::vector<TableRow> table_generate(Preset preset);
/// A single custom row.
TableRow table_row(const CostQuery& q);

/// Mechanism label as used in the tables ("subsampling", "MP", "AP-2+PP").
std::string mechanism_label(Mechanism m, std::uint64_t b);

std::string render_csv(const std::vector<TableRow>& rows);
std::string render_json(const std::vector<TableRow>& rows);
std::string render_markdown(const std::vector<TableRow>& rows);
std::vector<TableRow> parse_csv(std::string_view text);
std::vector<TableRow> parse_json(std::string_view text);

/// Per-frame cost of computing the next self-attention output in streaming
/// mode, after `past_seconds` of audio.
struct StreamingCost {
  std::uint64_t past_frames = 0;
  std::uint64_t baseline = 0;  // restricted, unbounded look-back
  std::uint64_t dilated = 0;
  double ratio = 1.0;          // baseline / dilated
};

/// Baseline: (past + nu_la + 1) d. Dilated: (clipped window + completed
/// chunks) d, plus one chunk's dilation cost when `chunk_event`.
StreamingCost streaming_report(double past_seconds, double frame_ms, const CostQuery& q,
                               bool chunk_event);

/// Reduction factors quoted for the streaming setup (4 s and 8 s of past audio).
struct PublishedStreamingFactors {
  double seconds;
  double without_chunk;
  double with_chunk;
};
inline constexpr PublishedStreamingFactors kPublishedStreamingFactors[] = {
    {4.0, 7.2, 1.25},
    {8.0, 11.8, 2.4},
};

}  // namespace dsa
