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
#include <string>
#include <vector>

#include "dsa/dilation.hpp"
#include "dsa/encoder.hpp"

namespace dsa::harness {

/// Timing setup: one multi-head self-attention layer (projections included).
struct BenchOptions {
  std::vector<std::size_t> n_list{256, 512, 1024, 2048, 4096};
  std::vector<AttentionType> types{AttentionType::full, AttentionType::restricted,
                                   AttentionType::dilated};
  std::size_t repeats = 3;
  double min_sample_seconds = 0.2;  // short runs are looped to at least this long
  std::size_t d_model = 128;
  std::size_t d_h = 4;
  RestrictionWindow window{12, 12};  // R = 25
  std::size_t chunk = 20;
  Mechanism mechanism = Mechanism::attn_pool_pp;
  std::size_t heads = 2;
  std::size_t d_in = 16;
  std::uint64_t seed = 1;
};

struct BenchPoint {
  AttentionType type;
  std::size_t n = 0;
  double median_seconds = 0.0;
  std::uint64_t counted = 0;  // ledger count of one forward pass
};

struct BenchSlope {
  AttentionType type;
  double time_slope = 0.0;   // least-squares slope of log(time) on log(N)
  double count_slope = 0.0;  // same for the counted multiplications
};

struct BenchReport {
  std::vector<BenchPoint> points;
  std::vector<BenchSlope> slopes;
};

/// Median of `repeats` timed samples per (type, N) after one discarded warm-up.
/// A sample loops the layer until it lasts min_sample_seconds and reports the
/// time per pass.
BenchReport run_bench(const BenchOptions& opts);

/// Least-squares slope of log(y) against log(x).
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

std::string render_bench_csv(const BenchReport& report);
std::string render_bench_json(const BenchReport& report);
std::string render_bench_markdown(const BenchReport& report);

}  // namespace dsa::harness
