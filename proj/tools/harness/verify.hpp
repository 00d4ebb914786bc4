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
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace dsa::harness {

struct CheckResult {
  std::string name;
  bool passed = false;
  double max_error = 0.0;  // largest observed deviation (0 for exact checks)
  std::size_t cases = 0;
  std::string detail;
};

struct VerifyOptions {
  std::uint64_t seed = 7;
  std::size_t cases = 100;  // randomized cases per mechanism / gradient family
};

/// Dilated heads against the naive assemble-then-attend oracle, for every
/// mechanism over random N, M and windows.
std::vector<CheckResult> run_assembly_checks(const VerifyOptions& opts);
/// Full-coverage restricted / dilated-without-Δ attention against full attention.
std::vector<CheckResult> run_window_collapse_checks(const VerifyOptions& opts);
/// Zero AP embeddings == mean pooling, zero PP == AP, subsampling with M=1 == input.
std::vector<CheckResult> run_identity_checks(const VerifyOptions& opts);
/// The three groups above.
std::vector<CheckResult> run_oracle_suite(const VerifyOptions& opts);
/// Analytic gradients against central differences.
std::vector<CheckResult> run_gradient_suite(const VerifyOptions& opts);
/// Instrumented multiplication counts against the cost model.
std::vector<CheckResult> run_complexity_suite(const VerifyOptions& opts);
/// Causality, prefix equivalence and per-frame cost of the streaming mode.
std::vector<CheckResult> run_streaming_suite(const VerifyOptions& opts);

/// "all", "oracle", "gradients", "complexity" or "streaming"; throws
/// std::invalid_argument otherwise.
std::vector<CheckResult> run_suite(std::string_view suite, const VerifyOptions& opts);

/// One "PASS|FAIL name (cases, max err)" line per check.
void print_results(std::ostream& out, const std::vector<CheckResult>& results);
bool all_passed(const std::vector<CheckResult>& results);

/// Relative gradient error ||a - n|| / max(||a||, ||n||, 1e-3).
double gradient_rel_error(double diff_norm, double analytic_norm, double numeric_norm);

}  // namespace dsa::harness
