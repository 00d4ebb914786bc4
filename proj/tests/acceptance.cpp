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

// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "dsa/complexity.hpp"
#include "harness/bench.hpp"
#include "harness/commands.hpp"
#include "harness/verify.hpp"

namespace {

using dsa::harness::CheckResult;

struct Outcome {
  bool passed = false;
  std::string detail;
};

struct Criterion {
  int id;
  const char* title;
  double time_limit_s;
  std::function<Outcome()> run;
};

std::string cli_stdout(std::vector<std::string> args, int& code) {
  args.insert(args.begin(), "dsa");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  code = dsa::harness::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return out.str();
}

Outcome from_checks(const std::vector<CheckResult>& checks) {
  Outcome o{dsa::harness::all_passed(checks), {}};
  std::ostringstream d;
  d << std::scientific << std::setprecision(2);
  for (const auto& c : checks) {
    if (!d.str().empty()) d << "; ";
    d << c.name << (c.passed ? "" : " FAILED") << " n=" << c.cases << " err=" << c.max_error;
  }
  o.detail = d.str();
  return o;
}

Outcome librispeech_table() {
  int code = 0;
  const auto rows = dsa::parse_csv(cli_stdout({"complexity", "--preset", "librispeech", "--format", "csv"}, code));
  const std::vector<std::string> want{"49.2M", "6.5M", "4.0M", "2.1M", "6.5M", "6.5M", "6.7M", "6.8M",
                                      "7.2M",  "7.6M", "6.6M", "3.3M", "3.3M", "3.5M", "3.5M"};
  Outcome o{code == 0 && rows.size() == want.size(), {}};
  std::string shown;
  for (std::size_t i = 0; i < rows.size() && i < want.size(); ++i) {
    const std::string got = rows[i].report.display();
    if (got != want[i]) o.passed = false;
    shown += (i ? " " : "") + got;
  }
  o.detail = shown + " (full-sequence formula 49.2M; published table prints 52M)";
  return o;
}

Outcome wsj_table() {
  int code = 0;
  const auto rows = dsa::parse_csv(cli_stdout({"complexity", "--preset", "wsj", "--format", "csv"}, code));
  const auto printed = dsa::table_generate(dsa::Preset::wsj);
  Outcome o{code == 0 && rows.size() == printed.size(), {}};
  double worst = 0;
  for (std::size_t i = 0; i < rows.size() && i < printed.size(); ++i) {
    if (!rows[i].r) continue;  // full-sequence row is not part of the criterion
    const double p = std::stod(*printed[i].printed) * 1e6;
    const double rel = std::fabs(static_cast<double>(rows[i].report.total) - p) / p;
    worst = std::max(worst, rel);
    if (rel > 0.10) o.passed = false;
  }
  std::ostringstream d;
  d << "worst relative deviation " << std::fixed << std::setprecision(2) << 100 * worst
    << "% over restricted/dilated rows";
  o.detail = d.str();
  return o;
}

Outcome scaling() {
  dsa::harness::BenchOptions opts;
  opts.types = {dsa::AttentionType::full, dsa::AttentionType::dilated};
  opts.repeats = 7;
  const auto report = dsa::harness::run_bench(opts);
  double full = 0, dilated = 0;
  for (const auto& s : report.slopes) {
    (s.type == dsa::AttentionType::full ? full : dilated) = s.time_slope;
  }
  std::ostringstream d;
  d << std::fixed << std::setprecision(3) << "full slope " << full << " (>= 1.7), dilated slope "
    << dilated << " (<= 1.3), N = 256..4096, R = 25, M = 20";
  return {full >= 1.7 && dilated <= 1.3, d.str()};
}

}  // namespace

int main() {
  using namespace dsa::harness;
  const VerifyOptions opts{.seed = 7, .cases = 100};
  const std::vector<Criterion> criteria{
      {1, "LibriSpeech complexity table", 1.0, librispeech_table},
      {2, "WSJ complexity table within 10%", 1.0, wsj_table},
      {3, "assembly-oracle equivalence <= 1e-10", 30.0,
       [&] { return from_checks(run_assembly_checks(opts)); }},
      {4, "window collapse <= 1e-10", 5.0,
       [&] { return from_checks(run_window_collapse_checks(opts)); }},
      {5, "gradient checks rel err < 1e-4", 30.0,
       [&] { return from_checks(run_gradient_suite(opts)); }},
      {6, "instrumented counts == estimate_exact", 30.0,
       [&] { return from_checks(run_complexity_suite(opts)); }},
      {7, "scaling slopes", 300.0, scaling},
      {8, "streaming causality, prefix equivalence, cost", 10.0,
       [&] { return from_checks(run_streaming_suite(opts)); }},
      {9, "reduction identities (exact)", 5.0,
       [&] { return from_checks(run_identity_checks(opts)); }},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs < c.time_limit_s;
    const bool ok = o.passed && in_time;
    failures += ok ? 0 : 1;
    std::cout << (ok ? "PASS" : "FAIL") << " criterion " << c.id << ": " << c.title << " ["
              << std::fixed << std::setprecision(2) << secs << " s / " << c.time_limit_s
              << " s limit" << (in_time ? "" : ", TOO SLOW") << "] " << o.detail << std::endl;
  }
  std::cout << (failures ? "FAILED " : "ALL PASSED ") << failures << " failing criteria" << std::endl;
  return failures ? 1 : 0;
}
