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

// Micro benchmarks of the attention kernels. `dsa bench` measures whole
// layers over a sequence-length sweep; these isolate the individual pieces.

#include <benchmark/benchmark.h>

#include <cmath>

#include "dsa/attention.hpp"
#include "dsa/dilation.hpp"
#include "dsa/numerics.hpp"

namespace {

constexpr std::size_t kDModel = 128;
constexpr std::size_t kDk = 32;

dsa::HeadParams make_head() {
  const double s = 1.0 / std::sqrt(static_cast<double>(kDModel));
  return {dsa::seeded_gaussian(kDModel, kDk, 1, s), dsa::seeded_gaussian(kDModel, kDk, 2, s),
          dsa::seeded_gaussian(kDModel, kDk, 3, s)};
}

dsa::DilationParams make_dilation(const dsa::DilationConfig& cfg) {
  dsa::DilationParams p;
  p.ap.query_embeddings = dsa::seeded_gaussian(cfg.heads, kDk, 4, 1.0);
  std::uint64_t seed = 5;
  for (dsa::PpBranch* b : {&p.pp.key, &p.pp.value}) {
    *b = {dsa::seeded_gaussian(kDk * cfg.heads, cfg.d_in, seed++, 0.2), dsa::Matrix(1, cfg.d_in),
          dsa::seeded_gaussian(cfg.d_in, kDk, seed++, 0.2), dsa::Matrix(1, kDk)};
  }
  return p;
}

void set_counters(benchmark::State& state, const dsa::MultiplyLedger& ledger) {
  state.counters["counted_mults"] = static_cast<double>(ledger.counted());
  state.SetComplexityN(state.range(0));
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const dsa::Matrix a = dsa::seeded_gaussian(n, n, 1, 1.0);
  const dsa::Matrix b = dsa::seeded_gaussian(n, n, 2, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(dsa::matmul(a, b));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Matmul)->RangeMultiplier(2)->Range(32, 256)->Complexity(benchmark::oNCubed);

void BM_FullAttention(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const dsa::Matrix q = dsa::seeded_gaussian(n, kDk, 1, 1.0);
  const dsa::Matrix k = dsa::seeded_gaussian(n, kDk, 2, 1.0);
  const dsa::Matrix v = dsa::seeded_gaussian(n, kDk, 3, 1.0);
  dsa::MultiplyLedger ledger;
  dsa::scaled_dot_attention(q, k, v, &ledger);
  for (auto _ : state) benchmark::DoNotOptimize(dsa::scaled_dot_attention(q, k, v));
  set_counters(state, ledger);
}
BENCHMARK(BM_FullAttention)->RangeMultiplier(2)->Range(256, 2048)->Complexity(benchmark::oNSquared);

void BM_RestrictedHead(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const dsa::Matrix q = dsa::seeded_gaussian(n, kDk, 1, 1.0);
  const dsa::Matrix k = dsa::seeded_gaussian(n, kDk, 2, 1.0);
  const dsa::Matrix v = dsa::seeded_gaussian(n, kDk, 3, 1.0);
  const dsa::RestrictionWindow window{12, 12};
  const dsa::Matrix none(0, kDk);
  dsa::MultiplyLedger ledger;
  dsa::windowed_attention(q, k, v, window, none, none, &ledger);
  for (auto _ : state) benchmark::DoNotOptimize(dsa::windowed_attention(q, k, v, window, none, none));
  set_counters(state, ledger);
}
BENCHMARK(BM_RestrictedHead)->RangeMultiplier(2)->Range(256, 4096)->Complexity(benchmark::oN);

// Dilated head with each mechanism; range(1) selects the mechanism.
void BM_DilatedHead(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  dsa::DilationConfig cfg;
  cfg.mechanism = static_cast<dsa::Mechanism>(state.range(1));
  cfg.chunk = 20;
  cfg.heads = 2;
  cfg.d_in = 16;
  const dsa::HeadParams head = make_head();
  const dsa::DilationParams params = make_dilation(cfg);
  const dsa::Matrix x = dsa::seeded_gaussian(n, kDModel, 7, 1.0);
  const dsa::RestrictionWindow window{12, 12};
  dsa::MultiplyLedger ledger;
  dsa::dilated_head_forward(x, head, window, cfg, params, &ledger);
  for (auto _ : state) {
    benchmark::DoNotOptimize(dsa::dilated_head_forward(x, head, window, cfg, params));
  }
  state.SetLabel(std::string(dsa::to_string(cfg.mechanism)));
  set_counters(state, ledger);
}
BENCHMARK(BM_DilatedHead)
    ->ArgsProduct({{256, 1024, 4096},
                   {static_cast<long>(dsa::Mechanism::subsample),
                    static_cast<long>(dsa::Mechanism::mean_pool),
                    static_cast<long>(dsa::Mechanism::attn_pool),
                    static_cast<long>(dsa::Mechanism::attn_pool_pp)}});

void BM_AttnPool(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const dsa::Matrix k = dsa::seeded_gaussian(n, kDk, 1, 1.0);
  const dsa::ApParams ap{dsa::seeded_gaussian(2, kDk, 2, 1.0)};
  for (auto _ : state) benchmark::DoNotOptimize(dsa::dilate_attn_pool(k, k, 20, ap));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_AttnPool)->RangeMultiplier(4)->Range(256, 4096)->Complexity(benchmark::oN);

}  // namespace

BENCHMARK_MAIN();
