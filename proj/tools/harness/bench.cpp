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

#include "harness/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "dsa/attention.hpp"
#include "dsa/numerics.hpp"

namespace dsa::harness {
namespace {

struct Layer {
  MhaParams mha;
  DilationConfig cfg;
  std::vector<DilationParams> dilation;
};

Layer make_layer(const BenchOptions& o) {
  Layer layer;
  const std::size_t d_k = o.d_model / o.d_h;
  const double s = 1.0 / std::sqrt(static_cast<double>(o.d_model));
  std::uint64_t seed = o.seed;
  auto next = [&](std::size_t r, std::size_t c) { return seeded_gaussian(r, c, seed++, s); };
  for (std::size_t h = 0; h < o.d_h; ++h) {
    layer.mha.heads.push_back({next(o.d_model, d_k), next(o.d_model, d_k), next(o.d_model, d_k)});
  }
  layer.mha.w_h = next(o.d_h * d_k, o.d_model);

  layer.cfg.mechanism = o.mechanism;
  layer.cfg.chunk = o.chunk;
  layer.cfg.heads = o.heads;
  layer.cfg.d_in = o.d_in;
  for (std::size_t h = 0; h < o.d_h; ++h) {
    DilationParams p;
    if (layer.cfg.uses_attention_pooling()) p.ap.query_embeddings = next(o.heads, d_k);
    if (o.mechanism == Mechanism::attn_pool_pp) {
      for (PpBranch* b : {&p.pp.key, &p.pp.value}) {
        *b = {next(d_k * o.heads, o.d_in), Matrix(1, o.d_in), next(o.d_in, d_k), Matrix(1, d_k)};
      }
    }
    layer.dilation.push_back(std::move(p));
  }
  return layer;
}

Matrix run_layer(const Matrix& x, const Layer& layer, AttentionType type,
                 const RestrictionWindow& window, MultiplyLedger* ledger) {
  switch (type) {
    case AttentionType::full:
      return mha_forward(x, x, layer.mha, ledger);
    case AttentionType::restricted:
      return restricted_mha_forward(x, layer.mha, window, ledger);
    case AttentionType::dilated:
      return dilated_mha_forward(x, layer.mha, window, layer.cfg, layer.dilation, ledger);
  }
  throw std::logic_error("unreachable attention type");
}

}  // namespace

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw std::invalid_argument("loglog_slope needs at least two paired points");
  }
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(x.size());
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  if (sxx == 0) throw std::invalid_argument("loglog_slope needs distinct x values");
  return sxy / sxx;
}

BenchReport run_bench(const BenchOptions& opts) {
  if (opts.repeats == 0) throw std::invalid_argument("repeats must be positive");
  if (opts.d_h == 0 || opts.d_model % opts.d_h != 0) {
    throw std::invalid_argument("d_model must be a multiple of d_h");
  }
  using clock = std::chrono::steady_clock;
  const Layer layer = make_layer(opts);

  struct Config {
    AttentionType type;
    std::size_t n;
    Matrix x;
    std::size_t loops = 1;
    std::uint64_t counted = 0;
    std::vector<double> samples;
  };
  std::vector<Config> configs;
  for (AttentionType type : opts.types) {
    for (std::size_t n : opts.n_list) {
      Config c{type, n, seeded_gaussian(n, opts.d_model, opts.seed + n, 1.0)};
      MultiplyLedger ledger;
      const auto w0 = clock::now();
      run_layer(c.x, layer, type, opts.window, &ledger);  // warm-up, discarded
      const double warm = std::chrono::duration<double>(clock::now() - w0).count();
      if (warm < opts.min_sample_seconds) {
        c.loops = static_cast<std::size_t>(std::ceil(opts.min_sample_seconds / std::max(warm, 1e-6)));
      }
      c.counted = ledger.counted();
      configs.push_back(std::move(c));
    }
  }

  // Repeats are interleaved across configurations so that a slow stretch of
  // the machine is spread over all of them instead of skewing one.
  for (std::size_t r = 0; r < opts.repeats; ++r) {
    for (auto& c : configs) {
      const auto t0 = clock::now();
      for (std::size_t i = 0; i < c.loops; ++i) {
        const Matrix y = run_layer(c.x, layer, c.type, opts.window, nullptr);
        if (y.rows() != c.n) throw std::logic_error("bench layer produced wrong shape");
      }
      c.samples.push_back(std::chrono::duration<double>(clock::now() - t0).count() /
                          static_cast<double>(c.loops));
    }
  }

  BenchReport report;
  for (AttentionType type : opts.types) {
    std::vector<double> ns, times, counts;
    for (auto& c : configs) {
      if (c.type != type) continue;
      std::sort(c.samples.begin(), c.samples.end());
      const std::size_t mid = c.samples.size() / 2;
      const double median = c.samples.size() % 2
                                ? c.samples[mid]
                                : 0.5 * (c.samples[mid - 1] + c.samples[mid]);
      report.points.push_back({type, c.n, median, c.counted});
      ns.push_back(static_cast<double>(c.n));
      times.push_back(std::max(median, 1e-9));
      counts.push_back(static_cast<double>(std::max<std::uint64_t>(c.counted, 1)));
    }
    if (ns.size() >= 2) {
      report.slopes.push_back({type, loglog_slope(ns, times), loglog_slope(ns, counts)});
    }
  }
  return report;
}

std::string render_bench_csv(const BenchReport& report) {
  std::ostringstream out;
  out << "type,N,median_seconds,counted\n";
  out << std::setprecision(6);
  for (const auto& p : report.points) {
    out << to_string(p.type) << ',' << p.n << ',' << p.median_seconds << ',' << p.counted << '\n';
  }
  for (const auto& s : report.slopes) {
    out << "# slope " << to_string(s.type) << " time=" << std::fixed << std::setprecision(3)
        << s.time_slope << " count=" << s.count_slope << std::defaultfloat << '\n';
  }
  return out.str();
}

std::string render_bench_json(const BenchReport& report) {
  nlohmann::ordered_json j;
  j["points"] = nlohmann::ordered_json::array();
  for (const auto& p : report.points) {
    j["points"].push_back({{"type", std::string(to_string(p.type))},
                           {"N", p.n},
                           {"median_seconds", p.median_seconds},
                           {"counted", p.counted}});
  }
  j["slopes"] = nlohmann::ordered_json::array();
  for (const auto& s : report.slopes) {
    j["slopes"].push_back({{"type", std::string(to_string(s.type))},
                           {"time_slope", s.time_slope},
                           {"count_slope", s.count_slope}});
  }
  return j.dump(2) + "\n";
}

std::string render_bench_markdown(const BenchReport& report) {
  std::ostringstream out;
  out << "| type | N | median (s) | counted |\n|---|---:|---:|---:|\n";
  out << std::setprecision(4);
  for (const auto& p : report.points) {
    out << "| " << to_string(p.type) << " | " << p.n << " | " << p.median_seconds << " | "
        << p.counted << " |\n";
  }
  out << "\n| type | time slope | count slope |\n|---|---:|---:|\n" << std::fixed
      << std::setprecision(3);
  for (const auto& s : report.slopes) {
    out << "| " << to_string(s.type) << " | " << s.time_slope << " | " << s.count_slope << " |\n";
  }
  return out.str();
}

}  // namespace dsa::harness
