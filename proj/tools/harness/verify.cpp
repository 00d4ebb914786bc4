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

#include "harness/verify.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <iomanip>
#include <random>
#include <sstream>
#include <stdexcept>

#include "dsa/attention.hpp"
#include "dsa/complexity.hpp"
#include "dsa/dilation.hpp"
#include "dsa/numerics.hpp"
#include "dsa/reference.hpp"

namespace dsa::harness {
namespace {

constexpr double kOracleTolerance = 1e-10;
constexpr double kGradientTolerance = 1e-4;
constexpr double kFiniteDiffStep = 1e-5;

/// Deterministic source of random shapes and matrices for one check.
class CaseRng {
 public:
  explicit CaseRng(std::uint64_t seed) : engine_(seed) {}

  std::size_t uniform(std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(engine_);
  }
  Matrix gaussian(std::size_t rows, std::size_t cols, double stddev = 1.0) {
    return seeded_gaussian(rows, cols, engine_(), stddev);
  }

 private:
  std::mt19937_64 engine_;
};

HeadParams random_head(CaseRng& rng, std::size_t d_model, std::size_t d_k, std::size_t d_v) {
  const double s = 1.0 / std::sqrt(static_cast<double>(d_model));
  return {rng.gaussian(d_model, d_k, s), rng.gaussian(d_model, d_k, s),
          rng.gaussian(d_model, d_v, s)};
}

PpBranch random_branch(CaseRng& rng, std::size_t d, std::size_t heads, std::size_t d_in) {
  return {rng.gaussian(d * heads, d_in, 0.5), rng.gaussian(1, d_in, 0.5),
          rng.gaussian(d_in, d, 0.5), rng.gaussian(1, d, 0.5)};
}

DilationParams random_dilation(CaseRng& rng, const DilationConfig& cfg, std::size_t d_k,
                               std::size_t d_v) {
  DilationParams p;
  if (cfg.uses_attention_pooling()) p.ap.query_embeddings = rng.gaussian(cfg.heads, d_k);
  if (cfg.mechanism == Mechanism::attn_pool_pp) {
    p.pp.key = random_branch(rng, d_k, cfg.heads, cfg.d_in);
    p.pp.value = random_branch(rng, d_v, cfg.heads, cfg.d_in);
  }
  return p;
}

MhaParams random_mha(CaseRng& rng, std::size_t d_model, std::size_t d_h) {
  MhaParams p;
  const std::size_t d_k = d_model / d_h;
  for (std::size_t i = 0; i < d_h; ++i) p.heads.push_back(random_head(rng, d_model, d_k, d_k));
  p.w_h = rng.gaussian(d_h * d_k, d_model, 1.0 / std::sqrt(static_cast<double>(d_model)));
  return p;
}

struct MechanismCase {
  const char* name;
  Mechanism mechanism;
  std::size_t heads;
};

constexpr MechanismCase kMechanisms[] = {
    {"subsample", Mechanism::subsample, 1}, {"mean_pool", Mechanism::mean_pool, 1},
    {"AP-1", Mechanism::attn_pool, 1},      {"AP-2", Mechanism::attn_pool, 2},
    {"AP-2+PP", Mechanism::attn_pool_pp, 2},
};

class Tracker {
 public:
  explicit Tracker(std::string name, double tolerance) : name_(std::move(name)), tol_(tolerance) {}

  void observe(double err) {
    ++cases_;
    if (std::isnan(err) || err > worst_) worst_ = std::isnan(err) ? INFINITY : err;
  }
  void fail(std::string why) {
    ok_ = false;
    if (detail_.empty()) detail_ = std::move(why);
  }
  CheckResult result(std::string detail = {}) const {
    CheckResult r;
    r.name = name_;
    r.cases = cases_;
    r.max_error = worst_;
    r.passed = ok_ && worst_ <= tol_;
    r.detail = detail_.empty() ? std::move(detail) : detail_;
    return r;
  }

 private:
  std::string name_;
  double tol_;
  double worst_ = 0.0;
  std::size_t cases_ = 0;
  bool ok_ = true;
  std::string detail_;
};

}  // namespace

double gradient_rel_error(double diff_norm, double analytic_norm, double numeric_norm) {
  return diff_norm / std::max({analytic_norm, numeric_norm, 1e-3});
}

std::vector<CheckResult> run_assembly_checks(const VerifyOptions& opts) {
  std::vector<CheckResult> out;
  for (const auto& mc : kMechanisms) {
    Tracker t(std::string("assembly[") + mc.name + "]", kOracleTolerance);
    CaseRng rng(opts.seed * 1000003 + static_cast<std::uint64_t>(mc.mechanism) * 31 + mc.heads);
    for (std::size_t c = 0; c < opts.cases; ++c) {
      const std::size_t n = rng.uniform(1, 64);
      DilationConfig cfg;
      cfg.mechanism = mc.mechanism;
      cfg.heads = mc.heads;
      cfg.chunk = rng.uniform(1, n + 2);
      cfg.d_in = rng.uniform(1, 6);
      const RestrictionWindow window{rng.uniform(0, n), rng.uniform(0, n)};
      const std::size_t d_model = rng.uniform(1, 8);
      const std::size_t d_k = rng.uniform(1, 6);
      const std::size_t d_v = rng.uniform(1, 6);
      const HeadParams head = random_head(rng, d_model, d_k, d_v);
      const DilationParams params = random_dilation(rng, cfg, d_k, d_v);
      const Matrix x = rng.gaussian(n, d_model);

      const Matrix got = dilated_head_forward(x, head, window, cfg, params);
      const Matrix want = reference::dilated_head(x, head, window, cfg, params);
      t.observe(max_abs_diff(got, want));

      const auto p = project_head(x, x, head);
      const auto delta = compute_dilation(p.k, p.v, cfg, params);
      if (delta.length() != (n + cfg.chunk - 1) / cfg.chunk) {
        t.fail("dilation length " + std::to_string(delta.length()) + " != ceil(N/M)");
      }
    }
    out.push_back(t.result("N in [1,64], M in [1,N+2], windows in [0,N]^2"));
  }
  return out;
}

std::vector<CheckResult> run_window_collapse_checks(const VerifyOptions& opts) {
  Tracker restricted("window_collapse[restricted==full]", kOracleTolerance);
  Tracker dilated("window_collapse[dilated_empty_delta==full]", kOracleTolerance);
  Tracker oracle("window_collapse[full==reference]", kOracleTolerance);
  CaseRng rng(opts.seed * 7919 + 17);
  const std::size_t instances = std::max<std::size_t>(50, opts.cases / 2);
  for (std::size_t c = 0; c < instances; ++c) {
    const std::size_t n = rng.uniform(1, 32);
    const std::size_t d_h = rng.uniform(1, 3);
    const std::size_t d_model = d_h * rng.uniform(1, 4);
    const MhaParams mha = random_mha(rng, d_model, d_h);
    const Matrix x = rng.gaussian(n, d_model);
    const RestrictionWindow window{n - 1 + rng.uniform(0, 3), n - 1 + rng.uniform(0, 3)};

    const Matrix full = mha_forward(x, x, mha);
    restricted.observe(max_abs_diff(restricted_mha_forward(x, mha, window), full));

    DilationConfig none;
    none.chunk = rng.uniform(1, n + 2);
    const std::vector<DilationParams> per_head(d_h);
    dilated.observe(max_abs_diff(dilated_mha_forward(x, mha, window, none, per_head), full));
    oracle.observe(max_abs_diff(full, reference::mha(x, x, mha)));
  }
  return {restricted.result(), dilated.result(), oracle.result()};
}

std::vector<CheckResult> run_identity_checks(const VerifyOptions& opts) {
  Tracker zero_ap("identity[AP(zero embeddings)==mean_pool]", 0.0);
  Tracker zero_pp("identity[PP(zero params)==AP]", 0.0);
  Tracker sub_m1("identity[subsample(M=1)==sequence]", 0.0);
  CaseRng rng(opts.seed * 104729 + 3);
  for (std::size_t c = 0; c < opts.cases; ++c) {
    const std::size_t n = rng.uniform(1, 40);
    const std::size_t m = rng.uniform(1, n + 2);
    const std::size_t d_k = rng.uniform(1, 6);
    const std::size_t d_v = rng.uniform(1, 6);
    const std::size_t heads = rng.uniform(1, 4);
    const std::size_t d_in = rng.uniform(1, 5);
    const Matrix k = rng.gaussian(n, d_k);
    const Matrix v = rng.gaussian(n, d_v);

    const ApParams zero{Matrix(heads, d_k)};
    const auto ap = dilate_attn_pool(k, v, m, zero);
    const auto mp = dilate_mean_pool(k, v, m);
    zero_ap.observe(std::max(max_abs_diff(ap.pooled.delta_k, mp.delta_k),
                             max_abs_diff(ap.pooled.delta_v, mp.delta_v)));

    const ApParams learned{rng.gaussian(heads, d_k)};
    const auto pooled = dilate_attn_pool(k, v, m, learned);
    PpParams pp;
    pp.key = {Matrix(d_k * heads, d_in), Matrix(1, d_in), Matrix(d_in, d_k), Matrix(1, d_k)};
    pp.value = {Matrix(d_v * heads, d_in), Matrix(1, d_in), Matrix(d_in, d_v), Matrix(1, d_v)};
    const auto processed = post_process(pooled, pp);
    zero_pp.observe(std::max(max_abs_diff(processed.delta_k, pooled.pooled.delta_k),
                             max_abs_diff(processed.delta_v, pooled.pooled.delta_v)));

    const auto sub = dilate_subsample(k, v, 1);
    sub_m1.observe(std::max(max_abs_diff(sub.delta_k, k), max_abs_diff(sub.delta_v, v)));
  }
  return {zero_ap.result("exact equality"), zero_pp.result("exact equality"),
          sub_m1.result("exact equality")};
}

std::vector<CheckResult> run_oracle_suite(const VerifyOptions& opts) {
  auto out = run_assembly_checks(opts);
  for (auto&& r : run_window_collapse_checks(opts)) out.push_back(std::move(r));
  for (auto&& r : run_identity_checks(opts)) out.push_back(std::move(r));
  return out;
}

std::vector<CheckResult> run_gradient_suite(const VerifyOptions& opts) {
  Tracker attn("gradients[scaled_dot_attention q,K,V]", kGradientTolerance);
  CaseRng rng(opts.seed * 15485863 + 5);
  for (std::size_t c = 0; c < opts.cases; ++c) {
    const std::size_t n_q = rng.uniform(1, 6);
    const std::size_t n_k = rng.uniform(1, 6);
    const std::size_t d_k = rng.uniform(1, 8);
    const std::size_t d_v = rng.uniform(1, 8);
    const Matrix q = rng.gaussian(n_q, d_k);
    const Matrix k = rng.gaussian(n_k, d_k);
    const Matrix v = rng.gaussian(n_k, d_v);
    const Matrix up = rng.gaussian(n_q, d_v);
    const auto g = attention_backward(q, k, v, up);

    const auto probe = [&](const Matrix& qq, const Matrix& kk, const Matrix& vv) {
      return frobenius_inner(up, scaled_dot_attention(qq, kk, vv));
    };
    const auto compare = [&](const Matrix& analytic, const Matrix& numeric) {
      const double diff = frobenius_norm(add(analytic, scale(numeric, -1.0)));
      attn.observe(gradient_rel_error(diff, frobenius_norm(analytic), frobenius_norm(numeric)));
    };
    compare(g.q, finite_diff_grad([&](const Matrix& m) { return probe(m, k, v); }, q,
                                  kFiniteDiffStep));
    compare(g.k, finite_diff_grad([&](const Matrix& m) { return probe(q, m, v); }, k,
                                  kFiniteDiffStep));
    compare(g.v, finite_diff_grad([&](const Matrix& m) { return probe(q, k, m); }, v,
                                  kFiniteDiffStep));
  }

  Tracker pool("gradients[attn_pool query embeddings]", kGradientTolerance);
  for (std::size_t c = 0; c < opts.cases; ++c) {
    const std::size_t n = rng.uniform(1, 12);
    const std::size_t m = rng.uniform(1, n + 2);
    const std::size_t d_k = rng.uniform(1, 6);
    const std::size_t d_v = rng.uniform(1, 6);
    const std::size_t heads = rng.uniform(1, 3);
    const Matrix k = rng.gaussian(n, d_k);
    const Matrix v = rng.gaussian(n, d_v);
    const ApParams ap{rng.gaussian(heads, d_k)};
    const std::size_t l = (n + m - 1) / m;
    const Matrix uk = rng.gaussian(l, d_k);
    const Matrix uv = rng.gaussian(l, d_v);

    const Matrix analytic = attn_pool_embedding_grad(k, v, m, ap, uk, uv);
    const Matrix numeric = finite_diff_grad(
        [&](const Matrix& e) {
          const auto d = dilate_attn_pool(k, v, m, ApParams{e}).pooled;
          return frobenius_inner(uk, d.delta_k) + frobenius_inner(uv, d.delta_v);
        },
        ap.query_embeddings, kFiniteDiffStep);
    const double diff = frobenius_norm(add(analytic, scale(numeric, -1.0)));
    pool.observe(gradient_rel_error(diff, frobenius_norm(analytic), frobenius_norm(numeric)));
  }
  return {attn.result("central differences, h=1e-5"), pool.result("central differences, h=1e-5")};
}

std::vector<CheckResult> run_complexity_suite(const VerifyOptions& opts) {
  (void)opts;
  Tracker ledger("complexity[instrumented==estimate_exact]", 0.0);
  Tracker unclipped("complexity[estimate_exact==estimate_closed_form without clipping]", 0.0);
  constexpr std::size_t kDModel = 8;
  constexpr std::size_t kHeads = 2;
  CaseRng rng(opts.seed * 2654435761ULL + 11);

  struct Variant {
    AttentionType type;
    Mechanism mechanism;
    std::size_t b;
  };
  const Variant variants[] = {
      {AttentionType::full, Mechanism::none, 1},
      {AttentionType::restricted, Mechanism::none, 1},
      {AttentionType::dilated, Mechanism::none, 1},
      {AttentionType::dilated, Mechanism::subsample, 1},
      {AttentionType::dilated, Mechanism::mean_pool, 1},
      {AttentionType::dilated, Mechanism::attn_pool, 1},
      {AttentionType::dilated, Mechanism::attn_pool, 2},
      {AttentionType::dilated, Mechanism::attn_pool_pp, 1},
      {AttentionType::dilated, Mechanism::attn_pool_pp, 2},
  };
  const RestrictionWindow windows[] = {{0, 0}, {1, 1}, {2, 2}, {3, 1}, {0, 4}, {20, 20}};

  for (std::size_t n = 4; n <= 16; ++n) {
    const MhaParams mha = random_mha(rng, kDModel, kHeads);
    const Matrix x = rng.gaussian(n, kDModel);
    for (const auto& var : variants) {
      for (const auto& window : windows) {
        for (std::size_t m : {1UL, 3UL, 5UL, n + 1}) {
          if (var.type != AttentionType::dilated && m != 1) continue;
          DilationConfig cfg;
          cfg.mechanism = var.mechanism;
          cfg.heads = var.b;
          cfg.chunk = m;
          cfg.d_in = 3;
          std::vector<DilationParams> per_head;
          for (std::size_t i = 0; i < kHeads; ++i) {
            per_head.push_back(random_dilation(rng, cfg, kDModel / kHeads, kDModel / kHeads));
          }

          MultiplyLedger counted;
          switch (var.type) {
            case AttentionType::full:
              mha_forward(x, x, mha, &counted);
              break;
            case AttentionType::restricted:
              restricted_mha_forward(x, mha, window, &counted);
              break;
            case AttentionType::dilated:
              dilated_mha_forward(x, mha, window, cfg, per_head, &counted);
              break;
          }
          CostQuery q;
          q.n = n;
          q.d_model = kDModel;
          q.type = var.type;
          q.nu_lb = window.nu_lb;
          q.nu_la = window.nu_la;
          q.m = m;
          q.mechanism = var.mechanism;
          q.b = var.b;
          q.d_in = cfg.d_in;
          const auto exact = estimate_exact(q);
          const double diff = std::fabs(static_cast<double>(counted.counted()) -
                                        static_cast<double>(exact.total));
          ledger.observe(diff);
          if (counted.counted() != exact.total) {
            ledger.fail("N=" + std::to_string(n) + " type=" + std::string(to_string(var.type)) +
                        " mech=" + std::string(to_string(var.mechanism)) + ": ledger " +
                        std::to_string(counted.counted()) + " vs " +
                        std::to_string(exact.total));
          }
          const bool clips = var.type != AttentionType::full && (window.nu_lb > 0 || window.nu_la > 0);
          if (!clips) {
            const auto closed = estimate_closed_form(q);
            unclipped.observe(std::fabs(static_cast<double>(closed.total) -
                                        static_cast<double>(exact.total)));
          }
        }
      }
    }
  }
  return {ledger.result("N in 4..16, all types and mechanisms, exact integers"),
          unclipped.result("windows with nu_lb = nu_la = 0 and full attention")};
}

std::vector<CheckResult> run_streaming_suite(const VerifyOptions& opts) {
  Tracker causal("streaming[causality]", 0.0);
  Tracker prefix("streaming[prefix==offline oracle]", kOracleTolerance);
  Tracker incremental("streaming[incremental==streaming_dilate]", kOracleTolerance);
  CaseRng rng(opts.seed * 998244353ULL + 13);

  const std::size_t instances = std::max<std::size_t>(20, opts.cases / 5);
  for (std::size_t c = 0; c < instances; ++c) {
    const auto& mc = kMechanisms[c % std::size(kMechanisms)];
    const std::size_t n_frames = rng.uniform(1, 40);
    DilationConfig cfg;
    cfg.mechanism = mc.mechanism;
    cfg.heads = mc.heads;
    cfg.chunk = rng.uniform(1, 8);
    cfg.d_in = rng.uniform(1, 4);
    const RestrictionWindow window{rng.uniform(0, 10), rng.uniform(0, 2)};
    const std::size_t d_model = rng.uniform(2, 6);
    const std::size_t d_k = rng.uniform(1, 4);
    const HeadParams head = random_head(rng, d_model, d_k, d_k);
    const DilationParams params = random_dilation(rng, cfg, d_k, d_k);
    const Matrix x = rng.gaussian(n_frames, d_model);

    StreamingDilatedHead stream(head, window, cfg, params);
    std::vector<StreamingDilatedHead::Output> emitted;
    for (std::size_t t = 0; t < n_frames; ++t) {
      for (auto& o : stream.push(x.row(t))) emitted.push_back(std::move(o));
    }
    for (auto& o : stream.finish()) emitted.push_back(std::move(o));
    if (emitted.size() != n_frames) incremental.fail("stream did not emit every frame");

    for (std::size_t n = 0; n < n_frames; ++n) {
      const Matrix row = streaming_dilate(x, n, head, window, cfg, params);

      Matrix perturbed = x;
      for (std::size_t t = n + window.nu_la + 1; t < n_frames; ++t)
        for (double& v : perturbed.row(t)) v += 3.0;
      causal.observe(max_abs_diff(row, streaming_dilate(perturbed, n, head, window, cfg, params)));

      prefix.observe(
          max_abs_diff(row, reference::streaming_frame(x, n, head, window, cfg, params)));

      if (n < emitted.size()) {
        const Matrix inc = Matrix::row_vector(emitted[n].values);
        incremental.observe(max_abs_diff(row, inc));
        if (emitted[n].frame != n) incremental.fail("frames emitted out of order");
      }
    }
    const std::size_t done = cfg.mechanism == Mechanism::none ? 0 : n_frames / cfg.chunk;
    if (stream.dilation_rows() != done) incremental.fail("dilation grew off the chunk grid");
  }

  // Per-frame cost of the published streaming setup.
  Tracker cost("streaming[dilated cost < unbounded baseline, past >= 2M]", 0.0);
  CostQuery q;
  q.d_model = 512;
  q.nu_lb = 9;
  q.nu_la = 1;
  q.m = 15;
  q.mechanism = Mechanism::attn_pool_pp;
  q.b = 2;
  q.d_in = 16;
  for (std::size_t past = 2 * q.m; past <= 750; ++past) {
    const double seconds = static_cast<double>(past) * 40.0 / 1000.0;
    const auto c = streaming_report(seconds, 40.0, q, false);
    cost.observe(0.0);
    if (!(c.dilated < c.baseline)) {
      cost.fail("past=" + std::to_string(past) + ": dilated " + std::to_string(c.dilated) +
                " >= baseline " + std::to_string(c.baseline));
    }
  }

  std::ostringstream report;
  report << std::fixed << std::setprecision(2);
  for (const auto& f : kPublishedStreamingFactors) {
    const auto without = streaming_report(f.seconds, 40.0, q, false);
    const auto with = streaming_report(f.seconds, 40.0, q, true);
    report << f.seconds << "s: x" << without.ratio << " (published x" << f.without_chunk
           << "), with chunk x" << with.ratio << " (published x" << f.with_chunk << "); ";
  }
  CheckResult published;
  published.name = "streaming[published factors, reported only]";
  published.passed = true;
  published.cases = std::size(kPublishedStreamingFactors);
  published.detail = report.str();

  return {causal.result("frames beyond n + nu_la perturbed"),
          prefix.result("Δ limited to completed chunks"), incremental.result(), cost.result(),
          published};
}

std::vector<CheckResult> run_suite(std::string_view suite, const VerifyOptions& opts) {
  if (suite == "oracle") return run_oracle_suite(opts);
  if (suite == "gradients") return run_gradient_suite(opts);
  if (suite == "complexity") return run_complexity_suite(opts);
  if (suite == "streaming") return run_streaming_suite(opts);
  if (suite == "all") {
    std::vector<CheckResult> out;
    for (auto fn : {run_oracle_suite, run_gradient_suite, run_complexity_suite,
                    run_streaming_suite}) {
      for (auto&& r : fn(opts)) out.push_back(std::move(r));
    }
    return out;
  }
  throw std::invalid_argument("unknown suite '" + std::string(suite) + "'");
}

void print_results(std::ostream& out, const std::vector<CheckResult>& results) {
  for (const auto& r : results) {
    out << (r.passed ? "PASS " : "FAIL ") << r.name << "  cases=" << r.cases
        << "  max_err=" << std::scientific << std::setprecision(3) << r.max_error
        << std::defaultfloat;
    if (!r.detail.empty()) out << "  (" << r.detail << ")";
    out << '\n';
  }
}

bool all_passed(const std::vector<CheckResult>& results) {
  return std::all_of(results.begin(), results.end(), [](const auto& r) { return r.passed; });
}

}  // namespace dsa::harness
