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

#include "harness/commands.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dsa/complexity.hpp"
#include "dsa/encoder.hpp"
#include "dsa/io.hpp"
#include "dsa/numerics.hpp"
#include "harness/bench.hpp"
#include "harness/verify.hpp"

namespace dsa::harness {
namespace {

/// A usage problem detected after CLI11 parsing (conflicting or bad values).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

const std::vector<std::string> kFormats{"md", "csv", "json"};

// ---- complexity -----------------------------------------------------------

struct ComplexityArgs {
  std::string preset;
  std::optional<std::uint64_t> n, d_model;
  std::string type;
  std::uint64_t nu_lb = 0, nu_la = 0, chunk = 1, heads = 1, d_in = 16;
  std::string mechanism = "none";
  std::string format = "md";
};

void add_complexity(CLI::App& app, ComplexityArgs& a) {
  auto* cmd = app.add_subcommand("complexity", "Multiplication counts of one self-attention layer");
  auto* preset = cmd->add_option("--preset", a.preset, "Published table: wsj or librispeech")
                     ->check(CLI::IsMember({"wsj", "librispeech"}));
  std::vector<CLI::Option*> custom{
      cmd->add_option("--n", a.n, "Sequence length"),
      cmd->add_option("--d-model", a.d_model, "Model width"),
      cmd->add_option("--type", a.type, "full, restricted or dilated")
          ->check(CLI::IsMember({"full", "restricted", "dilated"})),
      cmd->add_option("--nu-lb", a.nu_lb, "Look-back frames"),
      cmd->add_option("--nu-la", a.nu_la, "Look-ahead frames"),
      cmd->add_option("--chunk", a.chunk, "Chunk size M")->check(CLI::PositiveNumber),
      cmd->add_option("--mechanism", a.mechanism, "Dilation mechanism"),
      cmd->add_option("--heads", a.heads, "Attention-pooling heads B")->check(CLI::PositiveNumber),
      cmd->add_option("--d-in", a.d_in, "Post-processing bottleneck")->check(CLI::PositiveNumber),
  };
  for (auto* o : custom) preset->excludes(o);
  cmd->add_option("--format", a.format, "md, csv or json")->check(CLI::IsMember(kFormats));
}

std::string render_rows(const std::vector<TableRow>& rows, const std::string& format) {
  if (format == "csv") return render_csv(rows);
  if (format == "json") return render_json(rows);
  return render_markdown(rows);
}

int run_complexity(const ComplexityArgs& a, std::ostream& out) {
  if (!a.preset.empty()) {
    out << render_rows(table_generate(parse_preset(a.preset)), a.format);
    return kExitOk;
  }
  if (!a.n || !a.d_model || a.type.empty()) {
    throw UsageError("complexity: give --preset, or all of --n, --d-model and --type");
  }
  CostQuery q;
  q.n = *a.n;
  q.d_model = *a.d_model;
  q.type = parse_attention_type(a.type);
  q.nu_lb = a.nu_lb;
  q.nu_la = a.nu_la;
  q.m = a.chunk;
  q.mechanism = parse_mechanism(a.mechanism);
  q.b = a.heads;
  q.d_in = a.d_in;
  if (q.type != AttentionType::dilated && q.mechanism != Mechanism::none) {
    throw UsageError("complexity: --mechanism requires --type dilated");
  }
  if (q.n == 0 || q.d_model == 0) throw UsageError("complexity: --n and --d-model must be positive");
  out << render_rows({table_row(q)}, a.format);
  return kExitOk;
}

// ---- encode / init-weights / gen-features ----------------------------------

struct EncodeArgs {
  std::string config, weights, input, output;
};

void add_encode(CLI::App& app, EncodeArgs& a) {
  auto* cmd = app.add_subcommand("encode", "Run the encoder on a feature file");
  cmd->add_option("--config", a.config, "JSON run config")->required();
  cmd->add_option("--weights", a.weights, "Weight file (DSAW)")->required();
  cmd->add_option("--input", a.input, "Input features (DSA1, DSA8 or .csv)")->required();
  cmd->add_option("--output", a.output, "Output feature file")->required();
}

int run_encode(const EncodeArgs& a, std::ostream& err) {
  const RunConfig cfg = load_run_config(a.config);
  const EncoderWeights w = load_weights(a.weights, cfg.encoder);
  const Matrix x = read_features(a.input);
  if (x.cols() != cfg.encoder.input_dim) {
    err << "encode: input has " << x.cols() << " features per frame, config expects "
        << cfg.encoder.input_dim << '\n';
    return kExitMismatch;
  }
  write_features(a.output, encoder_forward(x, w, cfg.encoder), cfg.precision);
  return kExitOk;
}

struct InitArgs {
  std::string config, output;
};

void add_init(CLI::App& app, InitArgs& a) {
  auto* cmd = app.add_subcommand("init-weights", "Write seeded initial weights for a config");
  cmd->add_option("--config", a.config, "JSON run config")->required();
  cmd->add_option("--output", a.output, "Weight file to write")->required();
}

int run_init(const InitArgs& a) {
  const RunConfig cfg = load_run_config(a.config);
  save_weights(init_weights(cfg.encoder), cfg.encoder, a.output);
  return kExitOk;
}

struct GenArgs {
  std::size_t n = 0, dim = 0;
  std::uint64_t seed = 0;
  std::string precision = "f32", output;
};

void add_gen(CLI::App& app, GenArgs& a) {
  auto* cmd = app.add_subcommand("gen-features", "Write a seeded Gaussian feature file");
  cmd->add_option("--n", a.n, "Frames")->required()->check(CLI::PositiveNumber);
  cmd->add_option("--dim", a.dim, "Features per frame")->required()->check(CLI::PositiveNumber);
  cmd->add_option("--seed", a.seed, "Random seed");
  cmd->add_option("--precision", a.precision, "f32 (DSA1) or f64 (DSA8)")
      ->check(CLI::IsMember({"f32", "f64"}));
  cmd->add_option("--output", a.output, "Feature file to write")->required();
}

int run_gen(const GenArgs& a) {
  write_features(a.output, seeded_gaussian(a.n, a.dim, a.seed, 1.0),
                 a.precision == "f32" ? Precision::f32 : Precision::f64);
  return kExitOk;
}

// ---- verify ----------------------------------------------------------------

struct VerifyArgs {
  std::string suite = "all";
  VerifyOptions opts;
};

void add_verify(CLI::App& app, VerifyArgs& a) {
  auto* cmd = app.add_subcommand("verify", "Run the property and oracle checks");
  cmd->add_option("--suite", a.suite, "all, oracle, gradients, complexity or streaming")
      ->check(CLI::IsMember({"all", "oracle", "gradients", "complexity", "streaming"}));
  cmd->add_option("--seed", a.opts.seed, "Seed for the randomized cases");
  cmd->add_option("--cases", a.opts.cases, "Randomized cases per family")
      ->check(CLI::Range(std::size_t{100}, std::size_t{1000000}));
}

int run_verify(const VerifyArgs& a, std::ostream& out) {
  const auto results = run_suite(a.suite, a.opts);
  print_results(out, results);
  return all_passed(results) ? kExitOk : kExitCheckFailed;
}

// ---- bench -----------------------------------------------------------------

struct BenchArgs {
  std::vector<std::size_t> n_list{256, 512, 1024, 2048, 4096};
  std::vector<std::string> types;
  std::size_t repeats = 3;
  std::size_t d_model = BenchOptions{}.d_model;
  std::string format = "csv";
};

void add_bench(CLI::App& app, BenchArgs& a) {
  auto* cmd = app.add_subcommand("bench", "Time one attention layer over a range of lengths");
  cmd->add_option("--n-list", a.n_list, "Ascending sequence lengths")
      ->delimiter(',')
      ->check(CLI::PositiveNumber);
  cmd->add_option("--type", a.types, "full, restricted or dilated (repeatable)")
      ->delimiter(',')
      ->check(CLI::IsMember({"full", "restricted", "dilated"}));
  cmd->add_option("--repeats", a.repeats, "Timed runs per configuration")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--d-model", a.d_model, "Layer width (4 heads)")->check(CLI::PositiveNumber);
  cmd->add_option("--format", a.format, "md, csv or json")->check(CLI::IsMember(kFormats));
}

int run_bench_cmd(const BenchArgs& a, std::ostream& out) {
  if (!std::is_sorted(a.n_list.begin(), a.n_list.end()) ||
      std::adjacent_find(a.n_list.begin(), a.n_list.end()) != a.n_list.end()) {
    throw UsageError("bench: --n-list must be strictly ascending");
  }
  BenchOptions opts;
  opts.n_list = a.n_list;
  opts.repeats = a.repeats;
  opts.d_model = a.d_model;
  if (!a.types.empty()) {
    opts.types.clear();
    for (const auto& t : a.types) opts.types.push_back(parse_attention_type(t));
  }
  const BenchReport report = run_bench(opts);
  if (a.format == "json") {
    out << render_bench_json(report);
  } else if (a.format == "md") {
    out << render_bench_markdown(report);
  } else {
    out << render_bench_csv(report);
  }
  return kExitOk;
}

// ---- streaming-cost --------------------------------------------------------

struct StreamingArgs {
  std::vector<double> past_seconds{4.0, 8.0};
  double frame_ms = 40.0;
  std::uint64_t nu_lb = 9, nu_la = 1, chunk = 15, heads = 2, d_in = 16, d_model = 512;
  std::string mechanism = "attn_pool_pp";
};

void add_streaming(CLI::App& app, StreamingArgs& a) {
  auto* cmd = app.add_subcommand("streaming-cost", "Per-frame cost of streaming dilated attention");
  cmd->add_option("--past-seconds", a.past_seconds, "Audio already received (s)")
      ->delimiter(',');
  cmd->add_option("--frame-ms", a.frame_ms, "Frame period (ms)");
  cmd->add_option("--nu-lb", a.nu_lb, "Look-back frames");
  cmd->add_option("--nu-la", a.nu_la, "Look-ahead frames");
  cmd->add_option("--chunk", a.chunk, "Chunk size M");
  cmd->add_option("--heads", a.heads, "Attention-pooling heads B");
  cmd->add_option("--d-in", a.d_in, "Post-processing bottleneck");
  cmd->add_option("--d-model", a.d_model, "Model width");
  cmd->add_option("--mechanism", a.mechanism, "Dilation mechanism");
}

int run_streaming(const StreamingArgs& a, std::ostream& out) {
  for (double s : a.past_seconds) {
    if (!(s >= 0.0) || !std::isfinite(s)) throw UsageError("streaming-cost: --past-seconds must be >= 0");
  }
  if (!(a.frame_ms > 0.0) || !std::isfinite(a.frame_ms)) {
    throw UsageError("streaming-cost: --frame-ms must be positive");
  }
  if (a.chunk == 0 || a.heads == 0 || a.d_in == 0 || a.d_model == 0) {
    throw UsageError("streaming-cost: --chunk, --heads, --d-in and --d-model must be positive");
  }
  CostQuery q;
  q.d_model = a.d_model;
  q.type = AttentionType::dilated;
  q.nu_lb = a.nu_lb;
  q.nu_la = a.nu_la;
  q.m = a.chunk;
  q.mechanism = parse_mechanism(a.mechanism);
  q.b = a.heads;
  q.d_in = a.d_in;

  out << "| past (s) | past frames | baseline | dilated | ratio | dilated, chunk event | ratio, "
         "chunk event | published ratio | published, chunk event |\n"
      << "|---:|---:|---:|---:|---:|---:|---:|---:|---:|\n";
  for (double s : a.past_seconds) {
    const auto plain = streaming_report(s, a.frame_ms, q, false);
    const auto event = streaming_report(s, a.frame_ms, q, true);
    std::string claimed = "-", claimed_event = "-";
    for (const auto& f : kPublishedStreamingFactors) {
      if (f.seconds == s) {
        std::ostringstream c1, c2;
        c1 << f.without_chunk;
        c2 << f.with_chunk;
        claimed = c1.str();
        claimed_event = c2.str();
      }
    }
    std::ostringstream row;
    row << std::fixed << std::setprecision(2) << "| " << s << " | " << plain.past_frames << " | "
        << plain.baseline << " | " << plain.dilated << " | " << plain.ratio << " | "
        << event.dilated << " | " << event.ratio << " | " << claimed << " | " << claimed_event
        << " |\n";
    out << row.str();
  }
  out << "\nBaseline: restricted attention with unbounded look-back, (past + nu_la + 1) * d_model.\n"
         "Dilated: (min(nu_lb, past) + nu_la + 1 + completed chunks) * d_model; a chunk event adds\n"
         "the pooling and post-processing cost of summarizing one chunk.\n"
         "Published ratios are printed for comparison only.\n";
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Dilated self-attention: complexity tables, encoder runs and checks", "dsa"};
  app.require_subcommand(1);
  ComplexityArgs complexity;
  EncodeArgs encode;
  InitArgs init;
  GenArgs gen;
  VerifyArgs verify;
  BenchArgs bench;
  StreamingArgs streaming;
  add_complexity(app, complexity);
  add_encode(app, encode);
  add_init(app, init);
  add_gen(app, gen);
  add_verify(app, verify);
  add_bench(app, bench);
  add_streaming(app, streaming);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "dsa: " << e.what() << '\n';
    return kExitUsage;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    if (name == "complexity") return run_complexity(complexity, out);
    if (name == "encode") return run_encode(encode, err);
    if (name == "init-weights") return run_init(init);
    if (name == "gen-features") return run_gen(gen);
    if (name == "verify") return run_verify(verify, out);
    if (name == "bench") return run_bench_cmd(bench, out);
    if (name == "streaming-cost") return run_streaming(streaming, out);
  } catch (const UsageError& e) {
    err << "dsa: " << e.what() << '\n';
    return kExitUsage;
  } catch (const WeightFileError& e) {
    err << "dsa " << name << ": " << e.what() << '\n';
    const auto k = e.kind();
    return k == WeightFileError::Kind::shape_mismatch || k == WeightFileError::Kind::config_mismatch
               ? kExitMismatch
               : kExitIo;
  } catch (const FormatError& e) {
    err << "dsa " << name << ": " << e.what() << '\n';
    return kExitIo;
  } catch (const std::invalid_argument& e) {
    // Bad values in flags or configs (unknown mechanism, invalid shapes).
    err << "dsa " << name << ": " << e.what() << '\n';
    return name == "encode" || name == "init-weights" ? kExitIo : kExitUsage;
  } catch (const std::exception& e) {
    err << "dsa " << name << ": " << e.what() << '\n';
    return kExitIo;
  }
  err << "dsa: unknown command\n";
  return kExitUsage;
}

}  // namespace dsa::harness
