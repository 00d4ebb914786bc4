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

#include "dsa/encoder.hpp"

#include <zlib.h>

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "dsa/numerics.hpp"

namespace dsa {

std::string_view to_string(AttentionType t) {
  switch (t) {
    case AttentionType::full: return "full";
    case AttentionType::restricted: return "restricted";
    case AttentionType::dilated: return "dilated";
  }
  return "full";
}

AttentionType parse_attention_type(std::string_view name) {
  for (auto t : {AttentionType::full, AttentionType::restricted, AttentionType::dilated}) {
    if (to_string(t) == name) return t;
  }
  throw std::invalid_argument("unknown attention type '" + std::string(name) + "'");
}

void EncoderConfig::validate() const {
  const auto fail = [](const std::string& msg) { throw std::invalid_argument(msg); };
  if (d_model == 0 || d_model % 2 != 0) fail("d_model must be even and positive");
  if (d_h == 0 || d_model % d_h != 0) fail("d_model must be divisible by d_h");
  if (d_ff == 0) fail("d_ff must be positive");
  if (input_dim == 0) fail("input_dim must be positive");
  if (attention_type == AttentionType::dilated) {
    if (dilation.chunk == 0) fail("dilation chunk size must be >= 1");
    if (dilation.uses_attention_pooling() && dilation.heads == 0) {
      fail("attention pooling needs at least one pooling head");
    }
    if (dilation.mechanism == Mechanism::attn_pool_pp && dilation.d_in == 0) {
      fail("post-processing needs d_in >= 1");
    }
  }
}

bool operator==(const EncoderWeights& a, const EncoderWeights& b) {
  std::vector<std::pair<std::string, Matrix>> left, right;
  for_each_tensor(a, [&](const std::string& n, const Matrix& m) { left.emplace_back(n, m); });
  for_each_tensor(b, [&](const std::string& n, const Matrix& m) { right.emplace_back(n, m); });
  return left == right;
}

namespace {

template <typename Weights, typename Fn>
void visit_tensors(Weights& w, Fn&& fn) {
  fn(std::string("input_proj"), w.input_proj);
  for (std::size_t e = 0; e < w.layers.size(); ++e) {
    auto& layer = w.layers[e];
    const std::string p = "layer" + std::to_string(e) + ".";
    fn(p + "norm_mha.gain", layer.norm_mha_gain);
    fn(p + "norm_mha.bias", layer.norm_mha_bias);
    for (std::size_t i = 0; i < layer.mha.heads.size(); ++i) {
      auto& h = layer.mha.heads[i];
      const std::string hp = p + "mha.head" + std::to_string(i) + ".";
      fn(hp + "w_q", h.w_q);
      fn(hp + "w_k", h.w_k);
      fn(hp + "w_v", h.w_v);
    }
    fn(p + "mha.w_h", layer.mha.w_h);
    fn(p + "norm_ff.gain", layer.norm_ff_gain);
    fn(p + "norm_ff.bias", layer.norm_ff_bias);
    fn(p + "ff.w1", layer.ff.w1);
    fn(p + "ff.b1", layer.ff.b1);
    fn(p + "ff.w2", layer.ff.w2);
    fn(p + "ff.b2", layer.ff.b2);
    for (std::size_t i = 0; i < layer.dilation.size(); ++i) {
      auto& d = layer.dilation[i];
      const std::string dp = p + "dilation.head" + std::to_string(i) + ".";
      if (!d.ap.query_embeddings.empty()) fn(dp + "ap.query_embeddings", d.ap.query_embeddings);
      for (auto* branch : {&d.pp.key, &d.pp.value}) {
        if (branch->w1.empty()) continue;
        const std::string bp = dp + (branch == &d.pp.key ? "pp.key." : "pp.value.");
        fn(bp + "w1", branch->w1);
        fn(bp + "b1", branch->b1);
        fn(bp + "w2", branch->w2);
        fn(bp + "b2", branch->b2);
      }
    }
  }
}

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(),
                                                suffix) == 0;
}

PpBranch shaped_branch(std::size_t d, std::size_t heads, std::size_t d_in) {
  return {Matrix(d * heads, d_in), Matrix(1, d_in), Matrix(d_in, d), Matrix(1, d)};
}

/// Zero-filled weights with every shape the config implies.
EncoderWeights shaped_weights(const EncoderConfig& cfg) {
  const std::size_t d = cfg.d_model;
  const std::size_t dk = cfg.d_k();
  EncoderWeights w;
  w.input_proj = Matrix(cfg.input_dim, d);
  w.layers.resize(cfg.e_layers);
  for (auto& layer : w.layers) {
    layer.norm_mha_gain = Matrix(1, d);
    layer.norm_mha_bias = Matrix(1, d);
    layer.norm_ff_gain = Matrix(1, d);
    layer.norm_ff_bias = Matrix(1, d);
    layer.mha.heads.assign(cfg.d_h, HeadParams{Matrix(d, dk), Matrix(d, dk), Matrix(d, dk)});
    layer.mha.w_h = Matrix(cfg.d_h * dk, d);
    layer.ff = {Matrix(d, cfg.d_ff), Matrix(1, cfg.d_ff), Matrix(cfg.d_ff, d), Matrix(1, d)};
    if (cfg.attention_type == AttentionType::dilated) {
      layer.dilation.resize(cfg.d_h);
      for (auto& dp : layer.dilation) {
        if (cfg.dilation.uses_attention_pooling()) {
          dp.ap.query_embeddings = Matrix(cfg.dilation.heads, dk);
        }
        if (cfg.dilation.mechanism == Mechanism::attn_pool_pp) {
          dp.pp.key = shaped_branch(dk, cfg.dilation.heads, cfg.dilation.d_in);
          dp.pp.value = shaped_branch(dk, cfg.dilation.heads, cfg.dilation.d_in);
        }
      }
    }
  }
  return w;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
  // splitmix64 finalizer
  std::uint64_t z = seed * 0x9E3779B97F4A7C15ULL + index + 0x632BE59BD9B4E019ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

void for_each_tensor(const EncoderWeights& w,
                     const std::function<void(const std::string&, const Matrix&)>& fn) {
  visit_tensors(w, fn);
}

void for_each_tensor(EncoderWeights& w,
                     const std::function<void(const std::string&, Matrix&)>& fn) {
  visit_tensors(w, fn);
}

EncoderWeights init_weights(const EncoderConfig& cfg) {
  cfg.validate();
  EncoderWeights w = shaped_weights(cfg);
  const double stddev = 1.0 / std::sqrt(static_cast<double>(cfg.d_model));
  std::uint64_t index = 0;
  for_each_tensor(w, [&](const std::string& name, Matrix& m) {
    const std::uint64_t tensor_seed = mix_seed(cfg.seed, index++);
    if (ends_with(name, ".gain")) {
      for (double& v : m.values()) v = 1.0;
    } else if (ends_with(name, ".bias") || ends_with(name, ".b1") || ends_with(name, ".b2")) {
      // zeros
    } else {
      m = seeded_gaussian(m.rows(), m.cols(), tensor_seed, stddev);
    }
  });
  return w;
}

Matrix self_attention(const Matrix& x, const LayerWeights& layer, const EncoderConfig& cfg,
                      MultiplyLedger* ledger) {
  switch (cfg.attention_type) {
    case AttentionType::full:
      return mha_forward(x, x, layer.mha, ledger);
    case AttentionType::restricted:
      return restricted_mha_forward(x, layer.mha, cfg.window, ledger);
    case AttentionType::dilated:
      return dilated_mha_forward(x, layer.mha, cfg.window, cfg.dilation, layer.dilation, ledger);
  }
  throw std::logic_error("unhandled attention type");
}

Matrix encoder_layer_forward(const Matrix& x, const LayerWeights& layer, const EncoderConfig& cfg,
                             MultiplyLedger* ledger) {
  const Matrix attended =
      add(x, self_attention(layer_norm(x, layer.norm_mha_gain, layer.norm_mha_bias), layer, cfg,
                            ledger));
  return add(attended,
             ff_forward(layer_norm(attended, layer.norm_ff_gain, layer.norm_ff_bias), layer.ff));
}

Matrix encoder_forward(const Matrix& x, const EncoderWeights& w, const EncoderConfig& cfg,
                       MultiplyLedger* ledger) {
  cfg.validate();
  if (x.cols() != cfg.input_dim) {
    throw ShapeError("encoder_forward: input " + x.shape_string() + " does not have input_dim=" +
                     std::to_string(cfg.input_dim) + " columns");
  }
  if (w.layers.size() != cfg.e_layers) {
    throw ShapeError("encoder_forward: weights have " + std::to_string(w.layers.size()) +
                     " layers, config expects " + std::to_string(cfg.e_layers));
  }
  Matrix h = add(matmul(x, w.input_proj), sinusoidal_pe(x.rows(), cfg.d_model));
  for (const auto& layer : w.layers) h = encoder_layer_forward(h, layer, cfg, ledger);
  return h;
}

// ---------------------------------------------------------------------------
// Weight file

namespace {

constexpr std::array<char, 4> kMagic = {'D', 'S', 'A', 'W'};
constexpr std::size_t kHeaderBytes = 6;
constexpr std::size_t kConfigFields = 14;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(const std::string& in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  }
  return v;
}

void put_f64(std::string& out, double d) {
  const auto bits = std::bit_cast<std::uint64_t>(d);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

double get_f64(const std::string& in, std::size_t at) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) {
    bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  }
  return std::bit_cast<double>(bits);
}

std::uint32_t crc(const std::string& bytes, std::size_t begin, std::size_t end) {
  uLong c = crc32(0L, Z_NULL, 0);
  c = crc32(c, reinterpret_cast<const Bytef*>(bytes.data() + begin),
            static_cast<uInt>(end - begin));
  return static_cast<std::uint32_t>(c);
}

std::array<std::uint32_t, kConfigFields> encode_config(const EncoderConfig& c) {
  const auto u = [](std::size_t v) {
    if (v > 0xFFFFFFFFULL) throw std::invalid_argument("config value exceeds u32");
    return static_cast<std::uint32_t>(v);
  };
  return {u(c.e_layers),
          u(c.d_model),
          u(c.d_ff),
          u(c.d_h),
          static_cast<std::uint32_t>(c.attention_type),
          u(c.window.nu_lb),
          u(c.window.nu_la),
          static_cast<std::uint32_t>(c.dilation.mechanism),
          u(c.dilation.chunk),
          u(c.dilation.heads),
          u(c.dilation.d_in),
          static_cast<std::uint32_t>(c.dilation.pad_divisor),
          u(c.input_dim),
          c.seed};
}

EncoderConfig decode_config(const std::array<std::uint32_t, kConfigFields>& f) {
  using K = WeightFileError::Kind;
  if (f[4] > 2 || f[7] > 4 || f[11] > 1) {
    throw WeightFileError(K::config_mismatch, "weight file config block has invalid enum values");
  }
  EncoderConfig c;
  c.e_layers = f[0];
  c.d_model = f[1];
  c.d_ff = f[2];
  c.d_h = f[3];
  c.attention_type = static_cast<AttentionType>(f[4]);
  c.window = {f[5], f[6]};
  c.dilation.mechanism = static_cast<Mechanism>(f[7]);
  c.dilation.chunk = f[8];
  c.dilation.heads = f[9];
  c.dilation.d_in = f[10];
  c.dilation.pad_divisor = static_cast<PadDivisor>(f[11]);
  c.input_dim = f[12];
  c.seed = f[13];
  return c;
}

}  // namespace

void save_weights(const EncoderWeights& w, const EncoderConfig& cfg,
                  const std::filesystem::path& path) {
  const EncoderWeights shapes = shaped_weights(cfg);
  std::vector<std::pair<std::string, std::string>> expected;
  for_each_tensor(shapes, [&](const std::string& n, const Matrix& m) {
    expected.emplace_back(n, m.shape_string());
  });
  std::size_t idx = 0;
  for_each_tensor(w, [&](const std::string& n, const Matrix& m) {
    if (idx >= expected.size() || expected[idx].first != n ||
        expected[idx].second != m.shape_string()) {
      throw WeightFileError(WeightFileError::Kind::shape_mismatch,
                            "tensor '" + n + "' (" + m.shape_string() +
                                ") does not match the config");
    }
    ++idx;
  });
  if (idx != expected.size()) {
    throw WeightFileError(WeightFileError::Kind::shape_mismatch,
                          "missing tensor '" + expected[idx].first + "'");
  }

  std::string bytes(kMagic.begin(), kMagic.end());
  bytes.push_back(static_cast<char>(kWeightFormatVersion & 0xFF));
  bytes.push_back(static_cast<char>(kWeightFormatVersion >> 8));
  for (auto v : encode_config(cfg)) put_u32(bytes, v);
  for_each_tensor(w, [&](const std::string&, const Matrix& m) {
    for (double v : m.values()) put_f64(bytes, v);
  });
  put_u32(bytes, crc(bytes, kHeaderBytes, bytes.size()));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw WeightFileError(WeightFileError::Kind::io, "cannot open " + path.string() +
                                                         " for writing");
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw WeightFileError(WeightFileError::Kind::io, "write failed: " + path.string());
}

LoadedWeights load_weights(const std::filesystem::path& path) {
  using K = WeightFileError::Kind;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw WeightFileError(K::io, "cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (bytes.size() < kMagic.size() || !std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
    throw WeightFileError(K::bad_magic, path.string() + ": not a DSAW weight file");
  }
  const std::size_t min_size = kHeaderBytes + 4 * kConfigFields + 4;
  if (bytes.size() < min_size) {
    throw WeightFileError(K::checksum, path.string() + ": truncated (checksum unavailable)");
  }
  const auto version = static_cast<std::uint16_t>(static_cast<unsigned char>(bytes[4]) |
                                                  (static_cast<unsigned char>(bytes[5]) << 8));
  if (version != kWeightFormatVersion) {
    throw WeightFileError(K::bad_version,
                          path.string() + ": unsupported format version " + std::to_string(version));
  }
  const std::size_t payload_end = bytes.size() - 4;
  if (crc(bytes, kHeaderBytes, payload_end) != get_u32(bytes, payload_end)) {
    throw WeightFileError(K::checksum, path.string() + ": checksum mismatch");
  }

  std::array<std::uint32_t, kConfigFields> fields{};
  for (std::size_t i = 0; i < kConfigFields; ++i) fields[i] = get_u32(bytes, kHeaderBytes + 4 * i);
  LoadedWeights loaded;
  loaded.config = decode_config(fields);
  try {
    loaded.config.validate();
  } catch (const std::invalid_argument& e) {
    throw WeightFileError(K::config_mismatch, path.string() + ": invalid stored config: " + e.what());
  }

  loaded.weights = shaped_weights(loaded.config);
  std::size_t expected_bytes = 0;
  for_each_tensor(loaded.weights, [&](const std::string&, const Matrix& m) {
    expected_bytes += 8 * m.size();
  });
  std::size_t at = kHeaderBytes + 4 * kConfigFields;
  if (payload_end - at != expected_bytes) {
    throw WeightFileError(K::shape_mismatch, path.string() + ": tensor payload is " +
                                                 std::to_string(payload_end - at) +
                                                 " bytes, config implies " +
                                                 std::to_string(expected_bytes));
  }
  for_each_tensor(loaded.weights, [&](const std::string&, Matrix& m) {
    for (double& v : m.values()) {
      v = get_f64(bytes, at);
      at += 8;
    }
  });
  return loaded;
}

EncoderWeights load_weights(const std::filesystem::path& path, const EncoderConfig& expected) {
  using K = WeightFileError::Kind;
  LoadedWeights loaded = load_weights(path);
  const EncoderWeights want = shaped_weights(expected);

  std::vector<std::pair<std::string, std::string>> have;
  for_each_tensor(loaded.weights, [&](const std::string& n, const Matrix& m) {
    have.emplace_back(n, m.shape_string());
  });
  std::size_t idx = 0;
  std::string problem;
  for_each_tensor(want, [&](const std::string& n, const Matrix& m) {
    if (!problem.empty()) return;
    if (idx >= have.size()) {
      problem = "tensor '" + n + "' missing from " + path.string();
    } else if (have[idx].first != n) {
      problem = "expected tensor '" + n + "', file has '" + have[idx].first + "'";
    } else if (have[idx].second != m.shape_string()) {
      problem = "tensor '" + n + "' has shape " + have[idx].second + ", config expects " +
                m.shape_string();
    }
    ++idx;
  });
  if (problem.empty() && idx < have.size()) {
    problem = "unexpected tensor '" + have[idx].first + "' in " + path.string();
  }
  if (!problem.empty()) throw WeightFileError(K::shape_mismatch, problem);
  return std::move(loaded.weights);
}

}  // namespace dsa
