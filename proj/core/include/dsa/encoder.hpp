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
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "dsa/attention.hpp"
#include "dsa/dilation.hpp"
#include "dsa/matrix.hpp"

namespace dsa {

enum class AttentionType { full, restricted, dilated };

std::string_view to_string(AttentionType t);
AttentionType parse_attention_type(std::string_view name);

struct EncoderConfig {
  std::size_t e_layers = 1;
  std::size_t d_model = 64;
  std::size_t d_ff = 256;
  std::size_t d_h = 4;
  AttentionType attention_type = AttentionType::full;
  RestrictionWindow window;
  DilationConfig dilation;
  std::size_t input_dim = 83;
  std::uint32_t seed = 0;

  std::size_t d_k() const { return d_model / d_h; }
  /// Throws std::invalid_argument describing the first violated constraint.
  void validate() const;

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

struct LayerWeights {
  Matrix norm_mha_gain, norm_mha_bias;
  MhaParams mha;
  Matrix norm_ff_gain, norm_ff_bias;
  FeedForwardParams ff;
  std::vector<DilationParams> dilation;  // one per head; empty unless dilated
};

struct EncoderWeights {
  Matrix input_proj;  // input_dim x d_model
  std::vector<LayerWeights> layers;

  friend bool operator==(const EncoderWeights&, const EncoderWeights&);
};

/// Seeded Gaussian projections (std 1/sqrt(d_model)), zero biases, unit
/// layer-norm gains.
EncoderWeights init_weights(const EncoderConfig& cfg);

/// Calls fn(name, tensor) for every tensor in serialization order.
void for_each_tensor(const EncoderWeights& w,
                     const std::function<void(const std::string&, const Matrix&)>& fn);
void for_each_tensor(EncoderWeights& w,
                     const std::function<void(const std::string&, Matrix&)>& fn);

/// One pre-norm encoder layer: x + MHA(norm(x)), then x + FF(norm(x)).
Matrix encoder_layer_forward(const Matrix& x, const LayerWeights& layer, const EncoderConfig& cfg,
                             MultiplyLedger* ledger = nullptr);

/// X_0 = x P + PE followed by cfg.e_layers encoder layers.
Matrix encoder_forward(const Matrix& x, const EncoderWeights& w, const EncoderConfig& cfg,
                       MultiplyLedger* ledger = nullptr);

/// Self-attention block of the configured type.
Matrix self_attention(const Matrix& x, const LayerWeights& layer, const EncoderConfig& cfg,
                      MultiplyLedger* ledger = nullptr);

class WeightFileError : public std::runtime_error {
 public:
  enum class Kind { io, bad_magic, bad_version, checksum, shape_mismatch, config_mismatch };

  WeightFileError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

inline constexpr std::uint16_t kWeightFormatVersion = 1;

/// "DSAW" | u16 version | config block (u32 each) | f64 tensors | u32 CRC-32.
void save_weights(const EncoderWeights& w, const EncoderConfig& cfg,
                  const std::filesystem::path& path);

struct LoadedWeights {
  EncoderConfig config;
  EncoderWeights weights;
};

LoadedWeights load_weights(const std::filesystem::path& path);

/// Loads and checks every tensor against the shapes `expected` implies; a
/// difference raises shape_mismatch naming the first offending tensor.
/// Settings that do not affect shapes (window, seed, ...) may differ.
EncoderWeights load_weights(const std::filesystem::path& path, const EncoderConfig& expected);

}  // namespace dsa
