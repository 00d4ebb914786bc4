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

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

#include "dsa/encoder.hpp"
#include "dsa/matrix.hpp"

namespace dsa {

/// Malformed or unreadable feature/config file.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Precision { f32, f64 };

/// Feature files: "DSA1" (f32) or "DSA8" (f64) magic, u32 N, u32 d, then N*d
/// little-endian reals row-major. Files ending in .csv hold one frame per line.
Matrix read_features(const std::filesystem::path& path);
void write_features(const std::filesystem::path& path, const Matrix& m,
                    Precision precision = Precision::f64);

std::string encode_features(const Matrix& m, Precision precision);
Matrix decode_features(std::string_view bytes);
Matrix parse_features_csv(std::string_view text);

/// Encoder settings plus the output precision, as stored in a JSON run config.
struct RunConfig {
  EncoderConfig encoder;
  Precision precision = Precision::f64;
};

/// Unknown keys, wrong types and invalid values raise FormatError.
RunConfig parse_run_config(std::string_view json_text);
RunConfig load_run_config(const std::filesystem::path& path);
std::string to_json(const RunConfig& cfg);

}  // namespace dsa
