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

#include "dsa/io.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>
#include <vector>

#include "json.hpp"

namespace dsa {
namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t le_u32(std::string_view b, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b[at + i])) << (8 * i);
  }
  return v;
}

void put_le(std::string& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_le(std::string_view b, std::size_t at, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b[at + i])) << (8 * i);
  }
  return v;
}

}  // namespace

std::string encode_features(const Matrix& m, Precision precision) {
  if (m.rows() == 0 || m.cols() == 0) throw FormatError("feature matrix must be non-empty");
  std::string out = precision == Precision::f32 ? "DSA1" : "DSA8";
  put_le(out, m.rows(), 4);
  put_le(out, m.cols(), 4);
  for (double v : m.values()) {
    if (precision == Precision::f32) {
      put_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)), 4);
    } else {
      put_le(out, std::bit_cast<std::uint64_t>(v), 8);
    }
  }
  return out;
}

Matrix decode_features(std::string_view bytes) {
  if (bytes.size() < 12) throw FormatError("feature file shorter than its 12-byte header");
  const std::string_view magic = bytes.substr(0, 4);
  int width = 0;
  if (magic == "DSA1") {
    width = 4;
  } else if (magic == "DSA8") {
    width = 8;
  } else {
    throw FormatError("feature file has unknown magic '" + std::string(magic) + "'");
  }
  const std::uint32_t n = le_u32(bytes, 4);
  const std::uint32_t d = le_u32(bytes, 8);
  if (n == 0 || d == 0) throw FormatError("feature file declares an empty matrix");
  const std::uint64_t expected = std::uint64_t{n} * d * static_cast<std::uint64_t>(width);
  if (bytes.size() - 12 != expected) {
    throw FormatError("feature payload is " + std::to_string(bytes.size() - 12) +
                      " bytes, header implies " + std::to_string(expected));
  }
  Matrix m(n, d);
  std::size_t at = 12;
  for (double& v : m.values()) {
    v = width == 4 ? static_cast<double>(std::bit_cast<float>(
                         static_cast<std::uint32_t>(get_le(bytes, at, 4))))
                   : std::bit_cast<double>(get_le(bytes, at, 8));
    at += static_cast<std::size_t>(width);
    if (!std::isfinite(v)) throw FormatError("feature file contains a non-finite value");
  }
  return m;
}

Matrix parse_features_csv(std::string_view text) {
  std::vector<double> values;
  std::size_t rows = 0, cols = 0;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::size_t count = 0;
    std::istringstream cells(line);
    std::string cell;
    while (std::getline(cells, cell, ',')) {
      double v = 0.0;
      const char* b = cell.data();
      while (*b == ' ') ++b;
      const auto [ptr, ec] = std::from_chars(b, cell.data() + cell.size(), v);
      if (ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(v)) {
        throw FormatError("feature CSV line " + std::to_string(rows + 1) + ": bad value '" + cell +
                          "'");
      }
      values.push_back(v);
      ++count;
    }
    if (rows == 0) cols = count;
    if (count != cols) {
      throw FormatError("feature CSV line " + std::to_string(rows + 1) + " has " +
                        std::to_string(count) + " values, expected " + std::to_string(cols));
    }
    ++rows;
  }
  if (rows == 0 || cols == 0) throw FormatError("feature CSV is empty");
  Matrix m(rows, cols);
  std::copy(values.begin(), values.end(), m.values().begin());
  return m;
}

Matrix read_features(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  if (path.extension() == ".csv") return parse_features_csv(bytes);
  return decode_features(bytes);
}

void write_features(const std::filesystem::path& path, const Matrix& m, Precision precision) {
  const std::string bytes = encode_features(m, precision);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// Run config

namespace {

using nlohmann::json;

void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) throw FormatError(where + " must be a JSON object");
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.contains(key)) throw FormatError("unknown key '" + key + "' in " + where);
  }
}

std::size_t get_count(const json& obj, const char* key, std::size_t fallback, const std::string& where) {
  if (!obj.contains(key)) return fallback;
  const auto& v = obj.at(key);
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
    throw FormatError(where + "." + key + " must be a non-negative integer");
  }
  const auto n = v.get<std::uint64_t>();
  if (n > 0xFFFFFFFFULL) throw FormatError(where + "." + key + " exceeds 32 bits");
  return static_cast<std::size_t>(n);
}

std::string get_string(const json& obj, const char* key, const std::string& fallback,
                       const std::string& where) {
  if (!obj.contains(key)) return fallback;
  if (!obj.at(key).is_string()) throw FormatError(where + "." + key + " must be a string");
  return obj.at(key).get<std::string>();
}

}  // namespace

RunConfig parse_run_config(std::string_view json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("run config is not valid JSON: ") + e.what());
  }
  reject_unknown(root,
                 {"e_layers", "d_model", "d_ff", "d_h", "attention_type", "window", "dilation",
                  "input_dim", "seed", "precision"},
                 "config");
  RunConfig rc;
  EncoderConfig& c = rc.encoder;
  c.e_layers = get_count(root, "e_layers", c.e_layers, "config");
  c.d_model = get_count(root, "d_model", c.d_model, "config");
  c.d_ff = get_count(root, "d_ff", c.d_ff, "config");
  c.d_h = get_count(root, "d_h", c.d_h, "config");
  c.input_dim = get_count(root, "input_dim", c.input_dim, "config");
  c.seed = static_cast<std::uint32_t>(get_count(root, "seed", c.seed, "config"));
  try {
    c.attention_type =
        parse_attention_type(get_string(root, "attention_type", "full", "config"));
  } catch (const std::invalid_argument& e) {
    throw FormatError(e.what());
  }
  if (root.contains("window")) {
    const auto& w = root.at("window");
    reject_unknown(w, {"nu_lb", "nu_la"}, "config.window");
    c.window.nu_lb = get_count(w, "nu_lb", 0, "config.window");
    c.window.nu_la = get_count(w, "nu_la", 0, "config.window");
  }
  if (root.contains("dilation")) {
    const auto& d = root.at("dilation");
    reject_unknown(d, {"mechanism", "chunk", "heads", "d_in", "pad_divisor"}, "config.dilation");
    try {
      c.dilation.mechanism = parse_mechanism(get_string(d, "mechanism", "none", "config.dilation"));
    } catch (const std::invalid_argument& e) {
      throw FormatError(e.what());
    }
    c.dilation.chunk = get_count(d, "chunk", c.dilation.chunk, "config.dilation");
    c.dilation.heads = get_count(d, "heads", c.dilation.heads, "config.dilation");
    c.dilation.d_in = get_count(d, "d_in", c.dilation.d_in, "config.dilation");
    const auto divisor = get_string(d, "pad_divisor", "chunk_size", "config.dilation");
    if (divisor == "chunk_size") {
      c.dilation.pad_divisor = PadDivisor::chunk_size;
    } else if (divisor == "valid_frames") {
      c.dilation.pad_divisor = PadDivisor::valid_frames;
    } else {
      throw FormatError("config.dilation.pad_divisor must be chunk_size or valid_frames");
    }
  }
  const auto precision = get_string(root, "precision", "f64", "config");
  if (precision == "f64") {
    rc.precision = Precision::f64;
  } else if (precision == "f32") {
    rc.precision = Precision::f32;
  } else {
    throw FormatError("config.precision must be f32 or f64");
  }
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("invalid config: ") + e.what());
  }
  return rc;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  return parse_run_config(read_file(path));
}

std::string to_json(const RunConfig& rc) {
  const EncoderConfig& c = rc.encoder;
  nlohmann::ordered_json j;
  j["e_layers"] = c.e_layers;
  j["d_model"] = c.d_model;
  j["d_ff"] = c.d_ff;
  j["d_h"] = c.d_h;
  j["attention_type"] = std::string(to_string(c.attention_type));
  j["window"] = {{"nu_lb", c.window.nu_lb}, {"nu_la", c.window.nu_la}};
  j["dilation"] = {{"mechanism", std::string(to_string(c.dilation.mechanism))},
                   {"chunk", c.dilation.chunk},
                   {"heads", c.dilation.heads},
                   {"d_in", c.dilation.d_in},
                   {"pad_divisor", c.dilation.pad_divisor == PadDivisor::chunk_size
                                       ? "chunk_size"
                                       : "valid_frames"}};
  j["input_dim"] = c.input_dim;
  j["seed"] = c.seed;
  j["precision"] = rc.precision == Precision::f64 ? "f64" : "f32";
  return j.dump(2) + "\n";
}

}  // namespace dsa
