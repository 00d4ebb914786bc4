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

#include "dsa/complexity.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace dsa {
namespace {

std::uint64_t mul(std::uint64_t a, std::uint64_t b) {
  std::uint64_t out = 0;
  if (__builtin_mul_overflow(a, b, &out)) throw std::overflow_error("multiplication count overflows 64 bits");
  return out;
}

std::uint64_t plus(std::uint64_t a, std::uint64_t b) {
  std::uint64_t out = 0;
  if (__builtin_add_overflow(a, b, &out)) throw std::overflow_error("multiplication count overflows 64 bits");
  return out;
}

void check_query(const CostQuery& q) {
  if (q.n == 0 || q.d_model == 0) throw std::invalid_argument("cost query needs N >= 1 and d_model >= 1");
  if (q.type == AttentionType::dilated) {
    if (q.m == 0) throw std::invalid_argument("cost query needs chunk size M >= 1");
    if ((q.mechanism == Mechanism::attn_pool || q.mechanism == Mechanism::attn_pool_pp) && q.b == 0) {
      throw std::invalid_argument("attention pooling needs B >= 1");
    }
    if (q.mechanism == Mechanism::attn_pool_pp && q.d_in == 0) {
      throw std::invalid_argument("post-processing needs d_in >= 1");
    }
  }
}

/// xi terms of the dilation mechanism.
void add_dilation_terms(const CostQuery& q, CostReport& r) {
  if (q.type != AttentionType::dilated) return;
  const std::uint64_t l = q.dilation_length();
  if (q.mechanism == Mechanism::attn_pool || q.mechanism == Mechanism::attn_pool_pp) {
    r.xi_ap = mul(mul(q.n, q.d_model), q.b);
  }
  if (q.mechanism == Mechanism::attn_pool_pp) {
    r.xi_pp = mul(mul(mul(mul(2, q.b + 1), q.d_model), q.d_in), l);
  }
}

CostReport finish(CostReport r) {
  r.total = plus(plus(r.attention_term, r.xi_ap), r.xi_pp);
  return r;
}

}  // namespace

std::uint64_t CostQuery::dilation_length() const {
  if (type != AttentionType::dilated || mechanism == Mechanism::none || m == 0) return 0;
  return (n + m - 1) / m;
}

CostQuery CostQuery::symmetric(std::uint64_t n, std::uint64_t d_model, AttentionType type,
                               std::uint64_t r) {
  if (r == 0 || r % 2 == 0) throw std::invalid_argument("symmetric window size must be odd");
  CostQuery q;
  q.n = n;
  q.d_model = d_model;
  q.type = type;
  q.nu_lb = q.nu_la = (r - 1) / 2;
  return q;
}

std::string format_millions(std::uint64_t total) {
  const std::uint64_t hundredths = total / 10000 + (total % 10000 >= 5000 ? 1 : 0);
  const std::uint64_t tenths = hundredths / 10 + (hundredths % 10 >= 5 ? 1 : 0);
  return std::to_string(tenths / 10) + "." + std::to_string(tenths % 10) + "M";
}

std::string CostReport::display() const { return format_millions(total); }

CostReport estimate_closed_form(const CostQuery& q) {
  check_query(q);
  CostReport r;
  switch (q.type) {
    case AttentionType::full:
      r.attention_term = mul(mul(q.n, q.n), q.d_model);
      break;
    case AttentionType::restricted:
      r.attention_term = mul(mul(q.n, q.window()), q.d_model);
      break;
    case AttentionType::dilated:
      r.attention_term = mul(mul(q.n, plus(q.window(), q.dilation_length())), q.d_model);
      break;
  }
  add_dilation_terms(q, r);
  return finish(r);
}

CostReport estimate_exact(const CostQuery& q) {
  check_query(q);
  CostReport r;
  if (q.type == AttentionType::full) {
    r.attention_term = mul(mul(q.n, q.n), q.d_model);
    return finish(r);
  }
  // Sum of clipped window sizes: N*R minus what falls off either edge.
  const auto clipped_off = [&](std::uint64_t reach) {
    // Queries near an edge lose min(reach, distance) frames; sum over n.
    const std::uint64_t k = std::min(reach, q.n);
    std::uint64_t lost = 0;
    for (std::uint64_t n = 0; n < k; ++n) lost = plus(lost, reach - n);
    return lost;
  };
  const std::uint64_t nominal = mul(q.n, q.window());
  const std::uint64_t keys = nominal - clipped_off(q.nu_lb) - clipped_off(q.nu_la);
  r.attention_term = mul(plus(keys, mul(q.n, q.dilation_length())), q.d_model);
  add_dilation_terms(q, r);
  return finish(r);
}

Preset parse_preset(std::string_view name) {
  if (name == "wsj") return Preset::wsj;
  if (name == "librispeech") return Preset::librispeech;
  throw std::invalid_argument("unknown preset '" + std::string(name) + "'");
}

std::string mechanism_label(Mechanism m, std::uint64_t b) {
  switch (m) {
    case Mechanism::none: return "-";
    case Mechanism::subsample: return "subsampling";
    case Mechanism::mean_pool: return "MP";
    case Mechanism::attn_pool: return "AP-" + std::to_string(b);
    case Mechanism::attn_pool_pp: return "AP-" + std::to_string(b) + "+PP";
  }
  return "-";
}

TableRow table_row(const CostQuery& q) {
  TableRow row;
  row.report = estimate_closed_form(q);
  switch (q.type) {
    case AttentionType::full:
      row.label = "full-sequence";
      break;
    case AttentionType::restricted:
      row.label = "restricted";
      row.r = q.window();
      break;
    case AttentionType::dilated:
      row.label = "dilated " + mechanism_label(q.mechanism, q.b);
      row.r = q.window();
      row.m = q.m;
      break;
  }
  return row;
}

namespace {

struct PresetRow {
  AttentionType type;
  Mechanism mechanism;
  std::uint64_t b;
  std::uint64_t r;
  std::uint64_t m;
  const char* printed;
};

constexpr auto kFull = AttentionType::full;
constexpr auto kRes = AttentionType::restricted;
constexpr auto kDil = AttentionType::dilated;
constexpr auto kNone = Mechanism::none;
constexpr auto kSub = Mechanism::subsample;
constexpr auto kMp = Mechanism::mean_pool;
constexpr auto kAp = Mechanism::attn_pool;
constexpr auto kPp = Mechanism::attn_pool_pp;

// WSJ: N = 195, d_model = 256.
constexpr PresetRow kWsjRows[] = {
    {kFull, kNone, 0, 0, 0, "9.8M"},   {kRes, kNone, 0, 35, 0, "1.8M"},
    {kRes, kNone, 0, 21, 0, "1.1M"},   {kRes, kNone, 0, 15, 0, "0.8M"},
    {kRes, kNone, 0, 13, 0, "0.7M"},   {kRes, kNone, 0, 11, 0, "0.6M"},
    {kDil, kSub, 1, 15, 10, "1.8M"},   {kDil, kMp, 1, 15, 10, "1.8M"},
    {kDil, kAp, 1, 15, 11, "1.8M"},    {kDil, kAp, 2, 15, 12, "1.8M"},
    {kDil, kPp, 1, 21, 20, "1.8M"},    {kDil, kPp, 2, 21, 27, "1.8M"},
    {kDil, kSub, 1, 11, 20, "1.1M"},   {kDil, kMp, 1, 11, 20, "1.1M"},
    {kDil, kAp, 1, 11, 22, "1.1M"},    {kDil, kAp, 2, 11, 28, "1.1M"},
    {kDil, kPp, 1, 9, 24, "1.1M"},     {kDil, kPp, 2, 9, 33, "1.1M"},
};

// LibriSpeech: N = 310, d_model = 512.
constexpr PresetRow kLibriRows[] = {
    {kFull, kNone, 0, 0, 0, "52M"},    {kRes, kNone, 0, 41, 0, "6.5M"},
    {kRes, kNone, 0, 25, 0, "4.0M"},   {kRes, kNone, 0, 13, 0, "2.1M"},
    {kDil, kSub, 1, 25, 20, "6.5M"},   {kDil, kMp, 1, 25, 20, "6.5M"},
    {kDil, kAp, 1, 25, 20, "6.7M"},    {kDil, kAp, 2, 25, 20, "6.8M"},
    {kDil, kPp, 1, 25, 20, "7.2M"},    {kDil, kPp, 2, 25, 20, "7.6M"},
    {kDil, kPp, 2, 17, 19, "6.6M"},    {kDil, kSub, 1, 13, 40, "3.3M"},
    {kDil, kMp, 1, 13, 40, "3.3M"},    {kDil, kAp, 1, 11, 34, "3.5M"},
    {kDil, kPp, 2, 11, 50, "3.5M"},
};

constexpr std::uint64_t kPostProcessBottleneck = 16;

}  // namespace

std::vector<TableRow> table_generate(Preset preset) {
  const bool wsj = preset == Preset::wsj;
  const std::uint64_t n = wsj ? 195 : 310;
  const std::uint64_t d = wsj ? 256 : 512;
  const std::span<const PresetRow> rows = wsj ? std::span<const PresetRow>(kWsjRows)
                                              : std::span<const PresetRow>(kLibriRows);
  std::vector<TableRow> out;
  for (const auto& p : rows) {
    CostQuery q = p.type == kFull ? CostQuery{.n = n, .d_model = d}
                                  : CostQuery::symmetric(n, d, p.type, p.r);
    q.type = p.type;
    q.mechanism = p.mechanism;
    q.m = p.type == kDil ? p.m : 1;
    q.b = std::max<std::uint64_t>(p.b, 1);
    q.d_in = kPostProcessBottleneck;
    TableRow row = table_row(q);
    row.printed = p.printed;
    out.push_back(std::move(row));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Rendering

namespace {

std::string opt_text(const std::optional<std::uint64_t>& v) {
  return v ? std::to_string(*v) : "-";
}

std::optional<std::uint64_t> parse_opt(const std::string& s) {
  if (s == "-") return std::nullopt;
  std::size_t used = 0;
  const auto v = std::stoull(s, &used);
  if (used != s.size()) throw std::invalid_argument("bad integer field '" + s + "'");
  return v;
}

std::uint64_t parse_u64(const std::string& s) {
  std::size_t used = 0;
  const auto v = std::stoull(s, &used);
  if (used != s.size()) throw std::invalid_argument("bad integer field '" + s + "'");
  return v;
}

constexpr const char* kCsvHeader = "label,R,M,total,attention_term,xi_ap,xi_pp,display";

}  // namespace

std::string render_csv(const std::vector<TableRow>& rows) {
  std::ostringstream out;
  out << kCsvHeader << '\n';
  for (const auto& r : rows) {
    out << r.label << ',' << opt_text(r.r) << ',' << opt_text(r.m) << ',' << r.report.total << ','
        << r.report.attention_term << ',' << r.report.xi_ap << ',' << r.report.xi_pp << ','
        << r.report.display() << '\n';
  }
  return out.str();
}

std::vector<TableRow> parse_csv(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) {
    throw std::invalid_argument("cost table CSV: missing or unexpected header");
  }
  std::vector<TableRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::istringstream fields(line);
    std::string cell;
    while (std::getline(fields, cell, ',')) f.push_back(cell);
    if (f.size() != 8) throw std::invalid_argument("cost table CSV: expected 8 fields: " + line);
    TableRow r;
    r.label = f[0];
    r.r = parse_opt(f[1]);
    r.m = parse_opt(f[2]);
    r.report = {parse_u64(f[3]), parse_u64(f[4]), parse_u64(f[5]), parse_u64(f[6])};
    if (r.report.display() != f[7]) {
      throw std::invalid_argument("cost table CSV: display '" + f[7] + "' disagrees with total");
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

std::string render_json(const std::vector<TableRow>& rows) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    nlohmann::ordered_json o;
    o["label"] = r.label;
    o["R"] = r.r ? nlohmann::ordered_json(*r.r) : nlohmann::ordered_json(nullptr);
    o["M"] = r.m ? nlohmann::ordered_json(*r.m) : nlohmann::ordered_json(nullptr);
    o["total"] = r.report.total;
    o["attention_term"] = r.report.attention_term;
    o["xi_ap"] = r.report.xi_ap;
    o["xi_pp"] = r.report.xi_pp;
    o["display"] = r.report.display();
    arr.push_back(std::move(o));
  }
  return arr.dump(2) + "\n";
}

std::vector<TableRow> parse_json(std::string_view text) {
  const auto arr = nlohmann::json::parse(text);
  if (!arr.is_array()) throw std::invalid_argument("cost table JSON: expected an array");
  std::vector<TableRow> rows;
  for (const auto& o : arr) {
    TableRow r;
    r.label = o.at("label").get<std::string>();
    if (!o.at("R").is_null()) r.r = o.at("R").get<std::uint64_t>();
    if (!o.at("M").is_null()) r.m = o.at("M").get<std::uint64_t>();
    r.report = {o.at("total").get<std::uint64_t>(), o.at("attention_term").get<std::uint64_t>(),
                o.at("xi_ap").get<std::uint64_t>(), o.at("xi_pp").get<std::uint64_t>()};
    if (r.report.display() != o.at("display").get<std::string>()) {
      throw std::invalid_argument("cost table JSON: display disagrees with total");
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

std::string render_markdown(const std::vector<TableRow>& rows) {
  std::ostringstream out;
  out << "| type | R | M | total | attention | xi_AP | xi_PP | M (display) | published |\n";
  out << "|---|---|---|---|---|---|---|---|---|\n";
  std::vector<std::string> notes;
  for (const auto& r : rows) {
    out << "| " << r.label << " | " << opt_text(r.r) << " | " << opt_text(r.m) << " | "
        << r.report.total << " | " << r.report.attention_term << " | " << r.report.xi_ap << " | "
        << r.report.xi_pp << " | " << r.report.display() << " | " << r.printed.value_or("-")
        << " |\n";
    if (r.printed && *r.printed != r.report.display()) {
      notes.push_back(r.label + (r.r ? " R=" + std::to_string(*r.r) : std::string()) +
                      (r.m ? " M=" + std::to_string(*r.m) : std::string()) + ": formula gives " +
                      r.report.display() + ", published table prints " + *r.printed);
    }
  }
  if (!notes.empty()) {
    out << "\nNotes:\n";
    for (const auto& n : notes) out << "- " << n << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Streaming

StreamingCost streaming_report(double past_seconds, double frame_ms, const CostQuery& q,
                               bool chunk_event) {
  if (!(past_seconds >= 0.0) || !std::isfinite(past_seconds)) {
    throw std::invalid_argument("past duration must be a non-negative number of seconds");
  }
  if (!(frame_ms > 0.0) || !std::isfinite(frame_ms)) {
    throw std::invalid_argument("frame period must be positive");
  }
  if (q.d_model == 0 || q.m == 0) throw std::invalid_argument("d_model and chunk size must be positive");

  StreamingCost c;
  c.past_frames = static_cast<std::uint64_t>(std::llround(past_seconds * 1000.0 / frame_ms));
  const std::uint64_t p = c.past_frames;
  c.baseline = mul(p + q.nu_la + 1, q.d_model);

  const std::uint64_t window = std::min(q.nu_lb, p) + q.nu_la + 1;
  const std::uint64_t chunks = q.mechanism == Mechanism::none ? 0 : (p + 1) / q.m;
  c.dilated = mul(window + chunks, q.d_model);
  if (chunk_event) {
    if (q.mechanism == Mechanism::attn_pool || q.mechanism == Mechanism::attn_pool_pp) {
      c.dilated = plus(c.dilated, mul(mul(q.m, q.d_model), q.b));
    }
    if (q.mechanism == Mechanism::attn_pool_pp) {
      c.dilated = plus(c.dilated, mul(mul(mul(2, q.b + 1), q.d_model), q.d_in));
    }
  }
  c.ratio = static_cast<double>(c.baseline) / static_cast<double>(c.dilated);
  return c;
}

}  // namespace dsa
