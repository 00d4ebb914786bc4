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

#include "dsa/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numbers>
#include <random>
#include <string>
#include <thread>
#include <vector>

namespace dsa {
namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " +
                     b.shape_string());
  }
}

}  // namespace

double dot(std::span<const double> a, std::span<const double> b) {
  const std::size_t n = a.size();
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

Matrix matmul(const Matrix& a, const Matrix& b, MultiplyLedger* ledger, bool counted) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions differ, " + a.shape_string() + " x " +
                     b.shape_string());
  }
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto orow = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      auto brow = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += aik * brow[j];
    }
  }
  if (counted) charge(ledger, std::uint64_t{a.rows()} * a.cols() * b.cols());
  return out;
}

Matrix matmul_transposed(const Matrix& a, const Matrix& b, MultiplyLedger* ledger,
                         bool counted) {
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_transposed: column counts differ, " + a.shape_string() +
                     " x (" + b.shape_string() + ")^T");
  }
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.rows(); ++j) out(i, j) = dot(a.row(i), b.row(j));
  }
  if (counted) charge(ledger, std::uint64_t{a.rows()} * a.cols() * b.rows());
  return out;
}

Matrix transpose(const Matrix& m) {
  Matrix out(m.cols(), m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out(j, i) = m(i, j);
  return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "add");
  Matrix out = a;
  auto o = out.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += bv[i];
  return out;
}

Matrix scale(const Matrix& m, double factor) {
  Matrix out = m;
  for (double& v : out.values()) v *= factor;
  return out;
}

Matrix add_row_bias(const Matrix& m, const Matrix& bias) {
  if (bias.rows() != 1 || bias.cols() != m.cols()) {
    throw ShapeError("add_row_bias: bias " + bias.shape_string() + " for " + m.shape_string());
  }
  Matrix out = m;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto r = out.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += bias(0, j);
  }
  return out;
}

void softmax_inplace(std::span<double> v) {
  if (v.empty()) return;
  const double peak = *std::max_element(v.begin(), v.end());
  double total = 0.0;
  for (double& x : v) {
    x = std::exp(x - peak);
    total += x;
  }
  for (double& x : v) x /= total;
}

Matrix row_softmax(const Matrix& m) {
  Matrix out = m;
  for (std::size_t i = 0; i < out.rows(); ++i) softmax_inplace(out.row(i));
  return out;
}

Matrix layer_norm(const Matrix& m, const Matrix& gain, const Matrix& bias, double eps) {
  if (gain.rows() != 1 || gain.cols() != m.cols() || bias.rows() != 1 ||
      bias.cols() != m.cols()) {
    throw ShapeError("layer_norm: gain " + gain.shape_string() + " / bias " +
                     bias.shape_string() + " for " + m.shape_string());
  }
  Matrix out(m.rows(), m.cols());
  const auto n = static_cast<double>(m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto r = m.row(i);
    double mean = 0.0;
    for (double x : r) mean += x;
    mean /= n;
    double var = 0.0;
    for (double x : r) var += (x - mean) * (x - mean);
    var /= n;
    const double inv = 1.0 / std::sqrt(var + eps);
    auto o = out.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) {
      // Exactly zero for a constant row, even with eps = 0.
      const double centered = r[j] - mean;
      o[j] = (centered == 0.0 ? 0.0 : centered * inv) * gain(0, j) + bias(0, j);
    }
  }
  return out;
}

Matrix sinusoidal_pe(std::size_t n_frames, std::size_t d_model) {
  if (d_model == 0 || d_model % 2 != 0) {
    throw std::invalid_argument("sinusoidal_pe: d_model must be even and positive, got " +
                                std::to_string(d_model));
  }
  Matrix pe(n_frames, d_model);
  for (std::size_t i = 0; i < d_model / 2; ++i) {
    const double rate =
        std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(d_model));
    for (std::size_t n = 0; n < n_frames; ++n) {
      const double angle = static_cast<double>(n) / rate;
      pe(n, 2 * i) = std::sin(angle);
      pe(n, 2 * i + 1) = std::cos(angle);
    }
  }
  return pe;
}

Matrix relu(const Matrix& m) {
  Matrix out = m;
  for (double& v : out.values()) v = std::max(v, 0.0);
  return out;
}

Matrix concat_time(std::span<const Matrix> parts) {
  if (parts.empty()) return {};
  const std::size_t cols = parts.front().cols();
  std::size_t rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) {
      throw ShapeError("concat_time: column mismatch " + parts.front().shape_string() +
                       " vs " + p.shape_string());
    }
    rows += p.rows();
  }
  Matrix out(rows, cols);
  std::size_t at = 0;
  for (const auto& p : parts) {
    std::copy(p.values().begin(), p.values().end(), out.values().begin() + at);
    at += p.size();
  }
  return out;
}

Matrix concat_feature(std::span<const Matrix> parts) {
  if (parts.empty()) return {};
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) {
      throw ShapeError("concat_feature: row mismatch " + parts.front().shape_string() +
                       " vs " + p.shape_string());
    }
    cols += p.cols();
  }
  Matrix out(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    auto o = out.row(i);
    std::size_t at = 0;
    for (const auto& p : parts) {
      auto r = p.row(i);
      std::copy(r.begin(), r.end(), o.begin() + static_cast<std::ptrdiff_t>(at));
      at += r.size();
    }
  }
  return out;
}

Matrix seeded_gaussian(std::size_t rows, std::size_t cols, std::uint64_t seed, double stddev) {
  std::mt19937_64 engine(seed);
  auto unit = [&engine] {
    // (0, 1]: never zero, so log() is finite.
    return (static_cast<double>(engine() >> 11) + 1.0) * 0x1.0p-53;
  };
  Matrix out(rows, cols);
  auto v = out.values();
  for (std::size_t i = 0; i < v.size(); i += 2) {
    const double radius = std::sqrt(-2.0 * std::log(unit()));
    const double theta = 2.0 * std::numbers::pi * unit();
    v[i] = stddev * radius * std::cos(theta);
    if (i + 1 < v.size()) v[i + 1] = stddev * radius * std::sin(theta);
  }
  return out;
}

Matrix finite_diff_grad(const std::function<double(const Matrix&)>& f, const Matrix& x,
                        double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_diff_grad: step must be positive");
  Matrix grad(x.rows(), x.cols());
  Matrix probe = x;
  auto p = probe.values();
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double saved = p[i];
    p[i] = saved + h;
    const double up = f(probe);
    p[i] = saved - h;
    const double down = f(probe);
    p[i] = saved;
    grad.values()[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

double frobenius_inner(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "frobenius_inner");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.values()[i] * b.values()[i];
  return s;
}

double frobenius_norm(const Matrix& m) { return std::sqrt(frobenius_inner(m, m)); }

std::size_t worker_threads() {
  if (const char* env = std::getenv("DSA_THREADS")) {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (end != env && n >= 1) return static_cast<std::size_t>(n);
  }
  return 1;
}

void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn) {
  const std::size_t threads = std::min(worker_threads(), count);
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(threads);
  const std::size_t per = (count + threads - 1) / threads;
  for (std::size_t t = 0; t < threads; ++t) {
    const std::size_t lo = t * per;
    const std::size_t hi = std::min(count, lo + per);
    if (lo >= hi) break;
    pool.emplace_back([&fn, lo, hi] {
      for (std::size_t i = lo; i < hi; ++i) fn(i);
    });
  }
}

}  // namespace dsa
