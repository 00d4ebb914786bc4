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
#include <functional>
#include <span>

#include "dsa/matrix.hpp"

namespace dsa {

/// Counts scalar multiplications of the operations that the cost model
/// tracks: query-key score products inside attention and every product of
/// the dilation post-processing network. Value aggregation, projections and
/// encoder feed-forward layers are never counted.
class MultiplyLedger {
 public:
  void add(std::uint64_t n) { counted_ += n; }
  std::uint64_t counted() const { return counted_; }
  void reset() { counted_ = 0; }

 private:
  std::uint64_t counted_ = 0;
};

/// Adds `n` to `ledger` when it is non-null.
inline void charge(MultiplyLedger* ledger, std::uint64_t n) {
  if (ledger != nullptr) ledger->add(n);
}

/// a * b. Charges a.rows * a.cols * b.cols to the ledger when `counted`.
Matrix matmul(const Matrix& a, const Matrix& b, MultiplyLedger* ledger = nullptr,
              bool counted = false);

/// a * b^T.
Matrix matmul_transposed(const Matrix& a, const Matrix& b, MultiplyLedger* ledger = nullptr,
                         bool counted = false);

Matrix transpose(const Matrix& m);
Matrix add(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& m, double factor);
/// Adds a bias row (1 x cols) to every row.
Matrix add_row_bias(const Matrix& m, const Matrix& bias);

/// Numerically stabilized softmax applied to each row independently.
Matrix row_softmax(const Matrix& m);
void softmax_inplace(std::span<double> v);

inline constexpr double kLayerNormEps = 1e-12;

/// Per-row normalization to zero mean / unit variance followed by an affine
/// map. `gain` and `bias` are 1 x cols.
Matrix layer_norm(const Matrix& m, const Matrix& gain, const Matrix& bias,
                  double eps = kLayerNormEps);

/// PE[n, 2i] = sin(n / 10000^(2i/d)), PE[n, 2i+1] = cos(...); n is zero-based.
Matrix sinusoidal_pe(std::size_t n_frames, std::size_t d_model);

Matrix relu(const Matrix& m);
Matrix concat_time(std::span<const Matrix> parts);
Matrix concat_feature(std::span<const Matrix> parts);

/// Gaussian samples with the given standard deviation. Bit-identical for a
/// fixed seed on every platform (own Box-Muller over mt19937_64).
Matrix seeded_gaussian(std::size_t rows, std::size_t cols, std::uint64_t seed, double stddev);

/// Central-difference gradient of a scalar function.
Matrix finite_diff_grad(const std::function<double(const Matrix&)>& f, const Matrix& x,
                        double h);

/// Sum of elementwise products.
double frobenius_inner(const Matrix& a, const Matrix& b);
double frobenius_norm(const Matrix& m);

/// Dot product with a fixed four-lane reduction order.
double dot(std::span<const double> a, std::span<const double> b);

/// Threads used by per-query loops; read from DSA_THREADS, default 1.
/// Results never depend on this value.
std::size_t worker_threads();

/// Calls fn(i) for i in [0, count), split into contiguous ranges over
/// worker_threads() threads.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn);

}  // namespace dsa
