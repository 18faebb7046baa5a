/*
 * Copyright 2026 The AdaptHetero Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Shared building blocks: error type, dense matrix, seeded random source and
// seed derivation.

#ifndef ADAPTHETERO_COMMON_H_
#define ADAPTHETERO_COMMON_H_

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace adapthetero {

enum class ErrorCode {
  kParse,
  kValidation,
  kConfig,
  kSchema,
  kShape,
  kStratification,
  kImputation,
  kTraining,
  kTuning,
  kModelIntegrity,
  kUndefinedMetric,
  kBootstrap,
  kEmptyEnumeration,
  kIo,
};

std::string_view ErrorCodeName(ErrorCode code);

// Whether the error stems from user input (bad file, bad config) rather than
// from a computation stage. The CLI maps these to exit code 2.
bool IsInputError(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

// Row-major dense matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(size_t rows, size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  size_t rows() const { return rows_; }
  size_t cols() const { return cols_; }

  double& operator()(size_t r, size_t c) { return data_[r * cols_ + c]; }
  double operator()(size_t r, size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  const std::vector<double>& data() const { return data_; }

  // Rows `indices` of this matrix, in the given order.
  Matrix SelectRows(std::span<const size_t> indices) const;

  bool operator==(const Matrix& other) const = default;

 private:
  size_t rows_ = 0;
  size_t cols_ = 0;
  std::vector<double> data_;
};

// Row indices sorted lexicographically by row values, ties by index.
std::vector<size_t> LexicographicRowOrder(const Matrix& matrix);

// Deterministic pseudo random source. Built on std::mt19937_64, whose output
// sequence is fixed by the standard; the distributions below are implemented
// here so results do not depend on the standard library vendor.
class Rng {
 public:
  explicit Rng(uint64_t seed);

  uint64_t NextU64();
  // Uniform in [0, 1).
  double Uniform();
  double Uniform(double lo, double hi) { return lo + (hi - lo) * Uniform(); }
  // Uniform integer in [0, n). n must be positive.
  uint64_t UniformInt(uint64_t n);
  double Normal();

  template <typename T>
  void Shuffle(std::vector<T>& values) {
    for (size_t i = values.size(); i > 1; --i) {
      const size_t j = UniformInt(i);
      std::swap(values[i - 1], values[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_normal_ = false;
  double spare_normal_ = 0.0;
};

// SplitMix64 finalizer. Used as the seed mixing function everywhere a child
// seed is derived.
uint64_t MixSeed(uint64_t value);
uint64_t DeriveSeed(uint64_t parent, uint64_t index);
uint64_t DeriveSeed(uint64_t parent, std::string_view tag);

// Splits row indices into (first, second) partitions, stratified on the binary
// labels. For each class, the number of rows sent to `first` follows
// largest-remainder rounding of ratio * class size, with the total fixed to
// round(ratio * n). Each partition lists indices in ascending order.
struct IndexSplit {
  std::vector<size_t> first;
  std::vector<size_t> second;
};
IndexSplit StratifiedIndexSplit(std::span<const int> labels, double ratio,
                                uint64_t seed);

// Per-class quota used by StratifiedIndexSplit, exposed for testing.
std::vector<size_t> LargestRemainderQuota(std::span<const size_t> class_sizes,
                                          double ratio);

double Sigmoid(double margin);
double Logit(double probability);

}  // namespace adapthetero

#endif  // ADAPTHETERO_COMMON_H_
