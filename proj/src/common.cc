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

#include "adapthetero/common.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

namespace adapthetero {

std::string_view ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kParse:
      return "parse";
    case ErrorCode::kValidation:
      return "validation";
    case ErrorCode::kConfig:
      return "config";
    case ErrorCode::kSchema:
      return "schema";
    case ErrorCode::kShape:
      return "shape";
    case ErrorCode::kStratification:
      return "stratification";
    case ErrorCode::kImputation:
      return "imputation";
    case ErrorCode::kTraining:
      return "training";
    case ErrorCode::kTuning:
      return "tuning";
    case ErrorCode::kModelIntegrity:
      return "model_integrity";
    case ErrorCode::kUndefinedMetric:
      return "undefined_metric";
    case ErrorCode::kBootstrap:
      return "bootstrap";
    case ErrorCode::kEmptyEnumeration:
      return "empty_enumeration";
    case ErrorCode::kIo:
      return "io";
  }
  return "unknown";
}

bool IsInputError(ErrorCode code) {
  switch (code) {
    case ErrorCode::kParse:
    case ErrorCode::kValidation:
    case ErrorCode::kConfig:
    case ErrorCode::kSchema:
    case ErrorCode::kIo:
      return true;
    default:
      return false;
  }
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(ErrorCodeName(code)) + " error: " +
                         message),
      code_(code) {}

Matrix Matrix::SelectRows(std::span<const size_t> indices) const {
  Matrix out(indices.size(), cols_);
  for (size_t i = 0; i < indices.size(); ++i) {
    const auto src = row(indices[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

std::vector<size_t> LexicographicRowOrder(const Matrix& matrix) {
  std::vector<size_t> order(matrix.rows());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](size_t x, size_t y) {
    const auto rx = matrix.row(x);
    const auto ry = matrix.row(y);
    for (size_t j = 0; j < rx.size(); ++j) {
      if (rx[j] != ry[j]) return rx[j] < ry[j];
    }
    return x < y;
  });
  return order;
}

Rng::Rng(uint64_t seed) : engine_(MixSeed(seed)) {}

uint64_t Rng::NextU64() { return engine_(); }

double Rng::Uniform() {
  return static_cast<double>(NextU64() >> 11) * 0x1.0p-53;
}

uint64_t Rng::UniformInt(uint64_t n) {
  // Rejection sampling removes modulo bias.
  const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  uint64_t value;
  do {
    value = NextU64();
  } while (value >= limit);
  return value % n;
}

double Rng::Normal() {
  if (has_spare_normal_) {
    has_spare_normal_ = false;
    return spare_normal_;
  }
  double u1;
  do {
    u1 = Uniform();
  } while (u1 <= 0.0);
  const double u2 = Uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_normal_ = radius * std::sin(angle);
  has_spare_normal_ = true;
  return radius * std::cos(angle);
}

uint64_t MixSeed(uint64_t value) {
  value += 0x9e3779b97f4a7c15ULL;
  value = (value ^ (value >> 30)) * 0xbf58476d1ce4e5b9ULL;
  value = (value ^ (value >> 27)) * 0x94d049bb133111ebULL;
  return value ^ (value >> 31);
}

uint64_t DeriveSeed(uint64_t parent, uint64_t index) {
  return MixSeed(MixSeed(parent) ^ (index + 0x632be59bd9b4e019ULL));
}

uint64_t DeriveSeed(uint64_t parent, std::string_view tag) {
  // FNV-1a over the tag.
  uint64_t hash = 0xcbf29ce484222325ULL;
  for (const char c : tag) {
    hash ^= static_cast<unsigned char>(c);
    hash *= 0x100000001b3ULL;
  }
  return DeriveSeed(parent, hash);
}

std::vector<size_t> LargestRemainderQuota(std::span<const size_t> class_sizes,
                                          double ratio) {
  size_t total = 0;
  for (const size_t size : class_sizes) total += size;
  const auto target =
      static_cast<size_t>(std::floor(ratio * static_cast<double>(total) + 0.5));

  std::vector<size_t> quota(class_sizes.size());
  std::vector<double> remainder(class_sizes.size());
  size_t assigned = 0;
  for (size_t c = 0; c < class_sizes.size(); ++c) {
    const double exact = ratio * static_cast<double>(class_sizes[c]);
    quota[c] = static_cast<size_t>(std::floor(exact));
    remainder[c] = exact - static_cast<double>(quota[c]);
    assigned += quota[c];
  }
  std::vector<size_t> order(class_sizes.size());
  for (size_t c = 0; c < order.size(); ++c) order[c] = c;
  // Largest remainder first; equal remainders go to the lower class index.
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return remainder[a] > remainder[b];
  });
  for (size_t i = 0; assigned < target && i < order.size(); ++i) {
    const size_t c = order[i];
    if (quota[c] < class_sizes[c]) {
      ++quota[c];
      ++assigned;
    }
  }
  return quota;
}

IndexSplit StratifiedIndexSplit(std::span<const int> labels, double ratio,
                                uint64_t seed) {
  std::vector<std::vector<size_t>> members(2);
  for (size_t i = 0; i < labels.size(); ++i) {
    members[labels[i] != 0 ? 1 : 0].push_back(i);
  }
  const std::vector<size_t> sizes = {members[0].size(), members[1].size()};
  const std::vector<size_t> quota = LargestRemainderQuota(sizes, ratio);

  Rng rng(seed);
  std::vector<char> in_first(labels.size(), 0);
  for (size_t c = 0; c < 2; ++c) {
    rng.Shuffle(members[c]);
    for (size_t i = 0; i < quota[c]; ++i) in_first[members[c][i]] = 1;
  }
  IndexSplit split;
  for (size_t i = 0; i < labels.size(); ++i) {
    (in_first[i] ? split.first : split.second).push_back(i);
  }
  return split;
}

double Sigmoid(double margin) {
  double p;
  if (margin >= 0) {
    p = 1.0 / (1.0 + std::exp(-margin));
  } else {
    const double e = std::exp(margin);
    p = e / (1.0 + e);
  }
  // Keep the result strictly inside (0, 1) for extreme margins.
  constexpr double kLowest = std::numeric_limits<double>::min();
  constexpr double kHighest = 1.0 - std::numeric_limits<double>::epsilon() / 2;
  return std::clamp(p, kLowest, kHighest);
}

double Logit(double probability) {
  return std::log(probability / (1.0 - probability));
}

}  // namespace adapthetero
