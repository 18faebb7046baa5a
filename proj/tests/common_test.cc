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

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <set>

namespace adapthetero {
namespace {

TEST(QuotaTest, HundredRowsTwentyPositives) {
  const std::vector<size_t> sizes = {80, 20};
  EXPECT_EQ(LargestRemainderQuota(sizes, 0.7), (std::vector<size_t>{56, 14}));
}

TEST(QuotaTest, RemainderGoesToLargestFraction) {
  // 7 * 0.7 = 4.9 and 3 * 0.7 = 2.1; the seventh slot goes to the negatives.
  const std::vector<size_t> sizes = {7, 3};
  EXPECT_EQ(LargestRemainderQuota(sizes, 0.7), (std::vector<size_t>{5, 2}));
}

TEST(QuotaTest, TotalIsRoundedRatioTimesCount) {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const std::vector<size_t> sizes = {1 + rng.UniformInt(300), 1 + rng.UniformInt(300)};
    const double ratio = rng.Uniform(0.05, 0.95);
    const auto quota = LargestRemainderQuota(sizes, ratio);
    const size_t total = sizes[0] + sizes[1];
    EXPECT_EQ(quota[0] + quota[1], static_cast<size_t>(std::floor(ratio * total + 0.5)));
    for (size_t c = 0; c < 2; ++c) {
      EXPECT_LE(quota[c], sizes[c]);
      EXPECT_LE(std::abs(static_cast<double>(quota[c]) - ratio * sizes[c]), 1.0);
    }
  }
}

TEST(StratifiedIndexSplitTest, PartitionsEveryIndexOnce) {
  Rng rng(9);
  std::vector<int> labels(137);
  for (auto& y : labels) y = rng.Uniform() < 0.3;
  const IndexSplit split = StratifiedIndexSplit(labels, 0.7, 42);
  std::vector<size_t> all = split.first;
  all.insert(all.end(), split.second.begin(), split.second.end());
  std::sort(all.begin(), all.end());
  std::vector<size_t> expected(labels.size());
  std::iota(expected.begin(), expected.end(), 0);
  EXPECT_EQ(all, expected);
  EXPECT_TRUE(std::is_sorted(split.first.begin(), split.first.end()));
  EXPECT_TRUE(std::is_sorted(split.second.begin(), split.second.end()));
}

TEST(StratifiedIndexSplitTest, ClassCountsFollowQuota) {
  std::vector<int> labels(100, 0);
  std::fill(labels.begin(), labels.begin() + 20, 1);
  const IndexSplit split = StratifiedIndexSplit(labels, 0.7, 1);
  ASSERT_EQ(split.first.size(), 70u);
  size_t positives = 0;
  for (size_t i : split.first) positives += labels[i];
  EXPECT_EQ(positives, 14u);
}

TEST(StratifiedIndexSplitTest, SameSeedSamePartition) {
  std::vector<int> labels(50);
  for (size_t i = 0; i < labels.size(); ++i) labels[i] = i % 3 == 0;
  const auto a = StratifiedIndexSplit(labels, 0.6, 77);
  const auto b = StratifiedIndexSplit(labels, 0.6, 77);
  const auto c = StratifiedIndexSplit(labels, 0.6, 78);
  EXPECT_EQ(a.first, b.first);
  EXPECT_NE(a.first, c.first);
}

TEST(RngTest, SequenceIsFixedBySeed) {
  Rng a(123), b(123);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.NextU64(), b.NextU64());
  EXPECT_NE(Rng(123).NextU64(), Rng(124).NextU64());
}

TEST(RngTest, DrawsStayInRange) {
  Rng rng(3);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.Uniform();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
    EXPECT_LT(rng.UniformInt(7), 7u);
  }
}

TEST(RngTest, NormalMomentsAreStandard) {
  Rng rng(8);
  const int n = 200000;
  double sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = rng.Normal();
    sum += z;
    sum_sq += z * z;
  }
  EXPECT_NEAR(sum / n, 0.0, 0.01);
  EXPECT_NEAR(sum_sq / n, 1.0, 0.02);
}

TEST(RngTest, ShuffleIsAPermutation) {
  Rng rng(4);
  std::vector<int> v(40);
  std::iota(v.begin(), v.end(), 0);
  rng.Shuffle(v);
  std::vector<int> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 40; ++i) EXPECT_EQ(sorted[i], i);
}

TEST(DeriveSeedTest, TagsAndIndicesSeparateStreams) {
  std::set<uint64_t> seen;
  for (const char* tag : {"split", "global_model", "umap", "bootstrap", "retrain:A"}) {
    seen.insert(DeriveSeed(7, tag));
  }
  for (uint64_t i = 0; i < 100; ++i) seen.insert(DeriveSeed(7, i));
  EXPECT_EQ(seen.size(), 105u);
  EXPECT_EQ(DeriveSeed(7, "umap"), DeriveSeed(7, "umap"));
  EXPECT_NE(DeriveSeed(7, "umap"), DeriveSeed(8, "umap"));
}

TEST(LexicographicRowOrderTest, SortsByValuesThenIndex) {
  Matrix m(4, 2);
  const double rows[4][2] = {{1, 2}, {0, 5}, {1, 2}, {1, 1}};
  for (size_t i = 0; i < 4; ++i) {
    m(i, 0) = rows[i][0];
    m(i, 1) = rows[i][1];
  }
  EXPECT_EQ(LexicographicRowOrder(m), (std::vector<size_t>{1, 3, 0, 2}));
}

TEST(MatrixTest, SelectRowsKeepsRequestedOrder) {
  Matrix m(3, 2);
  for (size_t i = 0; i < 3; ++i) m(i, 0) = m(i, 1) = static_cast<double>(i);
  const std::vector<size_t> rows = {2, 0};
  const Matrix s = m.SelectRows(rows);
  ASSERT_EQ(s.rows(), 2u);
  EXPECT_EQ(s(0, 0), 2.0);
  EXPECT_EQ(s(1, 1), 0.0);
}

TEST(SigmoidTest, InverseOfLogitAndStrictlyInside) {
  EXPECT_DOUBLE_EQ(Sigmoid(0.0), 0.5);
  for (double p : {0.01, 0.2, 0.5, 0.77, 0.999}) EXPECT_NEAR(Sigmoid(Logit(p)), p, 1e-12);
  EXPECT_GT(Sigmoid(-1000.0), 0.0);
  EXPECT_LT(Sigmoid(1000.0), 1.0);
  EXPECT_LT(Sigmoid(-1.0), Sigmoid(-0.5));
}

TEST(ErrorTest, InputErrorsAreSeparatedFromStageErrors) {
  EXPECT_TRUE(IsInputError(ErrorCode::kParse));
  EXPECT_TRUE(IsInputError(ErrorCode::kSchema));
  EXPECT_TRUE(IsInputError(ErrorCode::kConfig));
  EXPECT_FALSE(IsInputError(ErrorCode::kTraining));
  EXPECT_FALSE(IsInputError(ErrorCode::kModelIntegrity));
  const Error e(ErrorCode::kShape, "bad");
  EXPECT_EQ(e.code(), ErrorCode::kShape);
  EXPECT_EQ(ErrorCodeName(ErrorCode::kShape).empty(), false);
}

}  // namespace
}  // namespace adapthetero
