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

#include "adapthetero/stats.h"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "oracles.h"

namespace adapthetero::stats {
namespace {

std::pair<std::vector<int>, std::vector<double>> RandomScored(Rng& rng, size_t n,
                                                              int distinct) {
  std::vector<int> y(n);
  std::vector<double> s(n);
  for (size_t i = 0; i < n; ++i) {
    y[i] = rng.Uniform() < 0.35;
    s[i] = distinct > 0 ? static_cast<double>(rng.UniformInt(distinct)) / distinct
                        : rng.Uniform();
  }
  y[0] = 0;
  y[1] = 1;
  return {y, s};
}

TEST(AuprcTest, MatchesThresholdSweepOracle) {
  Rng rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    const size_t n = 5 + rng.UniformInt(200);
    const int distinct = trial % 3 == 0 ? 0 : 2 + static_cast<int>(rng.UniformInt(12));
    const auto [y, s] = RandomScored(rng, n, distinct);
    EXPECT_NEAR(Auprc(y, s), oracle::AveragePrecision(y, s), 1e-12) << "trial " << trial;
  }
}

TEST(AuprcTest, PerfectRankingIsOne) {
  const std::vector<int> y = {0, 0, 1, 1};
  const std::vector<double> s = {0.1, 0.2, 0.8, 0.9};
  EXPECT_DOUBLE_EQ(Auprc(y, s), 1.0);
}

TEST(AuprcTest, AllTiedScoresGivePrevalence) {
  const std::vector<int> y = {0, 1, 0, 0, 1};
  const std::vector<double> s(5, 0.3);
  EXPECT_DOUBLE_EQ(Auprc(y, s), 0.4);
}

TEST(AuprcTest, SingleClassIsUndefined) {
  const std::vector<int> y = {1, 1};
  const std::vector<double> s = {0.2, 0.4};
  try {
    Auprc(y, s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUndefinedMetric);
  }
}

TEST(AuprcTest, InvariantUnderMonotoneTransform) {
  Rng rng(6);
  const auto [y, s] = RandomScored(rng, 120, 0);
  std::vector<double> t(s.size());
  for (size_t i = 0; i < s.size(); ++i) t[i] = std::exp(3.0 * s[i]) - 7.0;
  EXPECT_NEAR(Auprc(y, s), Auprc(y, t), 1e-15);
}

TEST(LogLossTest, MatchesDefinitionAndClamps) {
  const std::vector<int> y = {1, 0};
  const std::vector<double> p = {0.8, 0.3};
  EXPECT_NEAR(LogLoss(y, p), -(std::log(0.8) + std::log(0.7)) / 2, 1e-15);
  const std::vector<double> extreme = {0.0, 1.0};
  const double upper = 1.0 - 1e-15;
  EXPECT_NEAR(LogLoss(y, extreme), -(std::log(1e-15) + std::log(1.0 - upper)) / 2, 1e-12);
}

TEST(MannWhitneyTest, ExactBranchMatchesFullEnumeration) {
  Rng rng(17);
  for (int trial = 0; trial < 60; ++trial) {
    std::vector<double> a(5), b(5);
    for (auto& v : a) v = rng.Normal() + (trial % 4) * 0.5;
    for (auto& v : b) v = rng.Normal();
    const ComparisonResult r = MannWhitneyU(a, b);
    ASSERT_TRUE(r.exact);
    EXPECT_NEAR(r.p_value, oracle::MannWhitneyExactP(a, b), 1e-12) << "trial " << trial;
  }
}

TEST(MannWhitneyTest, ExactBranchUnequalSizes) {
  Rng rng(18);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> a(3 + trial % 4), b(9);
    for (auto& v : a) v = rng.Normal() + 0.8;
    for (auto& v : b) v = rng.Normal();
    const ComparisonResult r = MannWhitneyU(a, b);
    ASSERT_TRUE(r.exact);
    EXPECT_NEAR(r.p_value, oracle::MannWhitneyExactP(a, b), 1e-12);
  }
}

TEST(MannWhitneyTest, StatisticCountsPairwiseWins) {
  Rng rng(19);
  std::vector<double> a(30), b(41);
  for (auto& v : a) v = std::round(rng.Normal() * 3);
  for (auto& v : b) v = std::round(rng.Normal() * 3 + 1);
  double wins = 0.0;
  for (double x : a) {
    for (double y : b) wins += x > y ? 1.0 : x == y ? 0.5 : 0.0;
  }
  const ComparisonResult r = MannWhitneyU(a, b);
  EXPECT_FALSE(r.exact);
  EXPECT_DOUBLE_EQ(r.u, wins);
  EXPECT_GE(r.p_value, 0.0);
  EXPECT_LE(r.p_value, 1.0);
}

TEST(MannWhitneyTest, NormalApproximationWithoutTies) {
  // n = m = 10, U = 20: z = (|20 - 50| - 0.5) / sqrt(10 * 10 * 21 / 12).
  std::vector<double> a, b;
  for (int i = 0; i < 10; ++i) b.push_back(100 + i);
  for (int i = 0; i < 10; ++i) a.push_back(i < 2 ? 200 + i : i);
  const ComparisonResult r = MannWhitneyU(a, b);
  ASSERT_FALSE(r.exact);
  EXPECT_DOUBLE_EQ(r.u, 20.0);
  const double z = 29.5 / std::sqrt(100.0 * 21.0 / 12.0);
  EXPECT_NEAR(r.p_value, std::erfc(z / std::sqrt(2.0)), 1e-14);
}

TEST(MannWhitneyTest, IdenticalSamplesAreNotSignificant) {
  const std::vector<double> a(40, 1.0);
  const ComparisonResult r = MannWhitneyU(a, a);
  EXPECT_DOUBLE_EQ(r.p_value, 1.0);
  EXPECT_EQ(r.stars, "ns");
}

TEST(SignificanceStarsTest, Thresholds) {
  EXPECT_EQ(SignificanceStars(0.0005), "***");
  EXPECT_EQ(SignificanceStars(0.001), "**");
  EXPECT_EQ(SignificanceStars(0.009), "**");
  EXPECT_EQ(SignificanceStars(0.01), "*");
  EXPECT_EQ(SignificanceStars(0.049), "*");
  EXPECT_EQ(SignificanceStars(0.05), "ns");
}

TEST(ChiSquaredTest, SurvivalMatchesQuadratureOracle) {
  EXPECT_NEAR(ChiSquaredSurvival(3.841, 1), 0.05, 5e-4);
  for (int dof : {1, 2, 3, 5, 8}) {
    for (double x : {0.5, 2.0, 3.841, 7.0, 15.0}) {
      EXPECT_NEAR(ChiSquaredSurvival(x, dof), oracle::ChiSquaredTail(x, dof), 1e-9)
          << "dof " << dof << " x " << x;
    }
  }
}

TEST(ChiSquaredTest, FeatureIdenticalToLabel) {
  std::vector<std::string> f;
  std::vector<int> y;
  for (int i = 0; i < 40; ++i) {
    y.push_back(i % 2);
    f.push_back(i % 2 ? "1" : "0");
  }
  const auto r = ChiSquaredTest(f, y);
  ASSERT_TRUE(r.has_value());
  EXPECT_NEAR(r->statistic, 40.0, 1e-12);
  EXPECT_EQ(r->dof, 1);
  EXPECT_NEAR(r->p_value, 2.54e-10, 0.01e-10);
}

TEST(ChiSquaredTest, MatchesHandComputedTable) {
  // Table [[10, 20], [30, 40]] by (feature level, class).
  std::vector<std::string> f;
  std::vector<int> y;
  auto add = [&](const char* level, int cls, int count) {
    for (int i = 0; i < count; ++i) {
      f.push_back(level);
      y.push_back(cls);
    }
  };
  add("a", 0, 10);
  add("a", 1, 20);
  add("b", 0, 30);
  add("b", 1, 40);
  double stat = 0.0;
  const double obs[2][2] = {{10, 20}, {30, 40}};
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      const double expected = (obs[i][0] + obs[i][1]) * (obs[0][j] + obs[1][j]) / 100.0;
      stat += (obs[i][j] - expected) * (obs[i][j] - expected) / expected;
    }
  }
  const auto r = ChiSquaredTest(f, y);
  ASSERT_TRUE(r.has_value());
  EXPECT_NEAR(r->statistic, stat, 1e-12);
  EXPECT_FALSE(r->low_expected_count);
}

TEST(ChiSquaredTest, DegenerateTableHasNoTest) {
  const std::vector<std::string> f(6, "x");
  const std::vector<int> y = {0, 1, 0, 1, 0, 1};
  EXPECT_FALSE(ChiSquaredTest(f, y).has_value());
}

TEST(BootstrapTest, ReplicatesDependOnSeedOnly) {
  Rng rng(30);
  const auto [y, s] = RandomScored(rng, 80, 0);
  const Metric metrics[] = {Metric::kAuprc, Metric::kLogLoss};
  const Metric reversed[] = {Metric::kLogLoss, Metric::kAuprc};
  const auto a = BootstrapMetrics(y, s, 50, 99, metrics);
  const auto b = BootstrapMetrics(y, s, 50, 99, reversed);
  const auto c = BootstrapMetrics(y, s, 50, 100, metrics);
  EXPECT_EQ(a[0].replicates, b[1].replicates);
  EXPECT_EQ(a[1].replicates, b[0].replicates);
  EXPECT_NE(a[0].replicates, c[0].replicates);
  const auto prefix = BootstrapMetrics(y, s, 20, 99, metrics);
  EXPECT_TRUE(std::equal(prefix[0].replicates.begin(), prefix[0].replicates.end(),
                         a[0].replicates.begin()));
}

TEST(BootstrapTest, ReplicateMatchesManualResample) {
  Rng rng(31);
  const auto [y, s] = RandomScored(rng, 60, 0);
  const Metric metrics[] = {Metric::kAuprc};
  const auto out = BootstrapMetrics(y, s, 5, 7, metrics);
  ASSERT_EQ(out[0].replicates.size(), 5u);
  for (size_t r = 0; r < 5; ++r) {
    EXPECT_GE(out[0].replicates[r], 0.0);
    EXPECT_LE(out[0].replicates[r], 1.0);
  }
  std::vector<double> sorted = out[0].replicates;
  std::sort(sorted.begin(), sorted.end());
  EXPECT_EQ(out[0].median, sorted[2]);
}

TEST(BootstrapTest, RejectsSingleClassAndZeroReplicates) {
  const std::vector<int> y = {1, 1, 1};
  const std::vector<double> s = {0.1, 0.2, 0.3};
  const Metric metrics[] = {Metric::kAuprc};
  EXPECT_THROW(BootstrapMetrics(y, s, 10, 1, metrics), Error);
  const std::vector<int> y2 = {0, 1, 1};
  EXPECT_THROW(BootstrapMetrics(y2, s, 0, 1, metrics), Error);
}

TEST(SummaryTest, LowerMedianAndInterpolatedQuartiles) {
  MetricSamples m;
  m.replicates = {4, 1, 3, 2};
  Summarize(m);
  EXPECT_EQ(m.median, 2.0);
  EXPECT_DOUBLE_EQ(m.q1, 1.75);
  EXPECT_DOUBLE_EQ(m.q3, 3.25);
  EXPECT_DOUBLE_EQ(m.iqr, 1.5);
  EXPECT_DOUBLE_EQ(Quantile({5.0}, 0.3), 5.0);
}

TEST(TopFeaturesTest, RanksByMeanAbsoluteValueWithIndexTies) {
  Matrix a(2, 4);
  const double v[2][4] = {{1, -3, 2, 0}, {-1, 3, -2, 0}};
  for (size_t i = 0; i < 2; ++i) {
    for (size_t j = 0; j < 4; ++j) a(i, j) = v[i][j];
  }
  const std::vector<std::string> names = {"a", "b", "c", "d"};
  const FeatureRanking r = TopFeatures(a, names, 3);
  ASSERT_EQ(r.features.size(), 3u);
  EXPECT_EQ(r.features[0].name, "b");
  EXPECT_EQ(r.features[1].name, "c");
  EXPECT_EQ(r.features[2].name, "a");
  EXPECT_DOUBLE_EQ(r.features[0].score, 3.0);
  EXPECT_EQ(TopFeatures(a, names, 10).features.size(), 4u);

  Matrix tied(1, 3, 1.0);
  const std::vector<std::string> tn = {"x", "y", "z"};
  const auto t = TopFeatures(tied, tn, 2);
  EXPECT_EQ(t.features[0].name, "x");
  EXPECT_EQ(t.features[1].name, "y");
}

TEST(RankCompareTest, JaccardAndRankDeltas) {
  FeatureRanking first{{{"a", 0, 3}, {"b", 1, 2}, {"c", 2, 1}}};
  FeatureRanking second{{{"c", 2, 3}, {"a", 0, 2}, {"d", 3, 1}}};
  const RankComparison r = RankCompare(first, second);
  EXPECT_DOUBLE_EQ(r.jaccard, 0.5);
  ASSERT_EQ(r.shared.size(), 2u);
  EXPECT_EQ(r.shared[0].name, "a");
  EXPECT_EQ(r.shared[0].delta, 1);
  EXPECT_EQ(r.shared[1].name, "c");
  EXPECT_EQ(r.shared[1].delta, -2);
  EXPECT_DOUBLE_EQ(RankCompare(first, first).jaccard, 1.0);
}

TEST(AdjustedRandTest, MatchesPairCountingOracle) {
  Rng rng(40);
  for (int trial = 0; trial < 50; ++trial) {
    const size_t n = 5 + rng.UniformInt(80);
    std::vector<int> x(n), y(n);
    for (size_t i = 0; i < n; ++i) {
      x[i] = static_cast<int>(rng.UniformInt(4)) - 1;
      y[i] = rng.Uniform() < 0.6 ? x[i] : static_cast<int>(rng.UniformInt(3));
    }
    EXPECT_NEAR(AdjustedRandIndex(x, y), oracle::AdjustedRand(x, y), 1e-12);
  }
}

TEST(AdjustedRandTest, RelabelingIsPerfectAgreement) {
  const std::vector<int> x = {0, 0, 1, 1, 2};
  const std::vector<int> y = {5, 5, 3, 3, -1};
  EXPECT_DOUBLE_EQ(AdjustedRandIndex(x, y), 1.0);
}

}  // namespace
}  // namespace adapthetero::stats
