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

#include "adapthetero/clustering.h"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "oracles.h"
#include "test_support.h"

namespace adapthetero::clustering {
namespace {

using testing_support::RandomNormal;
using testing_support::TwoBlobs;

double Distance(const Matrix& p, size_t a, size_t b) {
  double s = 0.0;
  for (size_t c = 0; c < p.cols(); ++c) s += (p(a, c) - p(b, c)) * (p(a, c) - p(b, c));
  return std::sqrt(s);
}

TEST(CoreDistanceTest, SelfCountsAsFirstNeighbor) {
  Matrix p(4, 1);
  p(0, 0) = 0.0;
  p(1, 0) = 1.0;
  p(2, 0) = 3.0;
  p(3, 0) = 7.0;
  EXPECT_EQ(CoreDistances(p, 1), (std::vector<double>{0, 0, 0, 0}));
  EXPECT_EQ(CoreDistances(p, 2), (std::vector<double>{1, 1, 2, 4}));
  EXPECT_EQ(CoreDistances(p, 3), (std::vector<double>{3, 2, 3, 6}));
}

TEST(MstTest, WeightMatchesExhaustiveSpanningTrees) {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const size_t n = 3 + rng.UniformInt(7);
    const Matrix p = RandomNormal(n, 2, rng);
    const int min_samples = 1 + static_cast<int>(rng.UniformInt(3));
    const auto core = CoreDistances(p, min_samples);
    const auto mst = MutualReachabilityMst(p, core);
    ASSERT_EQ(mst.size(), n - 1);
    double total = 0.0;
    for (const auto& e : mst) {
      total += e.weight;
      EXPECT_DOUBLE_EQ(e.weight, std::max({core[e.a], core[e.b], Distance(p, e.a, e.b)}));
    }
    const double best = oracle::MinimumSpanningWeight(n, [&](size_t a, size_t b) {
      return std::max({core[a], core[b], Distance(p, a, b)});
    });
    EXPECT_NEAR(total, best, 1e-9) << "trial " << trial;
  }
}

TEST(DendrogramTest, MergeHeightsNeverDecrease) {
  Rng rng(2);
  const Matrix p = RandomNormal(150, 3, rng);
  const auto core = CoreDistances(p, 5);
  const auto merges = SingleLinkage(MutualReachabilityMst(p, core), p.rows());
  ASSERT_EQ(merges.size(), p.rows() - 1);
  for (size_t i = 1; i < merges.size(); ++i) {
    EXPECT_LE(merges[i - 1].distance, merges[i].distance);
  }
  EXPECT_EQ(merges.back().size, p.rows());
}

TEST(DendrogramTest, CondensedClustersAreBornLargeEnough) {
  Rng rng(3);
  for (size_t mcs : {5u, 10u, 25u}) {
    const auto blobs = TwoBlobs(80, 6.0, 3 + mcs);
    const size_t n = blobs.points.rows();
    const auto core = CoreDistances(blobs.points, static_cast<int>(mcs));
    const auto merges = SingleLinkage(MutualReachabilityMst(blobs.points, core), n);
    const auto condensed = CondenseTree(merges, n, mcs);
    size_t rows_seen = 0;
    for (const auto& e : condensed) {
      if (e.child >= n) {
        EXPECT_GE(e.size, mcs);
      } else {
        EXPECT_EQ(e.size, 1u);
        ++rows_seen;
      }
      EXPECT_GE(e.lambda, 0.0);
    }
    EXPECT_EQ(rows_seen, n);
  }
}

TEST(HdbscanTest, TwoSeparatedBlobs) {
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    const auto blobs = TwoBlobs(200, 10.0, seed);
    const auto result = Hdbscan(blobs.points, HdbscanConfig{});
    EXPECT_EQ(result.num_clusters, 2) << seed;
    const auto noise = std::count(result.labels.begin(), result.labels.end(), kNoise);
    EXPECT_LE(noise, 20) << seed;
    EXPECT_GE(oracle::AdjustedRand(result.labels, blobs.labels), 0.95) << seed;
  }
}

TEST(HdbscanTest, TooFewRowsIsAllNoise) {
  Rng rng(4);
  const auto result = Hdbscan(RandomNormal(5, 2, rng), HdbscanConfig{});
  EXPECT_EQ(result.num_clusters, 0);
  for (int label : result.labels) EXPECT_EQ(label, kNoise);
}

TEST(HdbscanTest, IdenticalPointsFormOneCluster) {
  HdbscanConfig config;
  config.min_cluster_size = 10;
  const auto result = Hdbscan(Matrix(100, 3, 2.5), config);
  EXPECT_EQ(result.num_clusters, 1);
  for (int label : result.labels) EXPECT_EQ(label, 0);
}

TEST(HdbscanTest, SingleClusterCanBeDisallowed) {
  HdbscanConfig config;
  config.min_cluster_size = 10;
  config.allow_single_cluster = false;
  const auto result = Hdbscan(Matrix(100, 3, 2.5), config);
  EXPECT_EQ(result.num_clusters, 0);
  const auto blobs = Hdbscan(TwoBlobs(100, 10.0, 7).points, config);
  EXPECT_EQ(blobs.num_clusters, 2);
}

TEST(HdbscanTest, RowPermutationPermutesLabels) {
  Rng rng(5);
  const auto blobs = TwoBlobs(120, 8.0, 6);
  std::vector<size_t> perm(blobs.points.rows());
  std::iota(perm.begin(), perm.end(), 0);
  rng.Shuffle(perm);
  HdbscanConfig config;
  config.min_cluster_size = 10;
  const auto a = Hdbscan(blobs.points, config);
  const auto b = Hdbscan(blobs.points.SelectRows(perm), config);
  for (size_t i = 0; i < perm.size(); ++i) EXPECT_EQ(b.labels[i], a.labels[perm[i]]);
}

TEST(HdbscanTest, StrengthsAreInUnitInterval) {
  const auto result = Hdbscan(TwoBlobs(100, 8.0, 8).points, HdbscanConfig{});
  ASSERT_EQ(result.strength.size(), result.labels.size());
  for (size_t i = 0; i < result.labels.size(); ++i) {
    EXPECT_GE(result.strength[i], 0.0);
    EXPECT_LE(result.strength[i], 1.0);
    if (result.labels[i] == kNoise) {
      EXPECT_EQ(result.strength[i], 0.0);
    }
  }
}

TEST(HdbscanTest, ConfigRoundTripsAndValidates) {
  HdbscanConfig config;
  config.min_cluster_size = 7;
  config.min_samples = 3;
  config.allow_single_cluster = false;
  const auto back = HdbscanConfigFromJson(HdbscanConfigToJson(config));
  EXPECT_EQ(back.min_cluster_size, 7);
  EXPECT_EQ(back.EffectiveMinSamples(), 3);
  EXPECT_FALSE(back.allow_single_cluster);
  config.min_cluster_size = 1;
  EXPECT_THROW(config.Validate(), Error);
}

Matrix Points1D(std::initializer_list<double> xs) {
  Matrix m(xs.size(), 2);
  size_t i = 0;
  for (double x : xs) m(i++, 0) = x;
  return m;
}

TEST(PropagateTest, CoincidentPointTakesItsLabel) {
  const Matrix train = Points1D({0.0, 1.0, 2.0});
  const std::vector<int> labels = {4, 7, 9};
  const auto out = KnnPropagate(train, labels, Points1D({1.0}), 1);
  EXPECT_EQ(out.labels[0], 7);
  EXPECT_EQ(out.strength[0], 1.0);
}

TEST(PropagateTest, MajorityWithShare) {
  const Matrix train = Points1D({0.0, 0.1, 0.2, 5.0});
  const std::vector<int> labels = {2, 0, 2, 1};
  const auto out = KnnPropagate(train, labels, Points1D({0.1}), 3);
  EXPECT_EQ(out.labels[0], 2);
  EXPECT_DOUBLE_EQ(out.strength[0], 2.0 / 3.0);
}

TEST(PropagateTest, TieGoesToNearerLabel) {
  const Matrix train = Points1D({0.0, 1.0});
  const std::vector<int> labels = {0, 1};
  EXPECT_EQ(KnnPropagate(train, labels, Points1D({0.7}), 2).labels[0], 1);
  EXPECT_EQ(KnnPropagate(train, labels, Points1D({0.2}), 2).labels[0], 0);
}

TEST(PropagateTest, NoiseVotesUnlessExcluded) {
  const Matrix train = Points1D({0.0, 0.1, 0.2});
  const std::vector<int> labels = {kNoise, kNoise, 3};
  EXPECT_EQ(KnnPropagate(train, labels, Points1D({0.05}), 3).labels[0], kNoise);
  EXPECT_EQ(KnnPropagate(train, labels, Points1D({0.05}), 3, false).labels[0], 3);
}

TEST(PropagateTest, TrainOntoItselfWithOneNeighborIsIdentity) {
  const auto blobs = TwoBlobs(60, 4.0, 9);
  const auto clusters = Hdbscan(blobs.points, HdbscanConfig{});
  const auto out = KnnPropagate(blobs.points, clusters.labels, blobs.points, 1);
  EXPECT_EQ(out.labels, clusters.labels);
  EXPECT_EQ(out.num_clusters, clusters.num_clusters);
}

}  // namespace
}  // namespace adapthetero::clustering
