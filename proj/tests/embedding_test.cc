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

#include "adapthetero/embedding.h"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "oracles.h"
#include "test_support.h"

namespace adapthetero::embedding {
namespace {

using testing_support::RandomNormal;
using testing_support::TwoBlobs;

TEST(KnnTest, MatchesSortedBruteForce) {
  Rng rng(1);
  const Matrix p = RandomNormal(60, 3, rng);
  const size_t k = 7;
  const Neighbors nb = KnnGraph(p, k);
  for (size_t q = 0; q < p.rows(); ++q) {
    std::vector<std::pair<double, size_t>> all;
    for (size_t j = 0; j < p.rows(); ++j) {
      if (j == q) continue;
      double s = 0.0;
      for (size_t c = 0; c < 3; ++c) s += (p(q, c) - p(j, c)) * (p(q, c) - p(j, c));
      all.push_back({std::sqrt(s), j});
    }
    std::sort(all.begin(), all.end());
    for (size_t r = 0; r < k; ++r) {
      EXPECT_EQ(nb.IndicesOf(q)[r], all[r].second);
      EXPECT_NEAR(nb.DistancesOf(q)[r], all[r].first, 1e-12);
    }
  }
}

TEST(KnnTest, TiesGoToLowerIndex) {
  Matrix p(4, 1);
  p(0, 0) = 0.0;
  p(1, 0) = 1.0;
  p(2, 0) = -1.0;
  p(3, 0) = 5.0;
  const Neighbors nb = KnnGraph(p, 2);
  EXPECT_EQ(nb.IndicesOf(0)[0], 1u);
  EXPECT_EQ(nb.IndicesOf(0)[1], 2u);
  EXPECT_THROW(KnnGraph(p, 4), Error);
  EXPECT_THROW(KnnQuery(p, Matrix(1, 2), 1), Error);
}

TEST(CurveTest, LeastSquaresFitAgreesWithGridSearch) {
  for (double min_dist : {0.1, 0.25, 0.5}) {
    const CurveParams fit = FitCurve(min_dist);
    const auto [a, b] = oracle::CurveGridSearch(min_dist);
    EXPECT_LE(oracle::CurveLoss(fit.a, fit.b, min_dist),
              oracle::CurveLoss(a, b, min_dist) + 1e-9);
    EXPECT_NEAR(fit.a, a, 2e-3 * a) << min_dist;
    EXPECT_NEAR(fit.b, b, 2e-3 * b) << min_dist;
  }
  const CurveParams standard = FitCurve(0.1);
  EXPECT_NEAR(standard.a, 1.577, 0.01);
  EXPECT_NEAR(standard.b, 0.895, 0.01);
}

TEST(FuzzyGraphTest, BandwidthsHitTargetAndWeightsAreSymmetric) {
  Rng rng(2);
  const Matrix p = RandomNormal(120, 4, rng);
  const size_t k = 10;
  const Neighbors nb = KnnGraph(p, k);
  const FuzzyGraph g = BuildFuzzyGraph(nb);
  const double target = std::log2(static_cast<double>(k));
  for (size_t i = 0; i < p.rows(); ++i) {
    const bool fallback = std::find(g.sigma_fallbacks.begin(), g.sigma_fallbacks.end(), i) !=
                          g.sigma_fallbacks.end();
    EXPECT_NEAR(g.rho[i], nb.DistancesOf(i)[0], 1e-15);
    double sum = 0.0;
    for (double d : nb.DistancesOf(i)) sum += std::exp(-std::max(0.0, d - g.rho[i]) / g.sigma[i]);
    EXPECT_NEAR(std::abs(sum - target), g.residual[i], 1e-9);
    if (!fallback) {
      EXPECT_LE(g.residual[i], 1e-3);
    }
  }

  // Directed memberships recomputed from rho and sigma, then symmetrized.
  std::map<std::pair<size_t, size_t>, double> directed;
  for (size_t i = 0; i < p.rows(); ++i) {
    for (size_t r = 0; r < k; ++r) {
      const double d = nb.DistancesOf(i)[r];
      directed[{i, nb.IndicesOf(i)[r]}] = std::exp(-std::max(0.0, d - g.rho[i]) / g.sigma[i]);
    }
  }
  for (size_t e = 0; e < g.edges.size(); ++e) {
    const Edge& edge = g.edges[e];
    EXPECT_LT(edge.from, edge.to);
    if (e > 0) {
      EXPECT_LT(std::make_pair(g.edges[e - 1].from, g.edges[e - 1].to),
                std::make_pair(edge.from, edge.to));
    }
    EXPECT_GE(edge.weight, 0.0);
    EXPECT_LE(edge.weight, 1.0);
    const auto ab = directed.find({edge.from, edge.to});
    const auto ba = directed.find({edge.to, edge.from});
    const double a = ab == directed.end() ? 0.0 : ab->second;
    const double b = ba == directed.end() ? 0.0 : ba->second;
    EXPECT_NEAR(edge.weight, a + b - a * b, 1e-12);
  }
}

UmapConfig SmallConfig(uint64_t seed) {
  UmapConfig config;
  config.n_neighbors = 10;
  config.n_epochs = 100;
  config.seed = seed;
  return config;
}

TEST(FitEmbeddingTest, ZeroEpochsReturnsInitialization) {
  Rng rng(3);
  const Matrix p = RandomNormal(50, 3, rng);
  UmapConfig config = SmallConfig(9);
  config.n_epochs = 0;
  const Embedding2D e = FitEmbedding(p, config);
  const auto order = LexicographicRowOrder(p);
  Rng init(DeriveSeed(9, "layout_init"));
  for (size_t i = 0; i < p.rows(); ++i) {
    const double x = init.Uniform(-10.0, 10.0);
    const double y = init.Uniform(-10.0, 10.0);
    EXPECT_EQ(e.coords(order[i], 0), x);
    EXPECT_EQ(e.coords(order[i], 1), y);
  }
}

TEST(FitEmbeddingTest, SameSeedIsBitwiseIdentical) {
  Rng rng(4);
  const Matrix p = RandomNormal(150, 5, rng);
  const Embedding2D a = FitEmbedding(p, SmallConfig(1));
  const Embedding2D b = FitEmbedding(p, SmallConfig(1));
  EXPECT_EQ(a.coords, b.coords);
  EXPECT_NE(FitEmbedding(p, SmallConfig(2)).coords, a.coords);
}

TEST(FitEmbeddingTest, SeparatedBlobsStaySeparated) {
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    const auto blobs = TwoBlobs(200, 10.0, seed, 5);
    UmapConfig config;
    config.seed = seed;
    const Embedding2D e = FitEmbedding(blobs.points, config);
    EXPECT_GT(oracle::Silhouette(e.coords, blobs.labels), 0.5) << seed;
  }
}

TEST(FitEmbeddingTest, RowPermutationPermutesCoordinates) {
  Rng rng(5);
  const Matrix p = RandomNormal(120, 4, rng);
  std::vector<size_t> perm(p.rows());
  std::iota(perm.begin(), perm.end(), 0);
  rng.Shuffle(perm);
  const Embedding2D a = FitEmbedding(p, SmallConfig(3));
  const Embedding2D b = FitEmbedding(p.SelectRows(perm), SmallConfig(3));
  for (size_t i = 0; i < p.rows(); ++i) {
    EXPECT_EQ(b.coords(i, 0), a.coords(perm[i], 0));
    EXPECT_EQ(b.coords(i, 1), a.coords(perm[i], 1));
  }
}

TEST(FitEmbeddingTest, ConfigIsValidated) {
  Rng rng(6);
  const Matrix p = RandomNormal(10, 2, rng);
  UmapConfig config;
  config.n_neighbors = 10;
  EXPECT_THROW(FitEmbedding(p, config), Error);
  config.n_neighbors = 5;
  config.min_dist = 0.0;
  EXPECT_THROW(FitEmbedding(p, config), Error);
  const UmapConfig back = UmapConfigFromJson(UmapConfigToJson(SmallConfig(4)));
  EXPECT_EQ(back, SmallConfig(4));
}

TEST(TransformTest, ExactMatchLandsOnTrainPoint) {
  Rng rng(7);
  const Matrix train = RandomNormal(30, 3, rng);
  const Matrix coords = RandomNormal(30, 2, rng);
  const std::vector<size_t> pick = {12};
  const Matrix out = TransformEmbedding(train, coords, train.SelectRows(pick), 5);
  EXPECT_NEAR(out(0, 0), coords(12, 0), 1e-9);
  EXPECT_NEAR(out(0, 1), coords(12, 1), 1e-9);
}

TEST(TransformTest, EquidistantQueryLandsAtMidpoint) {
  Matrix train(2, 1);
  train(0, 0) = -1.0;
  train(1, 0) = 1.0;
  Matrix coords(2, 2);
  coords(0, 0) = 0.0;
  coords(0, 1) = 4.0;
  coords(1, 0) = 2.0;
  coords(1, 1) = -4.0;
  const Matrix out = TransformEmbedding(train, coords, Matrix(1, 1, 0.0), 2);
  EXPECT_NEAR(out(0, 0), 1.0, 1e-12);
  EXPECT_NEAR(out(0, 1), 0.0, 1e-12);
}

TEST(TransformTest, PlacementIsInsideNeighborBoundingBox) {
  Rng rng(8);
  const Matrix train = RandomNormal(80, 3, rng);
  const Embedding2D e = FitEmbedding(train, SmallConfig(5));
  const Matrix queries = RandomNormal(20, 3, rng);
  const size_t k = 6;
  const Matrix out = TransformEmbedding(train, e.coords, queries, k);
  const Neighbors nb = KnnQuery(train, queries, k);
  for (size_t q = 0; q < queries.rows(); ++q) {
    for (size_t c = 0; c < 2; ++c) {
      double lo = INFINITY, hi = -INFINITY;
      for (size_t j : nb.IndicesOf(q)) {
        lo = std::min(lo, e.coords(j, c));
        hi = std::max(hi, e.coords(j, c));
      }
      EXPECT_GE(out(q, c), lo - 1e-9);
      EXPECT_LE(out(q, c), hi + 1e-9);
    }
  }
  EXPECT_THROW(TransformEmbedding(train, e.coords, Matrix(1, 2), k), Error);
}

}  // namespace
}  // namespace adapthetero::embedding
