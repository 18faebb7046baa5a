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

// Two-dimensional UMAP layout of a point cloud, fit on training rows, with a
// placement-only transform for new rows.

#ifndef ADAPTHETERO_EMBEDDING_H_
#define ADAPTHETERO_EMBEDDING_H_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "adapthetero/common.h"
#include "json.hpp"

namespace adapthetero::embedding {

struct UmapConfig {
  int n_neighbors = 15;
  double min_dist = 0.1;
  int n_epochs = 200;
  int negative_sample_rate = 5;
  uint64_t seed = 0;

  // Throws kConfig. `n_rows` is the size of the data to be fit.
  void Validate(size_t n_rows) const;
  bool operator==(const UmapConfig&) const = default;
};

nlohmann::json UmapConfigToJson(const UmapConfig& config);
UmapConfig UmapConfigFromJson(const nlohmann::json& json);

// k nearest neighbors per query row, nearest first. Row q's neighbors are
// indices[q * k .. q * k + k).
struct Neighbors {
  size_t k = 0;
  std::vector<size_t> indices;
  std::vector<double> distances;

  std::span<const size_t> IndicesOf(size_t q) const {
    return {indices.data() + q * k, k};
  }
  std::span<const double> DistancesOf(size_t q) const {
    return {distances.data() + q * k, k};
  }
};

double EuclideanDistance(std::span<const double> a, std::span<const double> b);

// Exact neighbors of every row among the other rows. Equal distances go to
// the lower row index. Throws kConfig unless 1 <= k < rows.
Neighbors KnnGraph(const Matrix& points, size_t k);

// Exact neighbors of each query row among the reference rows.
Neighbors KnnQuery(const Matrix& reference, const Matrix& queries, size_t k);

// Parameters of the low-dimensional similarity 1 / (1 + a * d^(2b)).
struct CurveParams {
  double a = 1.0;
  double b = 1.0;
};

// Least-squares fit of the curve to 1 for d < min_dist and
// exp(-(d - min_dist) / spread) beyond, sampled on 300 points over
// [0, 3 * spread].
CurveParams FitCurve(double min_dist, double spread = 1.0);

struct Edge {
  size_t from = 0;
  size_t to = 0;
  double weight = 0.0;
};

struct FuzzyGraph {
  std::vector<double> rho;
  std::vector<double> sigma;
  // |sum_j exp(-max(0, d_ij - rho_i) / sigma_i) - log2(k)| per row.
  std::vector<double> residual;
  // Rows whose bisection missed the target; sigma is then their mean neighbor
  // distance.
  std::vector<size_t> sigma_fallbacks;
  // Symmetrized memberships a + b - ab, one entry per unordered pair
  // (from < to), sorted by (from, to).
  std::vector<Edge> edges;
};

FuzzyGraph BuildFuzzyGraph(const Neighbors& neighbors);

struct Embedding2D {
  Matrix coords;
  UmapConfig config;
  size_t fitted_rows = 0;
  CurveParams curve;
  size_t sigma_fallbacks = 0;
};

// Coordinates start uniform in [-10, 10]^2 and are refined by stochastic
// attraction along graph edges and repulsion from negative samples. Rows are
// processed in lexicographic order of their values, so permuting the input
// permutes the output the same way.
Embedding2D FitEmbedding(const Matrix& points, const UmapConfig& config);

// Places each query row at the mean of its k nearest training rows' coordinates
// weighted by 1 / (distance + 1e-12).
Matrix TransformEmbedding(const Matrix& train_points, const Matrix& train_coords,
                          const Matrix& queries, size_t k);

}  // namespace adapthetero::embedding

#endif  // ADAPTHETERO_EMBEDDING_H_
