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

// HDBSCAN density clustering and k-nearest-neighbor label propagation.

#ifndef ADAPTHETERO_CLUSTERING_H_
#define ADAPTHETERO_CLUSTERING_H_

#include <span>
#include <vector>

#include "adapthetero/common.h"
#include "json.hpp"

namespace adapthetero::clustering {

inline constexpr int kNoise = -1;

struct ClusterAssignment {
  // kNoise or a cluster id in [0, num_clusters).
  std::vector<int> labels;
  int num_clusters = 0;
  std::vector<double> strength;
};

struct HdbscanConfig {
  int min_cluster_size = 15;
  // 0 means min_cluster_size.
  int min_samples = 0;
  // Lets the root stand as the only cluster instead of splitting or noise.
  bool allow_single_cluster = true;

  int EffectiveMinSamples() const {
    return min_samples > 0 ? min_samples : min_cluster_size;
  }
  void Validate() const;
};

nlohmann::json HdbscanConfigToJson(const HdbscanConfig& config);
HdbscanConfig HdbscanConfigFromJson(const nlohmann::json& json);

// Distance from each row to its min_samples-th nearest row, the row itself
// counting as the first.
std::vector<double> CoreDistances(const Matrix& points, int min_samples);

struct WeightedEdge {
  size_t a = 0;
  size_t b = 0;
  double weight = 0.0;
};

// Minimum spanning tree under the mutual reachability distance
// max(core_a, core_b, d(a, b)), by Prim's algorithm. Edges appear in the
// order they join the tree.
std::vector<WeightedEdge> MutualReachabilityMst(const Matrix& points,
                                                std::span<const double> core);

// One merge of the single-linkage dendrogram. Nodes below n are rows; merge i
// creates node n + i.
struct Merge {
  size_t left = 0;
  size_t right = 0;
  double distance = 0.0;
  size_t size = 0;
};

std::vector<Merge> SingleLinkage(std::vector<WeightedEdge> mst, size_t n);

// Row of the condensed tree: `child` is a row (below n) or a cluster (n and
// above) that leaves `parent` at density lambda = 1 / distance.
struct CondensedEntry {
  size_t parent = 0;
  size_t child = 0;
  double lambda = 0.0;
  size_t size = 0;
};

std::vector<CondensedEntry> CondenseTree(const std::vector<Merge>& merges,
                                         size_t n, size_t min_cluster_size);

// Clusters are chosen by excess of mass. The root is a candidate only under
// allow_single_cluster; otherwise a tree that never splits leaves every row as
// noise. Cluster ids follow the first appearance
// of their rows in lexicographic coordinate order.
ClusterAssignment Hdbscan(const Matrix& points, const HdbscanConfig& config);

// Labels each query by majority vote of its k nearest training rows; noise
// votes like any label unless `noise_votes` is false. Ties go to the tied label
// met first in order of distance. Strength is the winning vote share.
ClusterAssignment KnnPropagate(const Matrix& train_coords,
                               std::span<const int> train_labels,
                               const Matrix& query_coords, size_t k,
                               bool noise_votes = true);

}  // namespace adapthetero::clustering

#endif  // ADAPTHETERO_CLUSTERING_H_
