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

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

namespace adapthetero::clustering {
namespace {

using json = nlohmann::json;

// Density assigned to merges at distance zero.
constexpr double kMaxLambda = 1e300;

double Distance(std::span<const double> a, std::span<const double> b) {
  double sum = 0.0;
  for (size_t j = 0; j < a.size(); ++j) {
    const double diff = a[j] - b[j];
    sum += diff * diff;
  }
  return std::sqrt(sum);
}

double LambdaOf(double distance) {
  return distance > 0.0 ? std::min(1.0 / distance, kMaxLambda) : kMaxLambda;
}

class DisjointSets {
 public:
  explicit DisjointSets(size_t n) : parent_(n) {
    std::iota(parent_.begin(), parent_.end(), 0);
  }
  size_t Find(size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  void Union(size_t into, size_t from) { parent_[Find(from)] = Find(into); }

 private:
  std::vector<size_t> parent_;
};

// Rows and inner nodes of the dendrogram below `node`, breadth first.
std::vector<size_t> Descendants(const std::vector<Merge>& merges, size_t n,
                                size_t node) {
  std::vector<size_t> out{node};
  for (size_t i = 0; i < out.size(); ++i) {
    if (out[i] >= n) {
      const Merge& m = merges[out[i] - n];
      out.push_back(m.left);
      out.push_back(m.right);
    }
  }
  return out;
}

// Cluster labels (in internal numbering, or kNoise) and strengths of the
// condensed tree rows.
ClusterAssignment ExtractClusters(const std::vector<CondensedEntry>& tree,
                                  size_t n, bool allow_single_cluster) {
  ClusterAssignment out;
  out.labels.assign(n, kNoise);
  out.strength.assign(n, 0.0);
  if (tree.empty()) return out;

  size_t max_cluster = n;
  for (const auto& e : tree) max_cluster = std::max({max_cluster, e.parent, e.child});
  const size_t n_clusters = max_cluster - n + 1;

  std::vector<double> birth(n_clusters, 0.0);
  std::vector<size_t> parent_of(n_clusters, 0);
  std::vector<std::vector<size_t>> children(n_clusters);
  for (const auto& e : tree) {
    if (e.child >= n) {
      birth[e.child - n] = e.lambda;
      parent_of[e.child - n] = e.parent;
      children[e.parent - n].push_back(e.child);
    }
  }
  std::vector<double> stability(n_clusters, 0.0);
  std::vector<double> max_lambda(n_clusters, 0.0);
  for (const auto& e : tree) {
    const size_t c = e.parent - n;
    stability[c] += (e.lambda - birth[c]) * static_cast<double>(e.size);
    max_lambda[c] = std::max(max_lambda[c], e.lambda);
  }

  // Children carry larger ids than their parents, so a reverse sweep visits
  // every cluster after its subtree.
  std::vector<bool> selected(n_clusters, true);
  for (size_t c = n_clusters; c-- > 0;) {
    if (c == 0 && !allow_single_cluster) {
      selected[c] = false;
      continue;
    }
    double subtree = 0.0;
    for (size_t child : children[c]) subtree += stability[child - n];
    if (!children[c].empty() && subtree > stability[c]) {
      selected[c] = false;
      stability[c] = subtree;
    } else {
      std::vector<size_t> stack(children[c].begin(), children[c].end());
      while (!stack.empty()) {
        const size_t d = stack.back() - n;
        stack.pop_back();
        selected[d] = false;
        stack.insert(stack.end(), children[d].begin(), children[d].end());
      }
    }
  }

  std::vector<int> owner(n_clusters, kNoise);
  for (size_t c = 0; c < n_clusters; ++c) {
    if (selected[c]) {
      owner[c] = static_cast<int>(c);
    } else if (c > 0) {
      owner[c] = owner[parent_of[c] - n];
    }
  }
  for (const auto& e : tree) {
    if (e.child >= n) continue;
    const int c = owner[e.parent - n];
    if (c == kNoise) continue;
    if (c == 0 && e.lambda < max_lambda[0]) continue;
    out.labels[e.child] = c;
    const double top = max_lambda[static_cast<size_t>(c)];
    out.strength[e.child] = top > 0.0 ? std::min(e.lambda, top) / top : 1.0;
  }
  return out;
}

}  // namespace

void HdbscanConfig::Validate() const {
  if (min_cluster_size < 2) {
    throw Error(ErrorCode::kConfig, "min_cluster_size must be at least 2");
  }
  if (min_samples < 0) throw Error(ErrorCode::kConfig, "min_samples must be non-negative");
}

json HdbscanConfigToJson(const HdbscanConfig& config) {
  return {{"min_cluster_size", config.min_cluster_size},
          {"min_samples", config.EffectiveMinSamples()},
          {"allow_single_cluster", config.allow_single_cluster}};
}

HdbscanConfig HdbscanConfigFromJson(const json& j) {
  HdbscanConfig config;
  config.min_cluster_size = j.value("min_cluster_size", config.min_cluster_size);
  config.min_samples = j.value("min_samples", config.min_samples);
  config.allow_single_cluster = j.value("allow_single_cluster", config.allow_single_cluster);
  return config;
}

std::vector<double> CoreDistances(const Matrix& points, int min_samples) {
  const size_t n = points.rows();
  std::vector<double> core(n, 0.0);
  if (n == 0) return core;
  const size_t rank = std::min(static_cast<size_t>(std::max(min_samples, 1)), n) - 1;
  std::vector<double> dist(n);
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = 0; j < n; ++j) dist[j] = Distance(points.row(i), points.row(j));
    std::nth_element(dist.begin(), dist.begin() + rank, dist.end());
    core[i] = dist[rank];
  }
  return core;
}

std::vector<WeightedEdge> MutualReachabilityMst(const Matrix& points,
                                                std::span<const double> core) {
  const size_t n = points.rows();
  std::vector<WeightedEdge> edges;
  if (n < 2) return edges;
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> best(n, inf);
  std::vector<size_t> via(n, 0);
  std::vector<bool> in_tree(n, false);
  size_t current = 0;
  in_tree[0] = true;
  for (size_t step = 1; step < n; ++step) {
    size_t next = n;
    for (size_t v = 0; v < n; ++v) {
      if (in_tree[v]) continue;
      const double d = std::max(
          {core[current], core[v], Distance(points.row(current), points.row(v))});
      if (d < best[v]) {
        best[v] = d;
        via[v] = current;
      }
      if (next == n || best[v] < best[next]) next = v;
    }
    in_tree[next] = true;
    edges.push_back({via[next], next, best[next]});
    current = next;
  }
  return edges;
}

std::vector<Merge> SingleLinkage(std::vector<WeightedEdge> mst, size_t n) {
  std::stable_sort(mst.begin(), mst.end(),
                   [](const WeightedEdge& x, const WeightedEdge& y) {
                     return x.weight < y.weight;
                   });
  DisjointSets sets(n);
  std::vector<size_t> node_of(n);
  std::iota(node_of.begin(), node_of.end(), 0);
  std::vector<size_t> size_of(n, 1);
  std::vector<Merge> merges;
  merges.reserve(mst.size());
  for (const auto& edge : mst) {
    const size_t ra = sets.Find(edge.a);
    const size_t rb = sets.Find(edge.b);
    if (ra == rb) {
      throw Error(ErrorCode::kValidation, "spanning tree edge closes a cycle");
    }
    const size_t merged = size_of[ra] + size_of[rb];
    merges.push_back({node_of[ra], node_of[rb], edge.weight, merged});
    sets.Union(ra, rb);
    node_of[ra] = n + merges.size() - 1;
    size_of[ra] = merged;
  }
  return merges;
}

std::vector<CondensedEntry> CondenseTree(const std::vector<Merge>& merges,
                                         size_t n, size_t min_cluster_size) {
  std::vector<CondensedEntry> out;
  if (n < 2 || merges.size() != n - 1) return out;
  auto size_of = [&](size_t node) { return node < n ? size_t{1} : merges[node - n].size; };

  const size_t root = 2 * n - 2;
  std::map<size_t, size_t> relabel{{root, n}};
  size_t next_label = n + 1;
  std::vector<bool> ignore(2 * n - 1, false);

  auto drop_subtree = [&](size_t parent_label, size_t node, double lambda) {
    for (size_t d : Descendants(merges, n, node)) {
      if (d < n) out.push_back({parent_label, d, lambda, 1});
      ignore[d] = true;
    }
  };

  for (size_t node : Descendants(merges, n, root)) {
    if (node < n || ignore[node]) continue;
    const Merge& m = merges[node - n];
    const double lambda = LambdaOf(m.distance);
    const size_t label = relabel.at(node);
    const size_t left_size = size_of(m.left);
    const size_t right_size = size_of(m.right);
    const bool left_big = left_size >= min_cluster_size;
    const bool right_big = right_size >= min_cluster_size;
    if (left_big && right_big) {
      relabel[m.left] = next_label++;
      out.push_back({label, relabel[m.left], lambda, left_size});
      relabel[m.right] = next_label++;
      out.push_back({label, relabel[m.right], lambda, right_size});
    } else if (!left_big && !right_big) {
      drop_subtree(label, m.left, lambda);
      drop_subtree(label, m.right, lambda);
    } else if (!left_big) {
      relabel[m.right] = label;
      drop_subtree(label, m.left, lambda);
    } else {
      relabel[m.left] = label;
      drop_subtree(label, m.right, lambda);
    }
  }
  return out;
}

ClusterAssignment Hdbscan(const Matrix& points, const HdbscanConfig& config) {
  config.Validate();
  const size_t n = points.rows();
  ClusterAssignment out;
  out.labels.assign(n, kNoise);
  out.strength.assign(n, 0.0);
  if (n < 2 || n < static_cast<size_t>(config.min_cluster_size)) return out;

  const std::vector<size_t> order = LexicographicRowOrder(points);
  const Matrix sorted = points.SelectRows(order);
  const std::vector<double> core = CoreDistances(sorted, config.EffectiveMinSamples());
  const std::vector<Merge> merges =
      SingleLinkage(MutualReachabilityMst(sorted, core), n);
  const std::vector<CondensedEntry> tree =
      CondenseTree(merges, n, static_cast<size_t>(config.min_cluster_size));
  const ClusterAssignment raw = ExtractClusters(tree, n, config.allow_single_cluster);

  std::map<int, int> renumber;
  for (size_t i = 0; i < n; ++i) {
    const int label = raw.labels[i];
    if (label != kNoise && !renumber.count(label)) {
      const int id = static_cast<int>(renumber.size());
      renumber[label] = id;
    }
    out.labels[order[i]] = label == kNoise ? kNoise : renumber[label];
    out.strength[order[i]] = raw.strength[i];
  }
  out.num_clusters = static_cast<int>(renumber.size());
  return out;
}

ClusterAssignment KnnPropagate(const Matrix& train_coords,
                               std::span<const int> train_labels,
                               const Matrix& query_coords, size_t k,
                               bool noise_votes) {
  const size_t n = train_coords.rows();
  if (train_labels.size() != n) {
    throw Error(ErrorCode::kShape, "one training label per training row required");
  }
  if (n == 0) throw Error(ErrorCode::kConfig, "propagation needs training rows");
  if (k < 1 || k > n) {
    throw Error(ErrorCode::kConfig, "propagation k must be in [1, training rows]");
  }
  if (query_coords.cols() != train_coords.cols()) {
    throw Error(ErrorCode::kShape, "query width differs from training width");
  }
  ClusterAssignment out;
  out.labels.assign(query_coords.rows(), kNoise);
  out.strength.assign(query_coords.rows(), 0.0);
  out.num_clusters = 1 + *std::max_element(train_labels.begin(), train_labels.end());
  out.num_clusters = std::max(out.num_clusters, 0);

  std::vector<std::pair<double, size_t>> candidates;
  candidates.reserve(n);
  for (size_t q = 0; q < query_coords.rows(); ++q) {
    candidates.clear();
    for (size_t r = 0; r < n; ++r) {
      candidates.emplace_back(Distance(query_coords.row(q), train_coords.row(r)), r);
    }
    std::partial_sort(candidates.begin(), candidates.begin() + k, candidates.end());

    // (label, votes) in order of first appearance by distance.
    std::vector<std::pair<int, int>> votes;
    int voters = 0;
    for (size_t i = 0; i < k; ++i) {
      const int label = train_labels[candidates[i].second];
      if (!noise_votes && label == kNoise) continue;
      ++voters;
      auto it = std::find_if(votes.begin(), votes.end(),
                             [&](const auto& v) { return v.first == label; });
      if (it == votes.end()) {
        votes.emplace_back(label, 1);
      } else {
        ++it->second;
      }
    }
    if (votes.empty()) continue;
    auto best = votes.begin();
    for (auto it = votes.begin(); it != votes.end(); ++it) {
      if (it->second > best->second) best = it;
    }
    out.labels[q] = best->first;
    out.strength[q] = static_cast<double>(best->second) / voters;
  }
  return out;
}

}  // namespace adapthetero::clustering
