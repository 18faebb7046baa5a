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

#include "adapthetero/attribution.h"

#include <algorithm>
#include <cmath>

namespace adapthetero::attribution {
namespace {

using json = nlohmann::json;

// One entry of the unique feature path. `pweight` holds the permutation
// weight of subsets of a given size along the path.
struct PathElement {
  int feature = -1;
  double zero_fraction = 0.0;
  double one_fraction = 0.0;
  double pweight = 0.0;
};

void ExtendPath(PathElement* path, int depth, double zero_fraction,
                double one_fraction, int feature) {
  path[depth] = {feature, zero_fraction, one_fraction, depth == 0 ? 1.0 : 0.0};
  for (int i = depth - 1; i >= 0; --i) {
    path[i + 1].pweight += one_fraction * path[i].pweight * (i + 1) /
                           static_cast<double>(depth + 1);
    path[i].pweight = zero_fraction * path[i].pweight * (depth - i) /
                      static_cast<double>(depth + 1);
  }
}

void UnwindPath(PathElement* path, int depth, int index) {
  const double one_fraction = path[index].one_fraction;
  const double zero_fraction = path[index].zero_fraction;
  double next_one_portion = path[depth].pweight;
  for (int i = depth - 1; i >= 0; --i) {
    if (one_fraction != 0.0) {
      const double tmp = path[i].pweight;
      path[i].pweight = next_one_portion * (depth + 1) /
                        static_cast<double>((i + 1) * one_fraction);
      next_one_portion = tmp - path[i].pweight * zero_fraction * (depth - i) /
                                   static_cast<double>(depth + 1);
    } else {
      path[i].pweight = path[i].pweight * (depth + 1) /
                        (zero_fraction * static_cast<double>(depth - i));
    }
  }
  for (int i = index; i < depth; ++i) {
    path[i].feature = path[i + 1].feature;
    path[i].zero_fraction = path[i + 1].zero_fraction;
    path[i].one_fraction = path[i + 1].one_fraction;
  }
}

// Total permutation weight the path would have with element `index` removed.
double UnwoundPathSum(const PathElement* path, int depth, int index) {
  const double one_fraction = path[index].one_fraction;
  const double zero_fraction = path[index].zero_fraction;
  double next_one_portion = path[depth].pweight;
  double total = 0.0;
  for (int i = depth - 1; i >= 0; --i) {
    if (one_fraction != 0.0) {
      const double tmp = next_one_portion * (depth + 1) /
                         static_cast<double>((i + 1) * one_fraction);
      total += tmp;
      next_one_portion = path[i].pweight - tmp * zero_fraction * (depth - i) /
                                               static_cast<double>(depth + 1);
    } else if (zero_fraction != 0.0) {
      total += path[i].pweight / zero_fraction /
               (static_cast<double>(depth - i) / static_cast<double>(depth + 1));
    }
  }
  return total;
}

struct Recursion {
  const gbdt::Tree& tree;
  std::span<const double> x;
  std::span<double> phi;

  void Run(int node_index, int depth, PathElement* parent_path,
           double zero_fraction, double one_fraction, int feature) {
    PathElement* path = parent_path + depth + 1;
    std::copy(parent_path, parent_path + depth + 1, path);
    ExtendPath(path, depth, zero_fraction, one_fraction, feature);

    const gbdt::TreeNode& node = tree.nodes[node_index];
    if (node.is_leaf()) {
      for (int i = 1; i <= depth; ++i) {
        const double w = UnwoundPathSum(path, depth, i);
        const PathElement& el = path[i];
        phi[el.feature] += w * (el.one_fraction - el.zero_fraction) * node.value;
      }
      return;
    }

    const bool goes_left = x[node.feature] < node.threshold;
    const int hot = goes_left ? node.left : node.right;
    const int cold = goes_left ? node.right : node.left;
    const double hot_zero = tree.nodes[hot].cover / node.cover;
    const double cold_zero = tree.nodes[cold].cover / node.cover;
    double incoming_zero = 1.0;
    double incoming_one = 1.0;

    // A feature already on the path is unwound and re-extended here, so each
    // feature appears once.
    int path_index = 0;
    for (; path_index <= depth; ++path_index) {
      if (path[path_index].feature == node.feature) break;
    }
    if (path_index != depth + 1) {
      incoming_zero = path[path_index].zero_fraction;
      incoming_one = path[path_index].one_fraction;
      UnwindPath(path, depth, path_index);
      depth -= 1;
    }
    Run(hot, depth + 1, path, hot_zero * incoming_zero, incoming_one,
        node.feature);
    Run(cold, depth + 1, path, cold_zero * incoming_zero, 0.0, node.feature);
  }
};

}  // namespace

void CheckCovers(const gbdt::Tree& tree) {
  for (const auto& node : tree.nodes) {
    if (node.is_leaf()) continue;
    if (!(node.cover > 0.0)) {
      throw Error(ErrorCode::kModelIntegrity, "internal node with zero cover");
    }
    const double sum = tree.nodes[node.left].cover + tree.nodes[node.right].cover;
    if (std::abs(sum - node.cover) > 1e-9 * std::max(1.0, node.cover)) {
      throw Error(ErrorCode::kModelIntegrity,
                  "node cover differs from the sum of its children");
    }
  }
}

double ExpectedValue(const gbdt::Tree& tree) {
  const double total = tree.nodes.front().cover;
  if (tree.nodes.size() == 1) return tree.nodes.front().value;
  double sum = 0.0;
  for (const auto& node : tree.nodes) {
    if (node.is_leaf()) sum += node.cover * node.value;
  }
  return sum / total;
}

void TreeShap(const gbdt::Tree& tree, std::span<const double> x,
              std::span<double> phi) {
  if (tree.nodes.size() <= 1) return;
  const int max_depth = tree.MaxDepth();
  std::vector<PathElement> storage(
      static_cast<size_t>((max_depth + 2) * (max_depth + 3) / 2));
  Recursion recursion{tree, x, phi};
  recursion.Run(0, 0, storage.data(), 1.0, 1.0, -1);
}

ShapMatrix ComputeShap(const gbdt::TreeEnsemble& model, const Matrix& x,
                       std::vector<std::string> feature_names) {
  if (x.cols() != model.n_features) {
    throw Error(ErrorCode::kShape, "attribution input has wrong feature count");
  }
  if (feature_names.empty()) {
    for (size_t j = 0; j < x.cols(); ++j) {
      feature_names.push_back("f" + std::to_string(j));
    }
  }
  if (feature_names.size() != x.cols()) {
    throw Error(ErrorCode::kShape, "feature names do not match feature count");
  }
  for (const auto& tree : model.trees) CheckCovers(tree);

  ShapMatrix out;
  out.feature_names = std::move(feature_names);
  out.base_value = model.base_score;
  for (const auto& tree : model.trees) {
    out.base_value += model.learning_rate * ExpectedValue(tree);
  }
  out.values = Matrix(x.rows(), x.cols());
  std::vector<double> phi(x.cols());
  for (size_t r = 0; r < x.rows(); ++r) {
    std::fill(phi.begin(), phi.end(), 0.0);
    for (const auto& tree : model.trees) TreeShap(tree, x.row(r), phi);
    auto row = out.values.row(r);
    for (size_t j = 0; j < x.cols(); ++j) row[j] = model.learning_rate * phi[j];
  }
  return out;
}

json StatsToJson(const StandardizationStats& stats) {
  return {{"mean", stats.mean},
          {"stddev", stats.stddev},
          {"zero_variance", stats.zero_variance}};
}

StandardizationStats StatsFromJson(const json& j) {
  StandardizationStats stats;
  stats.mean = j.at("mean").get<std::vector<double>>();
  stats.stddev = j.at("stddev").get<std::vector<double>>();
  stats.zero_variance = j.at("zero_variance").get<std::vector<bool>>();
  return stats;
}

StandardizationStats StandardizeFit(const Matrix& values) {
  const size_t n = values.rows();
  const size_t d = values.cols();
  StandardizationStats stats;
  stats.mean.assign(d, 0.0);
  stats.stddev.assign(d, 0.0);
  stats.zero_variance.assign(d, true);
  if (n == 0) return stats;
  for (size_t r = 0; r < n; ++r) {
    for (size_t j = 0; j < d; ++j) stats.mean[j] += values(r, j);
  }
  for (double& m : stats.mean) m /= static_cast<double>(n);
  for (size_t r = 0; r < n; ++r) {
    for (size_t j = 0; j < d; ++j) {
      const double diff = values(r, j) - stats.mean[j];
      stats.stddev[j] += diff * diff;
    }
  }
  for (size_t j = 0; j < d; ++j) {
    stats.stddev[j] = std::sqrt(stats.stddev[j] / static_cast<double>(n));
    // Rounding in the mean leaves a residual spread of a few ulps on
    // constant columns.
    stats.zero_variance[j] =
        stats.stddev[j] <= 1e-12 * std::max(1.0, std::abs(stats.mean[j]));
  }
  return stats;
}

Matrix StandardizeApply(const Matrix& values,
                        const StandardizationStats& stats) {
  if (values.cols() != stats.mean.size()) {
    throw Error(ErrorCode::kShape,
                "standardization stats fit on a different feature set");
  }
  Matrix out(values.rows(), values.cols());
  for (size_t r = 0; r < values.rows(); ++r) {
    for (size_t j = 0; j < values.cols(); ++j) {
      out(r, j) = stats.zero_variance[j]
                      ? 0.0
                      : (values(r, j) - stats.mean[j]) / stats.stddev[j];
    }
  }
  return out;
}

}  // namespace adapthetero::attribution
