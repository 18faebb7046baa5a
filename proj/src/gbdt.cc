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

#include "adapthetero/gbdt.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <tuple>

#include "adapthetero/stats.h"

namespace adapthetero::gbdt {
namespace {

using json = nlohmann::json;

constexpr double kPrevalenceClamp = 1e-6;
constexpr int kMaxPartitionAttempts = 10;
constexpr double kTuneTrainFraction = 0.8;

void CheckInputs(const Matrix& x, std::span<const int> labels) {
  if (x.rows() != labels.size()) {
    throw Error(ErrorCode::kShape, "feature rows and labels differ in length");
  }
  if (x.rows() == 0) throw Error(ErrorCode::kTraining, "no training rows");
  for (const double v : x.data()) {
    if (!std::isfinite(v)) {
      throw Error(ErrorCode::kValidation, "non-finite feature value");
    }
  }
  size_t positives = 0;
  for (const int y : labels) positives += y != 0;
  if (positives == 0 || positives == labels.size()) {
    throw Error(ErrorCode::kTraining, "training labels hold a single class");
  }
}

// Best split found so far for one frontier node.
struct Candidate {
  double gain = -std::numeric_limits<double>::infinity();
  int feature = -1;
  double threshold = 0.0;
};

// Column-major copy of the features plus, per feature, row indices sorted by
// value (stable, so equal values keep row order).
struct PresortedData {
  std::vector<std::vector<double>> columns;
  std::vector<std::vector<uint32_t>> order;
};

PresortedData Presort(const Matrix& x) {
  PresortedData data;
  data.columns.assign(x.cols(), std::vector<double>(x.rows()));
  data.order.assign(x.cols(), std::vector<uint32_t>(x.rows()));
  for (size_t j = 0; j < x.cols(); ++j) {
    auto& column = data.columns[j];
    for (size_t i = 0; i < x.rows(); ++i) column[i] = x(i, j);
    auto& order = data.order[j];
    std::iota(order.begin(), order.end(), 0u);
    std::stable_sort(order.begin(), order.end(), [&](uint32_t a, uint32_t b) {
      return column[a] < column[b];
    });
  }
  return data;
}

double Midpoint(double lower, double upper) {
  const double mid = lower + 0.5 * (upper - lower);
  // Adjacent doubles can round the midpoint onto `lower`, which would route
  // `lower` to the right.
  return lower < mid ? mid : upper;
}

// Rewrites node indices into preorder, the order used by serialization, so a
// serialized tree loads back with identical indices.
Tree Renumber(const Tree& tree, std::vector<int>& node_of) {
  std::vector<int> new_index(tree.nodes.size(), -1);
  std::vector<int> preorder;
  std::vector<int> stack = {0};
  while (!stack.empty()) {
    const int k = stack.back();
    stack.pop_back();
    new_index[k] = static_cast<int>(preorder.size());
    preorder.push_back(k);
    if (!tree.nodes[k].is_leaf()) {
      stack.push_back(tree.nodes[k].right);
      stack.push_back(tree.nodes[k].left);
    }
  }
  Tree out;
  out.nodes.reserve(preorder.size());
  for (const int k : preorder) {
    TreeNode node = tree.nodes[k];
    if (!node.is_leaf()) {
      node.left = new_index[node.left];
      node.right = new_index[node.right];
    }
    out.nodes.push_back(node);
  }
  for (int& k : node_of) k = new_index[k];
  return out;
}

// Grows one tree on gradients/hessians and leaves `node_of` holding each
// row's leaf.
Tree GrowTree(const PresortedData& data, std::span<const double> grad,
              std::span<const double> hess, const Hyperparams& hp,
              std::vector<int>& node_of) {
  const size_t n = grad.size();
  const size_t d = data.columns.size();
  Tree tree;
  tree.nodes.emplace_back();
  std::fill(node_of.begin(), node_of.end(), 0);

  std::vector<double> node_grad = {0.0};
  std::vector<double> node_hess = {0.0};
  for (size_t i = 0; i < n; ++i) {
    node_grad[0] += grad[i];
    node_hess[0] += hess[i];
  }

  std::vector<int> frontier = {0};
  for (int depth = 0; depth < hp.max_depth && !frontier.empty(); ++depth) {
    const size_t slots = frontier.size();
    std::vector<int> slot_of(tree.nodes.size(), -1);
    for (size_t s = 0; s < slots; ++s) slot_of[frontier[s]] = static_cast<int>(s);

    std::vector<Candidate> best(slots);
    std::vector<double> left_grad(slots);
    std::vector<double> left_hess(slots);
    std::vector<double> last_value(slots);
    std::vector<char> seen(slots);
    for (size_t j = 0; j < d; ++j) {
      std::fill(left_grad.begin(), left_grad.end(), 0.0);
      std::fill(left_hess.begin(), left_hess.end(), 0.0);
      std::fill(seen.begin(), seen.end(), 0);
      const auto& column = data.columns[j];
      for (const uint32_t row : data.order[j]) {
        const int s = slot_of[node_of[row]];
        if (s < 0) continue;
        const double value = column[row];
        if (seen[s] && value != last_value[s]) {
          const int node = frontier[s];
          const double right_grad = node_grad[node] - left_grad[s];
          const double right_hess = node_hess[node] - left_hess[s];
          if (left_hess[s] >= hp.min_child_weight &&
              right_hess >= hp.min_child_weight) {
            const double gain = SplitGain(left_grad[s], left_hess[s],
                                          right_grad, right_hess, hp.l2_lambda);
            if (gain > best[s].gain) {
              best[s] = {gain, static_cast<int>(j),
                         Midpoint(last_value[s], value)};
            }
          }
        }
        left_grad[s] += grad[row];
        left_hess[s] += hess[row];
        last_value[s] = value;
        seen[s] = 1;
      }
    }

    std::vector<int> next_frontier;
    for (size_t s = 0; s < slots; ++s) {
      if (best[s].feature < 0 || !(best[s].gain > hp.min_split_gain)) continue;
      const int node = frontier[s];
      const int left = static_cast<int>(tree.nodes.size());
      tree.nodes.emplace_back();
      tree.nodes.emplace_back();
      tree.nodes[node].feature = best[s].feature;
      tree.nodes[node].threshold = best[s].threshold;
      tree.nodes[node].left = left;
      tree.nodes[node].right = left + 1;
      node_grad.resize(tree.nodes.size(), 0.0);
      node_hess.resize(tree.nodes.size(), 0.0);
      next_frontier.push_back(left);
      next_frontier.push_back(left + 1);
    }
    if (next_frontier.empty()) break;
    for (size_t i = 0; i < n; ++i) {
      const TreeNode& node = tree.nodes[node_of[i]];
      if (node.is_leaf()) continue;
      const int child = data.columns[node.feature][i] < node.threshold
                            ? node.left
                            : node.right;
      node_of[i] = child;
      node_grad[child] += grad[i];
      node_hess[child] += hess[i];
    }
    frontier = std::move(next_frontier);
  }

  // Leaf statistics straight from the rows routed there, then covers summed
  // bottom-up so every internal cover is exactly the sum of its children.
  std::vector<double> leaf_grad(tree.nodes.size(), 0.0);
  std::vector<double> leaf_hess(tree.nodes.size(), 0.0);
  for (size_t i = 0; i < n; ++i) {
    leaf_grad[node_of[i]] += grad[i];
    leaf_hess[node_of[i]] += hess[i];
  }
  for (size_t k = tree.nodes.size(); k-- > 0;) {
    TreeNode& node = tree.nodes[k];
    if (node.is_leaf()) {
      node.value = LeafValue(leaf_grad[k], leaf_hess[k], hp.l2_lambda);
      node.cover = leaf_hess[k];
    } else {
      // Children are always appended after their parent.
      node.cover = tree.nodes[node.left].cover + tree.nodes[node.right].cover;
    }
  }
  return Renumber(tree, node_of);
}

json NodeToJson(const Tree& tree, int index) {
  const TreeNode& node = tree.nodes[index];
  if (node.is_leaf()) return {{"leaf", node.value}, {"cover", node.cover}};
  return {{"feature", node.feature},
          {"threshold", node.threshold},
          {"cover", node.cover},
          {"left", NodeToJson(tree, node.left)},
          {"right", NodeToJson(tree, node.right)}};
}

int NodeFromJson(const json& j, Tree& tree) {
  const int index = static_cast<int>(tree.nodes.size());
  tree.nodes.emplace_back();
  if (j.contains("leaf")) {
    tree.nodes[index].value = j.at("leaf").get<double>();
    tree.nodes[index].cover = j.at("cover").get<double>();
    return index;
  }
  const int left = NodeFromJson(j.at("left"), tree);
  const int right = NodeFromJson(j.at("right"), tree);
  TreeNode& node = tree.nodes[index];
  node.feature = j.at("feature").get<int>();
  node.threshold = j.at("threshold").get<double>();
  node.cover = j.at("cover").get<double>();
  node.left = left;
  node.right = right;
  return index;
}

int DepthBelow(const Tree& tree, int index) {
  const TreeNode& node = tree.nodes[index];
  if (node.is_leaf()) return 0;
  return 1 + std::max(DepthBelow(tree, node.left), DepthBelow(tree, node.right));
}

}  // namespace

double Tree::Predict(std::span<const double> x) const {
  int index = 0;
  while (!nodes[index].is_leaf()) {
    const TreeNode& node = nodes[index];
    index = x[node.feature] < node.threshold ? node.left : node.right;
  }
  return nodes[index].value;
}

int Tree::MaxDepth() const { return nodes.empty() ? 0 : DepthBelow(*this, 0); }

void Hyperparams::Validate() const {
  if (n_trees < 1) throw Error(ErrorCode::kConfig, "n_trees must be >= 1");
  if (max_depth < 1) throw Error(ErrorCode::kConfig, "max_depth must be >= 1");
  if (!(learning_rate > 0.0 && learning_rate <= 1.0)) {
    throw Error(ErrorCode::kConfig, "learning_rate must be in (0, 1]");
  }
  if (!(l2_lambda >= 0.0)) throw Error(ErrorCode::kConfig, "l2_lambda must be >= 0");
  if (!(min_child_weight >= 0.0)) {
    throw Error(ErrorCode::kConfig, "min_child_weight must be >= 0");
  }
}

json HyperparamsToJson(const Hyperparams& hp) {
  return {{"n_trees", hp.n_trees},
          {"max_depth", hp.max_depth},
          {"learning_rate", hp.learning_rate},
          {"min_child_weight", hp.min_child_weight},
          {"l2_lambda", hp.l2_lambda},
          {"min_split_gain", hp.min_split_gain}};
}

Hyperparams HyperparamsFromJson(const json& j) {
  Hyperparams hp;
  hp.n_trees = j.value("n_trees", hp.n_trees);
  hp.max_depth = j.value("max_depth", hp.max_depth);
  hp.learning_rate = j.value("learning_rate", hp.learning_rate);
  hp.min_child_weight = j.value("min_child_weight", hp.min_child_weight);
  hp.l2_lambda = j.value("l2_lambda", hp.l2_lambda);
  hp.min_split_gain = j.value("min_split_gain", hp.min_split_gain);
  hp.Validate();
  return hp;
}

std::vector<Hyperparams> DefaultGrid() {
  std::vector<Hyperparams> grid;
  for (const int depth : {3, 4, 6}) {
    for (const double rate : {0.05, 0.1, 0.3}) {
      for (const int trees : {100, 300}) {
        Hyperparams hp;
        hp.max_depth = depth;
        hp.learning_rate = rate;
        hp.n_trees = trees;
        hp.l2_lambda = 1.0;
        hp.min_child_weight = 1.0;
        grid.push_back(hp);
      }
    }
  }
  return grid;
}

double SplitGain(double grad_left, double hess_left, double grad_right,
                 double hess_right, double l2_lambda) {
  const double grad = grad_left + grad_right;
  const double hess = hess_left + hess_right;
  return 0.5 * (grad_left * grad_left / (hess_left + l2_lambda) +
                grad_right * grad_right / (hess_right + l2_lambda) -
                grad * grad / (hess + l2_lambda));
}

double LeafValue(double grad, double hess, double l2_lambda) {
  const double denominator = hess + l2_lambda;
  return denominator > 0.0 ? -grad / denominator : 0.0;
}

TreeEnsemble Fit(const Matrix& x, std::span<const int> labels,
                 const Hyperparams& hp, uint64_t /*seed*/) {
  hp.Validate();
  CheckInputs(x, labels);
  const size_t n = x.rows();

  TreeEnsemble model;
  model.learning_rate = hp.learning_rate;
  model.n_features = x.cols();
  double positives = 0.0;
  for (const int y : labels) positives += y != 0;
  const double prevalence =
      std::clamp(positives / static_cast<double>(n), kPrevalenceClamp,
                 1.0 - kPrevalenceClamp);
  model.base_score = Logit(prevalence);

  const PresortedData data = Presort(x);
  std::vector<double> margin(n, model.base_score);
  std::vector<double> grad(n);
  std::vector<double> hess(n);
  std::vector<int> node_of(n, 0);
  for (int round = 0; round < hp.n_trees; ++round) {
    for (size_t i = 0; i < n; ++i) {
      const double p = Sigmoid(margin[i]);
      grad[i] = p - (labels[i] != 0 ? 1.0 : 0.0);
      hess[i] = p * (1.0 - p);
    }
    Tree tree = GrowTree(data, grad, hess, hp, node_of);
    for (size_t i = 0; i < n; ++i) {
      margin[i] += hp.learning_rate * tree.nodes[node_of[i]].value;
    }
    model.trees.push_back(std::move(tree));
  }
  return model;
}

std::vector<double> PredictMargin(const TreeEnsemble& model, const Matrix& x) {
  if (x.cols() != model.n_features) {
    throw Error(ErrorCode::kShape,
                "model expects " + std::to_string(model.n_features) +
                    " features, got " + std::to_string(x.cols()));
  }
  std::vector<double> out(x.rows());
  for (size_t i = 0; i < x.rows(); ++i) {
    const auto row = x.row(i);
    double sum = 0.0;
    for (const Tree& tree : model.trees) sum += tree.Predict(row);
    out[i] = model.base_score + model.learning_rate * sum;
  }
  return out;
}

std::vector<double> PredictProba(const TreeEnsemble& model, const Matrix& x) {
  std::vector<double> out = PredictMargin(model, x);
  for (double& v : out) v = Sigmoid(v);
  return out;
}

json TuningRecordToJson(const TuningRecord& record) {
  json entries = json::array();
  for (const auto& e : record.entries) {
    entries.push_back({{"hyperparams", HyperparamsToJson(e.hp)},
                       {"validation_auprc", e.validation_auprc},
                       {"validation_log_loss", e.validation_log_loss}});
  }
  return {{"entries", entries},
          {"chosen_index", record.chosen_index},
          {"train_rows", record.train_rows},
          {"validation_rows", record.validation_rows},
          {"refit_rows", record.refit_rows},
          {"partition_attempts", record.partition_attempts}};
}

TunedModel TuneAndFit(const Matrix& x, std::span<const int> labels,
                      std::span<const Hyperparams> grid, uint64_t seed) {
  if (grid.empty()) throw Error(ErrorCode::kConfig, "hyperparameter grid is empty");
  for (const auto& hp : grid) hp.Validate();
  if (x.rows() != labels.size()) {
    throw Error(ErrorCode::kShape, "feature rows and labels differ in length");
  }

  auto both_classes = [&](const std::vector<size_t>& rows) {
    bool pos = false;
    bool neg = false;
    for (const size_t r : rows) (labels[r] ? pos : neg) = true;
    return pos && neg;
  };
  IndexSplit split;
  int attempts = 0;
  bool usable = false;
  while (!usable && attempts < kMaxPartitionAttempts) {
    split = StratifiedIndexSplit(labels, kTuneTrainFraction,
                                 DeriveSeed(seed, static_cast<uint64_t>(attempts)));
    ++attempts;
    usable = both_classes(split.first) && both_classes(split.second);
  }
  if (!usable) {
    throw Error(ErrorCode::kTuning,
                "cannot form two-class tuning partitions from " +
                    std::to_string(labels.size()) + " rows");
  }
  const Matrix fit_x = x.SelectRows(split.first);
  const Matrix val_x = x.SelectRows(split.second);
  std::vector<int> fit_y;
  std::vector<int> val_y;
  for (const size_t r : split.first) fit_y.push_back(labels[r]);
  for (const size_t r : split.second) val_y.push_back(labels[r]);

  TunedModel out;
  out.record.entries.resize(grid.size());
  out.record.train_rows = split.first.size();
  out.record.validation_rows = split.second.size();
  out.record.partition_attempts = attempts;

  // Training is deterministic and a model with fewer trees is a prefix of one
  // with more, so grid points differing only in n_trees share one fit.
  std::map<std::tuple<int, double, double, double, double>, std::vector<size_t>>
      groups;
  for (size_t k = 0; k < grid.size(); ++k) {
    const auto& hp = grid[k];
    groups[{hp.max_depth, hp.learning_rate, hp.min_child_weight, hp.l2_lambda,
            hp.min_split_gain}]
        .push_back(k);
  }
  for (const auto& [key, members] : groups) {
    Hyperparams largest = grid[members.front()];
    for (const size_t k : members) {
      largest.n_trees = std::max(largest.n_trees, grid[k].n_trees);
    }
    const TreeEnsemble full = Fit(fit_x, fit_y, largest, seed);
    for (const size_t k : members) {
      TreeEnsemble prefix = full;
      prefix.trees.resize(static_cast<size_t>(grid[k].n_trees));
      const std::vector<double> p = PredictProba(prefix, val_x);
      out.record.entries[k] = {grid[k], stats::Auprc(val_y, p),
                               stats::LogLoss(val_y, p)};
    }
  }

  size_t chosen = 0;
  for (size_t k = 1; k < grid.size(); ++k) {
    const auto& e = out.record.entries[k];
    const auto& b = out.record.entries[chosen];
    if (e.validation_auprc > b.validation_auprc ||
        (e.validation_auprc == b.validation_auprc &&
         e.validation_log_loss < b.validation_log_loss)) {
      chosen = k;
    }
  }
  out.record.chosen_index = chosen;
  out.chosen = grid[chosen];
  out.model = Fit(x, labels, out.chosen, seed);
  out.record.refit_rows = x.rows();
  return out;
}

json EnsembleToJson(const TreeEnsemble& model) {
  json trees = json::array();
  for (const Tree& tree : model.trees) trees.push_back(NodeToJson(tree, 0));
  return {{"base_score", model.base_score},
          {"learning_rate", model.learning_rate},
          {"n_features", model.n_features},
          {"trees", trees}};
}

TreeEnsemble EnsembleFromJson(const json& j) {
  TreeEnsemble model;
  model.base_score = j.at("base_score").get<double>();
  model.learning_rate = j.at("learning_rate").get<double>();
  model.n_features = j.at("n_features").get<size_t>();
  for (const auto& root : j.at("trees")) {
    Tree tree;
    NodeFromJson(root, tree);
    model.trees.push_back(std::move(tree));
  }
  return model;
}

}  // namespace adapthetero::gbdt
