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

// Gradient-boosted regression trees for binary classification with the
// logistic loss and second-order (Newton) leaf values. Splits are found by
// exact greedy search over midpoints between consecutive distinct values.

#ifndef ADAPTHETERO_GBDT_H_
#define ADAPTHETERO_GBDT_H_

#include <cstdint>
#include <span>
#include <vector>

#include "adapthetero/common.h"
#include "json.hpp"

namespace adapthetero::gbdt {

// A node of a regression tree. Rows with x[feature] < threshold go left.
struct TreeNode {
  // -1 for leaves.
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  // Margin contribution (before the learning rate); leaves only.
  double value = 0.0;
  // Sum of hessians of the training rows reaching this node.
  double cover = 0.0;

  bool is_leaf() const { return feature < 0; }
  bool operator==(const TreeNode&) const = default;
};

// Nodes of one tree; index 0 is the root.
struct Tree {
  std::vector<TreeNode> nodes;

  double Predict(std::span<const double> x) const;
  int MaxDepth() const;
  bool operator==(const Tree&) const = default;
};

struct TreeEnsemble {
  std::vector<Tree> trees;
  double learning_rate = 0.1;
  // Log-odds offset.
  double base_score = 0.0;
  size_t n_features = 0;

  bool operator==(const TreeEnsemble&) const = default;
};

struct Hyperparams {
  int n_trees = 100;
  int max_depth = 3;
  double learning_rate = 0.1;
  double min_child_weight = 1.0;
  double l2_lambda = 1.0;
  double min_split_gain = 0.0;

  void Validate() const;
  bool operator==(const Hyperparams&) const = default;
};

nlohmann::json HyperparamsToJson(const Hyperparams& hp);
Hyperparams HyperparamsFromJson(const nlohmann::json& json);

// max_depth {3,4,6} x learning_rate {0.05,0.1,0.3} x n_trees {100,300},
// l2_lambda 1, min_child_weight 1.
std::vector<Hyperparams> DefaultGrid();

// Split gain for left/right gradient and hessian sums.
double SplitGain(double grad_left, double hess_left, double grad_right,
                 double hess_right, double l2_lambda);
double LeafValue(double grad, double hess, double l2_lambda);

// Trains an ensemble. `seed` is accepted for interface stability; training
// uses no sampling, so the result depends on (x, labels, hp) only.
TreeEnsemble Fit(const Matrix& x, std::span<const int> labels,
                 const Hyperparams& hp, uint64_t seed = 0);

std::vector<double> PredictMargin(const TreeEnsemble& model, const Matrix& x);
std::vector<double> PredictProba(const TreeEnsemble& model, const Matrix& x);

struct TuningEntry {
  Hyperparams hp;
  double validation_auprc = 0.0;
  double validation_log_loss = 0.0;
};

struct TuningRecord {
  std::vector<TuningEntry> entries;
  size_t chosen_index = 0;
  size_t train_rows = 0;
  size_t validation_rows = 0;
  // Rows used by the final refit.
  size_t refit_rows = 0;
  int partition_attempts = 0;
};

nlohmann::json TuningRecordToJson(const TuningRecord& record);

struct TunedModel {
  TreeEnsemble model;
  Hyperparams chosen;
  TuningRecord record;
};

// Holds out a stratified 20% of the rows, trains every grid point on the other
// 80% and scores it on the held-out rows by AUPRC (ties: lower log loss, then
// earlier grid position). The winner is refit on all rows.
TunedModel TuneAndFit(const Matrix& x, std::span<const int> labels,
                      std::span<const Hyperparams> grid, uint64_t seed);

nlohmann::json EnsembleToJson(const TreeEnsemble& model);
TreeEnsemble EnsembleFromJson(const nlohmann::json& json);

}  // namespace adapthetero::gbdt

#endif  // ADAPTHETERO_GBDT_H_
