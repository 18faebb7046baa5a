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

// Cluster combinations: enumeration, evaluation of a model on each
// combination, selection of a two-way split, retraining on a combination and
// per-row serving.

#ifndef ADAPTHETERO_SUBGROUPS_H_
#define ADAPTHETERO_SUBGROUPS_H_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "adapthetero/attribution.h"
#include "adapthetero/common.h"
#include "adapthetero/gbdt.h"
#include "adapthetero/stats.h"
#include "json.hpp"

namespace adapthetero::subgroups {

struct SubgroupSpec {
  // Ascending; may include the noise label -1.
  std::vector<int> clusters;
  std::string name;

  bool Contains(int label) const;
  // Cluster ids joined by commas, e.g. "-1,0,2".
  std::string Key() const;
  bool operator==(const SubgroupSpec&) const = default;
};

nlohmann::json SpecToJson(const SubgroupSpec& spec);
SubgroupSpec SpecFromJson(const nlohmann::json& json);

// Every non-empty subset of {0, ..., num_clusters - 1}, plus the noise label
// when `include_noise`, ordered by size and then lexicographically. Names are
// "combo-<i>". Throws kEmptyEnumeration when the label set is empty.
std::vector<SubgroupSpec> EnumerateSubgroups(int num_clusters, bool include_noise);

// Positions of the rows whose label belongs to `spec`, ascending.
std::vector<size_t> SliceRows(std::span<const int> labels, const SubgroupSpec& spec);

// Bootstrap seed of a slice. Depends on the cluster set only, so every model
// scored on the same slice sees the same resamples.
uint64_t SliceSeed(uint64_t root, const SubgroupSpec& spec);

struct SliceEvaluation {
  size_t rows = 0;
  size_t positives = 0;
  // Both classes present; metrics are NaN otherwise.
  bool evaluable = false;
  double auprc = 0.0;
  double log_loss = 0.0;
  // Bootstrap samples below were drawn.
  bool resampled = false;
  stats::MetricSamples auprc_samples;
  stats::MetricSamples log_loss_samples;
};

nlohmann::json EvaluationToJson(const SliceEvaluation& evaluation,
                                bool with_replicates);

// Metrics of `scores` on the rows `rows`, with B bootstrap replicates.
SliceEvaluation EvaluateSlice(std::span<const int> labels,
                              std::span<const double> scores,
                              std::span<const size_t> rows, int replicates,
                              uint64_t seed);

// EvaluateSlice for every spec on the test rows, seeded by SliceSeed. When
// `resample` is non-empty, specs it marks false get point metrics only.
std::vector<SliceEvaluation> EvaluateCombinations(
    std::span<const int> labels, std::span<const double> scores,
    std::span<const int> cluster_labels, std::span<const SubgroupSpec> specs,
    int replicates, uint64_t seed, const std::vector<bool>& resample = {});

struct SelectionCriteria {
  size_t min_train_rows = 100;
  size_t min_test_rows = 30;
  size_t min_train_positives = 5;
  bool require_partition = true;

  void Validate() const;
};

nlohmann::json CriteriaToJson(const SelectionCriteria& criteria);
SelectionCriteria CriteriaFromJson(const nlohmann::json& json);

struct ClusterCounts {
  int label = 0;
  size_t train_rows = 0;
  size_t train_positives = 0;
  size_t test_rows = 0;
};

std::vector<ClusterCounts> CountClusters(std::span<const int> train_labels,
                                         std::span<const int> train_y,
                                         std::span<const int> test_labels);

struct Selection {
  bool selected = false;
  SubgroupSpec a;
  SubgroupSpec b;
  // Index of a and b in the enumeration.
  size_t a_index = 0;
  size_t b_index = 0;
  double divergence = 0.0;
  size_t candidates = 0;
};

nlohmann::json SelectionToJson(const Selection& selection);

// Whether each spec meets the row and positive-count thresholds below.
std::vector<bool> MeetsSizeCriteria(std::span<const ClusterCounts> counts,
                                    std::span<const SubgroupSpec> specs,
                                    const SelectionCriteria& criteria);

// A side qualifies when each of its clusters, noise aside, has at least
// min_train_rows training rows, the side has at least min_test_rows test rows
// and min_train_positives training positives, its training rows hold both
// classes, and its test evaluation is defined. Candidate pairs are disjoint
// qualifying specs, covering every label when require_partition. The pair with
// the largest gap between median bootstrap AUPRCs wins (ties: earlier pair);
// A is its higher side.
Selection SelectSubgroups(std::span<const ClusterCounts> counts,
                          std::span<const SubgroupSpec> specs,
                          std::span<const SliceEvaluation> evaluations,
                          const SelectionCriteria& criteria);

struct SubgroupRun {
  SubgroupSpec spec;
  std::vector<size_t> train_rows;
  std::vector<size_t> test_rows;
  bool retrained = false;
  std::string failure;
  gbdt::TunedModel tuned;
  // Retrained model probabilities on the test slice, in test_rows order.
  std::vector<double> test_scores;
  attribution::ShapMatrix test_shap;
  SliceEvaluation evaluation;
};

// Tunes and refits on the spec's training rows, then scores and explains the
// spec's test rows. A training failure is recorded, not thrown.
SubgroupRun RetrainSubgroup(const Matrix& train_x, std::span<const int> train_y,
                            std::span<const int> train_labels,
                            const Matrix& test_x, std::span<const int> test_y,
                            std::span<const int> test_labels,
                            const SubgroupSpec& spec,
                            std::span<const gbdt::Hyperparams> grid,
                            const std::vector<std::string>& feature_names,
                            uint64_t seed, int replicates,
                            uint64_t bootstrap_seed);

// Uncertainty attached to a serving model.
struct Uncertainty {
  double auprc_median = 0.0;
  double auprc_iqr = 0.0;
  double log_loss = 0.0;
};

struct ServingSubgroup {
  SubgroupSpec spec;
  bool has_model = false;
  gbdt::TreeEnsemble model;
  Uncertainty uncertainty;
};

struct ScoringArtifacts {
  gbdt::TreeEnsemble global_model;
  attribution::StandardizationStats shap_stats;
  Matrix train_standardized;
  Matrix train_coords;
  std::vector<int> train_labels;
  size_t transform_k = 15;
  size_t propagate_k = 5;
  bool noise_votes = true;
  // Empty or the selected pair.
  std::vector<ServingSubgroup> subgroups;
  Uncertainty global_uncertainty;
};

struct ScoreRecord {
  double x = 0.0;
  double y = 0.0;
  int cluster = 0;
  // "A", "B" or "none".
  std::string subgroup = "none";
  // "global", "A" or "B".
  std::string model = "global";
  double probability = 0.0;
  Uncertainty uncertainty;
};

nlohmann::json ScoreRecordToJson(const ScoreRecord& record);

// SHAP under the global model, standardization, embedding placement and
// neighbor vote, then the serving model of the matching subgroup.
ScoreRecord ScoreNewPatient(const ScoringArtifacts& artifacts,
                            std::span<const double> features);

}  // namespace adapthetero::subgroups

#endif  // ADAPTHETERO_SUBGROUPS_H_
