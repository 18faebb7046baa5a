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

#include "adapthetero/subgroups.h"

#include <algorithm>
#include <cmath>
#include <iterator>
#include <limits>
#include <map>
#include <set>

#include "adapthetero/clustering.h"
#include "adapthetero/embedding.h"

namespace adapthetero::subgroups {
namespace {

using json = nlohmann::json;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

json Number(double value) { return std::isfinite(value) ? json(value) : json(nullptr); }

json SamplesToJson(const stats::MetricSamples& samples, bool with_replicates) {
  json out = {{"metric", stats::MetricName(samples.metric)},
              {"replicates", samples.replicates.size()},
              {"median", Number(samples.median)},
              {"q1", Number(samples.q1)},
              {"q3", Number(samples.q3)},
              {"iqr", Number(samples.iqr)},
              {"seed", samples.seed},
              {"skipped", samples.skipped}};
  if (with_replicates) out["values"] = samples.replicates;
  return out;
}

bool Disjoint(const SubgroupSpec& x, const SubgroupSpec& y) {
  for (int c : x.clusters) {
    if (y.Contains(c)) return false;
  }
  return true;
}

}  // namespace

bool SubgroupSpec::Contains(int label) const {
  return std::binary_search(clusters.begin(), clusters.end(), label);
}

std::string SubgroupSpec::Key() const {
  std::string out;
  for (size_t i = 0; i < clusters.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(clusters[i]);
  }
  return out;
}

json SpecToJson(const SubgroupSpec& spec) {
  return {{"name", spec.name}, {"clusters", spec.clusters}};
}

SubgroupSpec SpecFromJson(const json& j) {
  SubgroupSpec spec;
  spec.name = j.at("name").get<std::string>();
  spec.clusters = j.at("clusters").get<std::vector<int>>();
  std::sort(spec.clusters.begin(), spec.clusters.end());
  return spec;
}

std::vector<SubgroupSpec> EnumerateSubgroups(int num_clusters, bool include_noise) {
  std::vector<int> labels;
  if (include_noise) labels.push_back(clustering::kNoise);
  for (int c = 0; c < num_clusters; ++c) labels.push_back(c);
  if (labels.empty()) {
    throw Error(ErrorCode::kEmptyEnumeration, "no clusters to combine");
  }
  if (labels.size() > 20) {
    throw Error(ErrorCode::kConfig, "too many clusters to enumerate combinations");
  }
  const size_t m = labels.size();
  std::vector<SubgroupSpec> out;
  for (size_t size = 1; size <= m; ++size) {
    // Positions of the current combination, advanced in lexicographic order.
    std::vector<size_t> pick(size);
    for (size_t i = 0; i < size; ++i) pick[i] = i;
    while (true) {
      SubgroupSpec spec;
      for (size_t p : pick) spec.clusters.push_back(labels[p]);
      spec.name = "combo-" + std::to_string(out.size());
      out.push_back(std::move(spec));
      size_t i = size;
      while (i > 0 && pick[i - 1] == m - size + i - 1) --i;
      if (i == 0) break;
      ++pick[i - 1];
      for (size_t j = i; j < size; ++j) pick[j] = pick[j - 1] + 1;
    }
  }
  return out;
}

std::vector<size_t> SliceRows(std::span<const int> labels, const SubgroupSpec& spec) {
  std::vector<size_t> rows;
  for (size_t i = 0; i < labels.size(); ++i) {
    if (spec.Contains(labels[i])) rows.push_back(i);
  }
  return rows;
}

uint64_t SliceSeed(uint64_t root, const SubgroupSpec& spec) {
  return DeriveSeed(root, "slice:" + spec.Key());
}

json EvaluationToJson(const SliceEvaluation& e, bool with_replicates) {
  json out = {{"rows", e.rows},
              {"positives", e.positives},
              {"evaluable", e.evaluable},
              {"auprc", Number(e.auprc)},
              {"log_loss", Number(e.log_loss)}};
  if (e.evaluable) {
    out["bootstrap"] = {{"auprc", SamplesToJson(e.auprc_samples, with_replicates)},
                        {"log_loss", SamplesToJson(e.log_loss_samples, with_replicates)}};
  }
  return out;
}

namespace {

SliceEvaluation EvaluateSliceImpl(std::span<const int> labels,
                                  std::span<const double> scores,
                                  std::span<const size_t> rows, int replicates,
                                  uint64_t seed, bool resample) {
  SliceEvaluation out;
  out.rows = rows.size();
  std::vector<int> y;
  std::vector<double> p;
  y.reserve(rows.size());
  p.reserve(rows.size());
  for (size_t r : rows) {
    y.push_back(labels[r]);
    p.push_back(scores[r]);
    out.positives += labels[r] ? 1 : 0;
  }
  out.evaluable = out.positives > 0 && out.positives < out.rows;
  if (!out.evaluable) {
    out.auprc = kNaN;
    out.log_loss = kNaN;
    return out;
  }
  out.auprc = stats::Auprc(y, p);
  out.log_loss = stats::LogLoss(y, p);
  if (!resample) return out;
  out.resampled = true;
  const stats::Metric metrics[] = {stats::Metric::kAuprc, stats::Metric::kLogLoss};
  auto samples = stats::BootstrapMetrics(y, p, replicates, seed, metrics);
  out.auprc_samples = std::move(samples[0]);
  out.log_loss_samples = std::move(samples[1]);
  return out;
}

}  // namespace

SliceEvaluation EvaluateSlice(std::span<const int> labels,
                              std::span<const double> scores,
                              std::span<const size_t> rows, int replicates,
                              uint64_t seed) {
  return EvaluateSliceImpl(labels, scores, rows, replicates, seed, true);
}

std::vector<SliceEvaluation> EvaluateCombinations(
    std::span<const int> labels, std::span<const double> scores,
    std::span<const int> cluster_labels, std::span<const SubgroupSpec> specs,
    int replicates, uint64_t seed, const std::vector<bool>& resample) {
  if (!resample.empty() && resample.size() != specs.size()) {
    throw Error(ErrorCode::kShape, "one resample flag per spec required");
  }
  if (labels.size() != scores.size() || labels.size() != cluster_labels.size()) {
    throw Error(ErrorCode::kShape, "labels, scores and clusters differ in length");
  }
  std::vector<SliceEvaluation> out;
  out.reserve(specs.size());
  for (size_t i = 0; i < specs.size(); ++i) {
    const std::vector<size_t> rows = SliceRows(cluster_labels, specs[i]);
    out.push_back(EvaluateSliceImpl(labels, scores, rows, replicates,
                                    SliceSeed(seed, specs[i]),
                                    resample.empty() || resample[i]));
  }
  return out;
}

void SelectionCriteria::Validate() const {
  if (min_train_rows < 1 || min_test_rows < 1 || min_train_positives < 1) {
    throw Error(ErrorCode::kConfig, "selection thresholds must be at least 1");
  }
}

json CriteriaToJson(const SelectionCriteria& c) {
  return {{"min_train_rows", c.min_train_rows},
          {"min_test_rows", c.min_test_rows},
          {"min_train_positives", c.min_train_positives},
          {"require_partition", c.require_partition}};
}

SelectionCriteria CriteriaFromJson(const json& j) {
  SelectionCriteria c;
  c.min_train_rows = j.value("min_train_rows", c.min_train_rows);
  c.min_test_rows = j.value("min_test_rows", c.min_test_rows);
  c.min_train_positives = j.value("min_train_positives", c.min_train_positives);
  c.require_partition = j.value("require_partition", c.require_partition);
  return c;
}

std::vector<ClusterCounts> CountClusters(std::span<const int> train_labels,
                                         std::span<const int> train_y,
                                         std::span<const int> test_labels) {
  std::map<int, ClusterCounts> counts;
  for (size_t i = 0; i < train_labels.size(); ++i) {
    auto& c = counts[train_labels[i]];
    c.label = train_labels[i];
    ++c.train_rows;
    c.train_positives += train_y[i] ? 1 : 0;
  }
  for (int label : test_labels) {
    auto& c = counts[label];
    c.label = label;
    ++c.test_rows;
  }
  std::vector<ClusterCounts> out;
  for (const auto& [label, c] : counts) out.push_back(c);
  return out;
}

json SelectionToJson(const Selection& s) {
  json out = {{"selected", s.selected}, {"candidates", s.candidates}};
  if (s.selected) {
    out["a"] = SpecToJson(s.a);
    out["b"] = SpecToJson(s.b);
    out["a_index"] = s.a_index;
    out["b_index"] = s.b_index;
    out["divergence"] = s.divergence;
  }
  return out;
}

std::vector<bool> MeetsSizeCriteria(std::span<const ClusterCounts> counts,
                                    std::span<const SubgroupSpec> specs,
                                    const SelectionCriteria& criteria) {
  std::map<int, ClusterCounts> by_label;
  for (const auto& c : counts) by_label[c.label] = c;
  std::vector<bool> out(specs.size(), false);
  for (size_t i = 0; i < specs.size(); ++i) {
    size_t train_rows = 0;
    size_t positives = 0;
    size_t test_rows = 0;
    bool clusters_ok = true;
    for (int label : specs[i].clusters) {
      const auto it = by_label.find(label);
      const ClusterCounts c = it == by_label.end() ? ClusterCounts{label} : it->second;
      if (label != clustering::kNoise && c.train_rows < criteria.min_train_rows) {
        clusters_ok = false;
      }
      train_rows += c.train_rows;
      positives += c.train_positives;
      test_rows += c.test_rows;
    }
    out[i] = clusters_ok && test_rows >= criteria.min_test_rows &&
             positives >= criteria.min_train_positives && positives < train_rows;
  }
  return out;
}

Selection SelectSubgroups(std::span<const ClusterCounts> counts,
                          std::span<const SubgroupSpec> specs,
                          std::span<const SliceEvaluation> evaluations,
                          const SelectionCriteria& criteria) {
  criteria.Validate();
  if (specs.size() != evaluations.size()) {
    throw Error(ErrorCode::kShape, "one evaluation per spec required");
  }
  std::set<int> universe;
  for (const auto& spec : specs) universe.insert(spec.clusters.begin(), spec.clusters.end());

  std::vector<bool> eligible = MeetsSizeCriteria(counts, specs, criteria);
  for (size_t i = 0; i < specs.size(); ++i) {
    eligible[i] = eligible[i] && evaluations[i].evaluable && evaluations[i].resampled;
  }

  std::map<std::vector<int>, size_t> index_of;
  for (size_t i = 0; i < specs.size(); ++i) index_of.emplace(specs[i].clusters, i);

  Selection out;
  double best = -1.0;
  auto consider = [&](size_t i, size_t j) {
    ++out.candidates;
    const double mi = evaluations[i].auprc_samples.median;
    const double mj = evaluations[j].auprc_samples.median;
    const double gap = std::abs(mi - mj);
    if (gap > best) {
      best = gap;
      out.selected = true;
      out.divergence = gap;
      const bool i_high = mi >= mj;
      out.a_index = i_high ? i : j;
      out.b_index = i_high ? j : i;
    }
  };
  for (size_t i = 0; i < specs.size(); ++i) {
    if (!eligible[i]) continue;
    if (criteria.require_partition) {
      std::vector<int> rest;
      std::set_difference(universe.begin(), universe.end(), specs[i].clusters.begin(),
                          specs[i].clusters.end(), std::back_inserter(rest));
      const auto it = index_of.find(rest);
      if (it != index_of.end() && it->second > i && eligible[it->second]) {
        consider(i, it->second);
      }
      continue;
    }
    for (size_t j = i + 1; j < specs.size(); ++j) {
      if (eligible[j] && Disjoint(specs[i], specs[j])) consider(i, j);
    }
  }
  if (out.selected) {
    out.a = specs[out.a_index];
    out.a.name = "A";
    out.b = specs[out.b_index];
    out.b.name = "B";
  }
  return out;
}

SubgroupRun RetrainSubgroup(const Matrix& train_x, std::span<const int> train_y,
                            std::span<const int> train_labels,
                            const Matrix& test_x, std::span<const int> test_y,
                            std::span<const int> test_labels,
                            const SubgroupSpec& spec,
                            std::span<const gbdt::Hyperparams> grid,
                            const std::vector<std::string>& feature_names,
                            uint64_t seed, int replicates,
                            uint64_t bootstrap_seed) {
  SubgroupRun run;
  run.spec = spec;
  run.train_rows = SliceRows(train_labels, spec);
  run.test_rows = SliceRows(test_labels, spec);
  const Matrix slice_x = train_x.SelectRows(run.train_rows);
  std::vector<int> slice_y;
  for (size_t r : run.train_rows) slice_y.push_back(train_y[r]);
  try {
    run.tuned = gbdt::TuneAndFit(slice_x, slice_y, grid, seed);
    run.retrained = true;
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kConfig) throw;
    run.failure = std::string(ErrorCodeName(e.code())) + ": " + e.what();
    return run;
  }
  const Matrix slice_test = test_x.SelectRows(run.test_rows);
  run.test_scores = gbdt::PredictProba(run.tuned.model, slice_test);
  run.test_shap = attribution::ComputeShap(run.tuned.model, slice_test, feature_names);

  std::vector<int> y;
  for (size_t r : run.test_rows) y.push_back(test_y[r]);
  std::vector<size_t> all(run.test_rows.size());
  for (size_t i = 0; i < all.size(); ++i) all[i] = i;
  run.evaluation = EvaluateSlice(y, run.test_scores, all, replicates, bootstrap_seed);
  return run;
}

json ScoreRecordToJson(const ScoreRecord& r) {
  return {{"embedding", {r.x, r.y}},
          {"cluster", r.cluster},
          {"subgroup", r.subgroup},
          {"model", r.model},
          {"probability", r.probability},
          {"uncertainty",
           {{"auprc_median", Number(r.uncertainty.auprc_median)},
            {"auprc_iqr", Number(r.uncertainty.auprc_iqr)},
            {"log_loss", Number(r.uncertainty.log_loss)}}}};
}

ScoreRecord ScoreNewPatient(const ScoringArtifacts& artifacts,
                            std::span<const double> features) {
  if (features.size() != artifacts.global_model.n_features) {
    throw Error(ErrorCode::kSchema, "feature row does not match the fitted model");
  }
  Matrix row(1, features.size());
  std::copy(features.begin(), features.end(), row.row(0).begin());

  const auto shap = attribution::ComputeShap(artifacts.global_model, row);
  const Matrix standardized =
      attribution::StandardizeApply(shap.values, artifacts.shap_stats);
  const Matrix coords = embedding::TransformEmbedding(
      artifacts.train_standardized, artifacts.train_coords, standardized,
      artifacts.transform_k);
  const auto assignment = clustering::KnnPropagate(
      artifacts.train_coords, artifacts.train_labels, coords,
      artifacts.propagate_k, artifacts.noise_votes);

  ScoreRecord record;
  record.x = coords(0, 0);
  record.y = coords(0, 1);
  record.cluster = assignment.labels[0];
  record.uncertainty = artifacts.global_uncertainty;
  const gbdt::TreeEnsemble* serving = &artifacts.global_model;
  for (const auto& subgroup : artifacts.subgroups) {
    if (!subgroup.spec.Contains(record.cluster)) continue;
    record.subgroup = subgroup.spec.name;
    record.uncertainty = subgroup.uncertainty;
    if (subgroup.has_model) {
      record.model = subgroup.spec.name;
      serving = &subgroup.model;
    }
    break;
  }
  record.probability = gbdt::PredictProba(*serving, row)[0];
  return record;
}

}  // namespace adapthetero::subgroups
