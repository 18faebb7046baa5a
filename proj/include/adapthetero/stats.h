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

// Evaluation metrics, bootstrap summaries, rank and contingency tests, and
// feature-importance rankings.

#ifndef ADAPTHETERO_STATS_H_
#define ADAPTHETERO_STATS_H_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "adapthetero/common.h"

namespace adapthetero::stats {

// Average precision: sum over descending score thresholds of
// (recall_k - recall_{k-1}) * precision_k. Rows with tied scores form a single
// threshold. Throws kUndefinedMetric unless both classes are present.
double Auprc(std::span<const int> labels, std::span<const double> scores);

// Binary cross-entropy with probabilities clamped to [1e-15, 1 - 1e-15].
double LogLoss(std::span<const int> labels,
               std::span<const double> probabilities);

enum class Metric { kAuprc, kLogLoss };

std::string MetricName(Metric metric);
Metric MetricFromName(const std::string& name);

struct MetricSamples {
  Metric metric = Metric::kAuprc;
  std::vector<double> replicates;
  // Lower median: the order statistic at index (B - 1) / 2.
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  double iqr = 0.0;
  uint64_t seed = 0;
  // Replicates dropped after exhausting redraws of single-class resamples.
  int skipped = 0;
};

// Fills median and quartiles of `samples` from its replicates.
void Summarize(MetricSamples& samples);

// Quantile with linear interpolation between order statistics.
double Quantile(std::vector<double> values, double q);

// B with-replacement resamples of the (labels, scores) pairs. Replicate r
// draws its indices from DeriveSeed(seed, r), so the replicate vector does not
// depend on evaluation order. Resamples holding one class only are redrawn up
// to 100 times, then skipped. Scores are probabilities (log loss uses them
// directly).
std::vector<MetricSamples> BootstrapMetrics(std::span<const int> labels,
                                            std::span<const double> scores,
                                            int replicates, uint64_t seed,
                                            std::span<const Metric> metrics);

struct ComparisonResult {
  double u = 0.0;
  double p_value = 1.0;
  std::string stars = "ns";
  size_t n_a = 0;
  size_t n_b = 0;
  bool exact = false;
};

// Two-sided Mann-Whitney U test. U is the statistic of sample `a`. The exact
// null distribution is used when min(n_a, n_b) <= 8 and there are no ties;
// otherwise the normal approximation with tie-corrected variance and a 0.5
// continuity correction.
ComparisonResult MannWhitneyU(std::span<const double> a,
                              std::span<const double> b);

std::string SignificanceStars(double p_value);

struct ChiSquaredResult {
  double statistic = 0.0;
  int dof = 0;
  double p_value = 1.0;
  // Some expected cell count fell below 5. No correction is applied.
  bool low_expected_count = false;
};

// Pearson chi-squared test of independence between a categorical feature and
// a binary label. Returns nullopt when the contingency table is degenerate
// (fewer than two feature levels or label classes), which callers treat as a
// constant feature.
std::optional<ChiSquaredResult> ChiSquaredTest(
    std::span<const std::string> feature, std::span<const int> labels);

// Upper tail of the chi-squared distribution.
double ChiSquaredSurvival(double statistic, int dof);

struct RankedFeature {
  std::string name;
  size_t index = 0;
  double score = 0.0;
};

struct FeatureRanking {
  std::vector<RankedFeature> features;
};

// Ranks columns of `attributions` by mean absolute value, descending; ties go
// to the lower column index. Returns the first k entries.
FeatureRanking TopFeatures(const Matrix& attributions,
                           std::span<const std::string> feature_names,
                           size_t k = 5);

struct RankDelta {
  std::string name;
  int rank_first = 0;
  int rank_second = 0;
  // rank_second - rank_first.
  int delta = 0;
};

struct RankComparison {
  double jaccard = 0.0;
  std::vector<RankDelta> shared;
};

RankComparison RankCompare(const FeatureRanking& first,
                           const FeatureRanking& second);

// Adjusted Rand index between two labelings of the same items.
double AdjustedRandIndex(std::span<const int> first,
                         std::span<const int> second);

}  // namespace adapthetero::stats

#endif  // ADAPTHETERO_STATS_H_
