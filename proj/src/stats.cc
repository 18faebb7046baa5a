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

#include "adapthetero/stats.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include <boost/math/special_functions/gamma.hpp>

namespace adapthetero::stats {
namespace {

constexpr double kLogLossEpsilon = 1e-15;
constexpr int kMaxRedraws = 100;

void CheckSameLength(size_t a, size_t b, const char* what) {
  if (a != b) {
    throw Error(ErrorCode::kShape, std::string(what) + ": length mismatch (" +
                                       std::to_string(a) + " vs " +
                                       std::to_string(b) + ")");
  }
}

bool HasBothClasses(std::span<const int> labels) {
  bool pos = false;
  bool neg = false;
  for (const int y : labels) {
    (y != 0 ? pos : neg) = true;
    if (pos && neg) return true;
  }
  return false;
}

// Midranks (1-based) of the pooled sample, plus the tie correction term
// sum(t^3 - t) over tie groups.
struct PooledRanks {
  std::vector<double> ranks;
  double tie_term = 0.0;
  bool has_ties = false;
};

PooledRanks RankPooled(std::span<const double> pooled) {
  std::vector<size_t> order(pooled.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t x, size_t y) { return pooled[x] < pooled[y]; });
  PooledRanks out;
  out.ranks.resize(pooled.size());
  size_t i = 0;
  while (i < order.size()) {
    size_t j = i + 1;
    while (j < order.size() && pooled[order[j]] == pooled[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    for (size_t t = i; t < j; ++t) out.ranks[order[t]] = midrank;
    const auto group = static_cast<double>(j - i);
    if (j - i > 1) {
      out.has_ties = true;
      out.tie_term += group * group * group - group;
    }
    i = j;
  }
  return out;
}

// Number of ways a size-k subset of ranks {1..total} attains each value of
// U = rank_sum - k(k+1)/2, for U in [0, k * (total - k)].
std::vector<double> ExactUCounts(size_t k, size_t total) {
  const size_t max_u = k * (total - k);
  // counts[j][u]: subsets of size j among the ranks processed so far.
  std::vector<std::vector<double>> counts(k + 1,
                                          std::vector<double>(max_u + 1, 0.0));
  counts[0][0] = 1.0;
  for (size_t t = 1; t <= total; ++t) {
    const size_t upper = std::min(k, t);
    for (size_t j = upper; j >= 1; --j) {
      // Choosing rank t as the j-th smallest adds (t - j) to U.
      const size_t shift = t - j;
      for (size_t u = max_u + 1; u-- > shift;) {
        counts[j][u] += counts[j - 1][u - shift];
      }
    }
  }
  return counts[k];
}

}  // namespace

double Auprc(std::span<const int> labels, std::span<const double> scores) {
  CheckSameLength(labels.size(), scores.size(), "auprc");
  size_t positives = 0;
  for (const int y : labels) positives += y != 0;
  if (positives == 0 || positives == labels.size()) {
    throw Error(ErrorCode::kUndefinedMetric,
                "average precision needs both classes");
  }
  std::vector<size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return scores[a] > scores[b]; });

  double ap = 0.0;
  double previous_recall = 0.0;
  size_t tp = 0;
  size_t fp = 0;
  size_t i = 0;
  while (i < order.size()) {
    size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] != 0 ? tp : fp) += 1;
      ++j;
    }
    const double recall =
        static_cast<double>(tp) / static_cast<double>(positives);
    const double precision =
        static_cast<double>(tp) / static_cast<double>(tp + fp);
    ap += (recall - previous_recall) * precision;
    previous_recall = recall;
    i = j;
  }
  return ap;
}

double LogLoss(std::span<const int> labels,
               std::span<const double> probabilities) {
  CheckSameLength(labels.size(), probabilities.size(), "log_loss");
  if (labels.empty()) return 0.0;
  double total = 0.0;
  for (size_t i = 0; i < labels.size(); ++i) {
    const double p =
        std::clamp(probabilities[i], kLogLossEpsilon, 1.0 - kLogLossEpsilon);
    total += labels[i] != 0 ? std::log(p) : std::log1p(-p);
  }
  return -total / static_cast<double>(labels.size());
}

std::string MetricName(Metric metric) {
  return metric == Metric::kAuprc ? "auprc" : "log_loss";
}

Metric MetricFromName(const std::string& name) {
  if (name == "auprc") return Metric::kAuprc;
  if (name == "log_loss") return Metric::kLogLoss;
  throw Error(ErrorCode::kConfig, "unknown metric '" + name + "'");
}

double Quantile(std::vector<double> values, double q) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const double position = q * static_cast<double>(values.size() - 1);
  const auto lower = static_cast<size_t>(std::floor(position));
  const size_t upper = std::min(lower + 1, values.size() - 1);
  const double fraction = position - static_cast<double>(lower);
  return values[lower] + fraction * (values[upper] - values[lower]);
}

void Summarize(MetricSamples& samples) {
  if (samples.replicates.empty()) return;
  std::vector<double> sorted = samples.replicates;
  std::sort(sorted.begin(), sorted.end());
  samples.median = sorted[(sorted.size() - 1) / 2];
  samples.q1 = Quantile(sorted, 0.25);
  samples.q3 = Quantile(sorted, 0.75);
  samples.iqr = samples.q3 - samples.q1;
}

std::vector<MetricSamples> BootstrapMetrics(std::span<const int> labels,
                                            std::span<const double> scores,
                                            int replicates, uint64_t seed,
                                            std::span<const Metric> metrics) {
  CheckSameLength(labels.size(), scores.size(), "bootstrap");
  if (replicates < 1) {
    throw Error(ErrorCode::kConfig, "bootstrap needs at least one replicate");
  }
  if (!HasBothClasses(labels)) {
    throw Error(ErrorCode::kUndefinedMetric,
                "bootstrap needs both classes in the evaluation set");
  }
  std::vector<MetricSamples> out(metrics.size());
  for (size_t m = 0; m < metrics.size(); ++m) {
    out[m].metric = metrics[m];
    out[m].seed = seed;
  }
  const size_t n = labels.size();
  std::vector<int> sample_labels(n);
  std::vector<double> sample_scores(n);
  int skipped = 0;
  for (int r = 0; r < replicates; ++r) {
    Rng rng(DeriveSeed(seed, static_cast<uint64_t>(r)));
    bool drawn = false;
    for (int attempt = 0; attempt < kMaxRedraws && !drawn; ++attempt) {
      for (size_t i = 0; i < n; ++i) {
        const size_t pick = rng.UniformInt(n);
        sample_labels[i] = labels[pick];
        sample_scores[i] = scores[pick];
      }
      drawn = HasBothClasses(sample_labels);
    }
    if (!drawn) {
      ++skipped;
      continue;
    }
    for (size_t m = 0; m < metrics.size(); ++m) {
      out[m].replicates.push_back(metrics[m] == Metric::kAuprc
                                      ? Auprc(sample_labels, sample_scores)
                                      : LogLoss(sample_labels, sample_scores));
    }
  }
  if (skipped == replicates) {
    throw Error(ErrorCode::kBootstrap, "every bootstrap replicate degenerate");
  }
  for (auto& samples : out) {
    samples.skipped = skipped;
    Summarize(samples);
  }
  return out;
}

std::string SignificanceStars(double p_value) {
  if (p_value < 0.001) return "***";
  if (p_value < 0.01) return "**";
  if (p_value < 0.05) return "*";
  return "ns";
}

ComparisonResult MannWhitneyU(std::span<const double> a,
                              std::span<const double> b) {
  if (a.empty() || b.empty()) {
    throw Error(ErrorCode::kValidation, "Mann-Whitney U needs two samples");
  }
  std::vector<double> pooled(a.begin(), a.end());
  pooled.insert(pooled.end(), b.begin(), b.end());
  const PooledRanks ranked = RankPooled(pooled);

  const auto n = static_cast<double>(a.size());
  const auto m = static_cast<double>(b.size());
  double rank_sum_a = 0.0;
  for (size_t i = 0; i < a.size(); ++i) rank_sum_a += ranked.ranks[i];

  ComparisonResult result;
  result.n_a = a.size();
  result.n_b = b.size();
  result.u = rank_sum_a - n * (n + 1.0) / 2.0;

  const double mean_u = n * m / 2.0;
  if (std::min(a.size(), b.size()) <= 8 && !ranked.has_ties) {
    result.exact = true;
    // Work with the smaller sample; its U is the mirror of U_a when needed.
    const bool a_smaller = a.size() <= b.size();
    const size_t k = a_smaller ? a.size() : b.size();
    const std::vector<double> counts = ExactUCounts(k, pooled.size());
    const double u_small = a_smaller ? result.u : n * m - result.u;
    const auto u_index = static_cast<size_t>(std::llround(u_small));
    double total = 0.0;
    double at_most = 0.0;
    double at_least = 0.0;
    for (size_t u = 0; u < counts.size(); ++u) {
      total += counts[u];
      if (u <= u_index) at_most += counts[u];
      if (u >= u_index) at_least += counts[u];
    }
    result.p_value =
        std::min(1.0, 2.0 * std::min(at_most, at_least) / total);
  } else {
    const double total = n + m;
    const double variance =
        n * m / 12.0 *
        ((total + 1.0) - ranked.tie_term / (total * (total - 1.0)));
    if (variance <= 0.0) {
      result.p_value = 1.0;
    } else {
      const double z =
          std::max(0.0, std::abs(result.u - mean_u) - 0.5) /
          std::sqrt(variance);
      result.p_value = std::clamp(std::erfc(z / std::sqrt(2.0)), 0.0, 1.0);
    }
  }
  result.stars = SignificanceStars(result.p_value);
  return result;
}

double ChiSquaredSurvival(double statistic, int dof) {
  if (dof < 1) {
    throw Error(ErrorCode::kValidation, "chi-squared needs dof >= 1");
  }
  if (statistic <= 0.0) return 1.0;
  return boost::math::gamma_q(0.5 * dof, 0.5 * statistic);
}

std::optional<ChiSquaredResult> ChiSquaredTest(
    std::span<const std::string> feature, std::span<const int> labels) {
  CheckSameLength(feature.size(), labels.size(), "chi_squared");
  std::map<std::string, std::array<double, 2>> table;
  double class_totals[2] = {0.0, 0.0};
  for (size_t i = 0; i < feature.size(); ++i) {
    const int cls = labels[i] != 0 ? 1 : 0;
    table[feature[i]][cls] += 1.0;
    class_totals[cls] += 1.0;
  }
  if (table.size() < 2 || class_totals[0] == 0.0 || class_totals[1] == 0.0) {
    return std::nullopt;
  }
  const double n = class_totals[0] + class_totals[1];
  ChiSquaredResult result;
  for (const auto& [level, counts] : table) {
    const double level_total = counts[0] + counts[1];
    for (int cls = 0; cls < 2; ++cls) {
      const double expected = level_total * class_totals[cls] / n;
      if (expected < 5.0) result.low_expected_count = true;
      const double diff = counts[cls] - expected;
      result.statistic += diff * diff / expected;
    }
  }
  result.dof = static_cast<int>(table.size()) - 1;
  result.p_value = ChiSquaredSurvival(result.statistic, result.dof);
  return result;
}

FeatureRanking TopFeatures(const Matrix& attributions,
                           std::span<const std::string> feature_names,
                           size_t k) {
  if (feature_names.size() != attributions.cols()) {
    throw Error(ErrorCode::kShape, "feature names do not match columns");
  }
  const size_t d = attributions.cols();
  std::vector<double> score(d, 0.0);
  for (size_t r = 0; r < attributions.rows(); ++r) {
    const auto row = attributions.row(r);
    for (size_t j = 0; j < d; ++j) score[j] += std::abs(row[j]);
  }
  if (attributions.rows() > 0) {
    for (double& s : score) s /= static_cast<double>(attributions.rows());
  }
  std::vector<size_t> order(d);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return score[a] > score[b]; });
  FeatureRanking ranking;
  for (size_t i = 0; i < std::min(k, d); ++i) {
    ranking.features.push_back(
        {feature_names[order[i]], order[i], score[order[i]]});
  }
  return ranking;
}

RankComparison RankCompare(const FeatureRanking& first,
                           const FeatureRanking& second) {
  std::map<std::string, int> second_rank;
  for (size_t i = 0; i < second.features.size(); ++i) {
    second_rank[second.features[i].name] = static_cast<int>(i) + 1;
  }
  std::set<std::string> all;
  for (const auto& f : first.features) all.insert(f.name);
  for (const auto& f : second.features) all.insert(f.name);

  RankComparison out;
  for (size_t i = 0; i < first.features.size(); ++i) {
    const auto it = second_rank.find(first.features[i].name);
    if (it == second_rank.end()) continue;
    const int rank = static_cast<int>(i) + 1;
    out.shared.push_back(
        {first.features[i].name, rank, it->second, it->second - rank});
  }
  out.jaccard = all.empty() ? 1.0
                            : static_cast<double>(out.shared.size()) /
                                  static_cast<double>(all.size());
  return out;
}

double AdjustedRandIndex(std::span<const int> first,
                         std::span<const int> second) {
  CheckSameLength(first.size(), second.size(), "adjusted_rand_index");
  const auto n = static_cast<double>(first.size());
  std::map<std::pair<int, int>, double> joint;
  std::map<int, double> rows;
  std::map<int, double> cols;
  for (size_t i = 0; i < first.size(); ++i) {
    joint[{first[i], second[i]}] += 1.0;
    rows[first[i]] += 1.0;
    cols[second[i]] += 1.0;
  }
  auto pairs = [](double c) { return c * (c - 1.0) / 2.0; };
  double index = 0.0;
  for (const auto& [key, count] : joint) index += pairs(count);
  double row_sum = 0.0;
  for (const auto& [key, count] : rows) row_sum += pairs(count);
  double col_sum = 0.0;
  for (const auto& [key, count] : cols) col_sum += pairs(count);
  const double expected = row_sum * col_sum / pairs(n);
  const double max_index = 0.5 * (row_sum + col_sum);
  if (max_index == expected) return 1.0;
  return (index - expected) / (max_index - expected);
}

}  // namespace adapthetero::stats
