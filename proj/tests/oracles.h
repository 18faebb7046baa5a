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

// Slow reference computations used as test oracles. Each one follows the
// textbook definition directly and shares no code with the library.

#ifndef ADAPTHETERO_TESTS_ORACLES_H_
#define ADAPTHETERO_TESTS_ORACLES_H_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <set>
#include <utility>
#include <vector>

#include "adapthetero/common.h"
#include "adapthetero/gbdt.h"

namespace oracle {

// Average precision by sweeping every distinct score as a threshold and
// recounting true and false positives from scratch.
inline double AveragePrecision(const std::vector<int>& y, const std::vector<double>& s) {
  std::set<double, std::greater<double>> thresholds(s.begin(), s.end());
  const double positives = std::count(y.begin(), y.end(), 1);
  double ap = 0.0;
  double previous_recall = 0.0;
  for (double t : thresholds) {
    double tp = 0.0;
    double fp = 0.0;
    for (size_t i = 0; i < y.size(); ++i) {
      if (s[i] >= t) (y[i] ? tp : fp) += 1.0;
    }
    const double recall = tp / positives;
    const double precision = tp / (tp + fp);
    ap += (recall - previous_recall) * precision;
    previous_recall = recall;
  }
  return ap;
}

// Two-sided exact Mann-Whitney p-value by listing every way of giving
// |a| of the pooled ranks to the first sample. Samples must be tie-free.
inline double MannWhitneyExactP(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> pooled = a;
  pooled.insert(pooled.end(), b.begin(), b.end());
  std::vector<size_t> order(pooled.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](size_t i, size_t j) { return pooled[i] < pooled[j]; });
  std::vector<double> rank(pooled.size());
  for (size_t r = 0; r < order.size(); ++r) rank[order[r]] = static_cast<double>(r + 1);
  const double n = static_cast<double>(a.size());
  double observed = -n * (n + 1) / 2;
  for (size_t i = 0; i < a.size(); ++i) observed += rank[i];

  const size_t total = pooled.size();
  double le = 0.0;
  double ge = 0.0;
  double count = 0.0;
  for (uint32_t mask = 0; mask < (1u << total); ++mask) {
    if (static_cast<size_t>(__builtin_popcount(mask)) != a.size()) continue;
    double u = -n * (n + 1) / 2;
    for (size_t r = 0; r < total; ++r) {
      if (mask & (1u << r)) u += static_cast<double>(r + 1);
    }
    count += 1.0;
    if (u <= observed + 1e-9) le += 1.0;
    if (u >= observed - 1e-9) ge += 1.0;
  }
  return std::min(1.0, 2.0 * std::min(le, ge) / count);
}

// Upper tail of chi-squared(dof) by Simpson integration of the density after
// the substitution x = t^2, which removes the singularity at zero.
inline double ChiSquaredTail(double statistic, int dof) {
  const double k = dof;
  const double norm = std::pow(2.0, k / 2.0) * std::tgamma(k / 2.0);
  auto integrand = [&](double t) {
    return 2.0 * std::pow(t, k - 1.0) * std::exp(-t * t / 2.0) / norm;
  };
  const double upper = std::sqrt(statistic);
  const int steps = 200000;
  const double h = upper / steps;
  double sum = integrand(0.0) + integrand(upper);
  for (int i = 1; i < steps; ++i) sum += integrand(i * h) * (i % 2 ? 4.0 : 2.0);
  return 1.0 - sum * h / 3.0;
}

// Adjusted Rand index from explicit pair counting.
inline double AdjustedRand(const std::vector<int>& x, const std::vector<int>& y) {
  double both = 0.0, only_x = 0.0, only_y = 0.0, neither = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    for (size_t j = i + 1; j < x.size(); ++j) {
      const bool sx = x[i] == x[j];
      const bool sy = y[i] == y[j];
      if (sx && sy) both += 1;
      else if (sx) only_x += 1;
      else if (sy) only_y += 1;
      else neither += 1;
    }
  }
  const double denom = (both + only_x) * (only_x + neither) + (both + only_y) * (only_y + neither);
  if (denom == 0.0) return 1.0;
  return 2.0 * (both * neither - only_x * only_y) / denom;
}

// Expected tree output given that only the features in `subset` are known:
// known splits follow x, unknown splits average children by cover.
inline double ConditionalExpectation(const adapthetero::gbdt::Tree& tree,
                                     const std::vector<double>& x, uint32_t subset,
                                     int node = 0) {
  const auto& n = tree.nodes[node];
  if (n.is_leaf()) return n.value;
  if (subset & (1u << n.feature)) {
    return ConditionalExpectation(tree, x, subset, x[n.feature] < n.threshold ? n.left : n.right);
  }
  const auto& l = tree.nodes[n.left];
  const auto& r = tree.nodes[n.right];
  return (l.cover * ConditionalExpectation(tree, x, subset, n.left) +
          r.cover * ConditionalExpectation(tree, x, subset, n.right)) /
         (l.cover + r.cover);
}

// Shapley values of the ensemble margin over all 2^d feature subsets.
inline std::vector<double> BruteForceShapley(const adapthetero::gbdt::TreeEnsemble& model,
                                             const std::vector<double>& x) {
  const size_t d = x.size();
  std::vector<double> fact(d + 1, 1.0);
  for (size_t i = 1; i <= d; ++i) fact[i] = fact[i - 1] * static_cast<double>(i);
  std::vector<double> value(1u << d, 0.0);
  for (uint32_t s = 0; s < (1u << d); ++s) {
    for (const auto& tree : model.trees) {
      value[s] += model.learning_rate * ConditionalExpectation(tree, x, s);
    }
  }
  std::vector<double> phi(d, 0.0);
  for (size_t j = 0; j < d; ++j) {
    for (uint32_t s = 0; s < (1u << d); ++s) {
      if (s & (1u << j)) continue;
      const size_t size = static_cast<size_t>(__builtin_popcount(s));
      const double weight = fact[size] * fact[d - size - 1] / fact[d];
      phi[j] += weight * (value[s | (1u << j)] - value[s]);
    }
  }
  return phi;
}

// Minimum total weight over every labeled spanning tree of the complete
// graph, listed through Pruefer sequences.
inline double MinimumSpanningWeight(size_t n,
                                    const std::function<double(size_t, size_t)>& weight) {
  if (n < 2) return 0.0;
  if (n == 2) return weight(0, 1);
  const size_t len = n - 2;
  std::vector<size_t> seq(len, 0);
  double best = std::numeric_limits<double>::infinity();
  std::vector<size_t> degree(n);
  while (true) {
    std::fill(degree.begin(), degree.end(), 1);
    for (size_t v : seq) ++degree[v];
    double total = 0.0;
    for (size_t v : seq) {
      size_t leaf = 0;
      while (degree[leaf] != 1) ++leaf;
      total += weight(leaf, v);
      --degree[leaf];
      --degree[v];
    }
    size_t u = n, w = n;
    for (size_t i = 0; i < n; ++i) {
      if (degree[i] == 1) (u == n ? u : w) = i;
    }
    total += weight(u, w);
    best = std::min(best, total);
    size_t pos = 0;
    while (pos < len && ++seq[pos] == n) seq[pos++] = 0;
    if (pos == len) break;
  }
  return best;
}

// Sum of squared residuals of 1 / (1 + a d^(2b)) against the min_dist offset
// curve on the 300-point grid over [0, 3 * spread].
inline double CurveLoss(double a, double b, double min_dist, double spread = 1.0) {
  double loss = 0.0;
  for (int i = 0; i < 300; ++i) {
    const double d = 3.0 * spread * i / 299.0;
    const double target = d < min_dist ? 1.0 : std::exp(-(d - min_dist) / spread);
    const double fit = 1.0 / (1.0 + a * std::pow(d, 2.0 * b));
    loss += (fit - target) * (fit - target);
  }
  return loss;
}

// (a, b) minimizing CurveLoss by nested grid refinement.
inline std::pair<double, double> CurveGridSearch(double min_dist, double spread = 1.0) {
  double a0 = 0.05, a1 = 5.0, b0 = 0.3, b1 = 2.0;
  double best_a = a0, best_b = b0;
  for (int round = 0; round < 8; ++round) {
    double best = std::numeric_limits<double>::infinity();
    const int steps = 60;
    for (int i = 0; i <= steps; ++i) {
      for (int j = 0; j <= steps; ++j) {
        const double a = a0 + (a1 - a0) * i / steps;
        const double b = b0 + (b1 - b0) * j / steps;
        const double loss = CurveLoss(a, b, min_dist, spread);
        if (loss < best) {
          best = loss;
          best_a = a;
          best_b = b;
        }
      }
    }
    const double ha = 2.0 * (a1 - a0) / steps;
    const double hb = 2.0 * (b1 - b0) / steps;
    a0 = std::max(1e-6, best_a - ha);
    a1 = best_a + ha;
    b0 = std::max(1e-6, best_b - hb);
    b1 = best_b + hb;
  }
  return {best_a, best_b};
}

// Mean silhouette of `labels` over the rows of a 2-column matrix.
inline double Silhouette(const adapthetero::Matrix& coords, const std::vector<int>& labels) {
  const size_t n = coords.rows();
  double total = 0.0;
  for (size_t i = 0; i < n; ++i) {
    double same = 0.0, other = 0.0;
    size_t n_same = 0, n_other = 0;
    for (size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const double dx = coords(i, 0) - coords(j, 0);
      const double dy = coords(i, 1) - coords(j, 1);
      const double d = std::sqrt(dx * dx + dy * dy);
      if (labels[i] == labels[j]) {
        same += d;
        ++n_same;
      } else {
        other += d;
        ++n_other;
      }
    }
    const double a = n_same ? same / n_same : 0.0;
    const double b = n_other ? other / n_other : 0.0;
    total += std::max(a, b) > 0 ? (b - a) / std::max(a, b) : 0.0;
  }
  return total / static_cast<double>(n);
}

}  // namespace oracle

#endif  // ADAPTHETERO_TESTS_ORACLES_H_
