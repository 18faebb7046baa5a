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

// Exact path-dependent TreeSHAP attributions and their z-score
// standardization.
//
// Attributions are in margin (log-odds) units. The expectation of a tree given
// a feature subset S follows the tree, taking x's branch at splits on features
// in S and averaging children by cover at the other splits. For every row,
//
//   base_value + sum_j values(row, j) == PredictMargin(model, row).

#ifndef ADAPTHETERO_ATTRIBUTION_H_
#define ADAPTHETERO_ATTRIBUTION_H_

#include <string>
#include <vector>

#include "adapthetero/common.h"
#include "adapthetero/gbdt.h"
#include "json.hpp"

namespace adapthetero::attribution {

struct ShapMatrix {
  Matrix values;
  double base_value = 0.0;
  std::vector<std::string> feature_names;
};

// Attributions of a single tree (unscaled by the learning rate), added into
// `phi`. Returns nothing; the tree's expected value is ExpectedValue(tree).
void TreeShap(const gbdt::Tree& tree, std::span<const double> x,
              std::span<double> phi);

// Cover-weighted mean leaf value of a tree.
double ExpectedValue(const gbdt::Tree& tree);

// Throws kModelIntegrity if an internal node has non-positive cover or a cover
// that is not the sum of its children's.
void CheckCovers(const gbdt::Tree& tree);

ShapMatrix ComputeShap(const gbdt::TreeEnsemble& model, const Matrix& x,
                       std::vector<std::string> feature_names = {});

struct StandardizationStats {
  std::vector<double> mean;
  std::vector<double> stddev;
  std::vector<bool> zero_variance;
};

nlohmann::json StatsToJson(const StandardizationStats& stats);
StandardizationStats StatsFromJson(const nlohmann::json& json);

// Per-column mean and population standard deviation.
StandardizationStats StandardizeFit(const Matrix& values);

// (value - mean) / stddev per column; zero-variance columns become 0.
Matrix StandardizeApply(const Matrix& values,
                        const StandardizationStats& stats);

}  // namespace adapthetero::attribution

#endif  // ADAPTHETERO_ATTRIBUTION_H_
