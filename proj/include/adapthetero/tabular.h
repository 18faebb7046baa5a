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

// Cohort tables: CSV ingestion, the nine-step preprocessing pipeline
// (GCS adjustment through reindexing) and a synthetic cohort generator with
// planted subgroups.

#ifndef ADAPTHETERO_TABULAR_H_
#define ADAPTHETERO_TABULAR_H_

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "adapthetero/common.h"
#include "json.hpp"

namespace adapthetero::tabular {

enum class ColumnKind { kContinuous, kCategorical, kTarget };

std::string ColumnKindName(ColumnKind kind);
ColumnKind ColumnKindFromName(const std::string& name);

struct ColumnSpec {
  std::string name;
  ColumnKind kind = ColumnKind::kContinuous;

  bool operator==(const ColumnSpec&) const = default;
};

using Schema = std::vector<ColumnSpec>;

Schema SchemaFromJson(const nlohmann::json& json);
nlohmann::json SchemaToJson(const Schema& schema);
Schema ReadSchema(const std::string& path);

// One column. Continuous and target cells live in `numbers`, categorical
// cells in `categories`; the unused vector stays empty.
struct Column {
  std::string name;
  ColumnKind kind = ColumnKind::kContinuous;
  std::vector<double> numbers;
  std::vector<std::string> categories;
  std::vector<uint8_t> missing;

  size_t size() const { return missing.size(); }
  bool IsMissing(size_t row) const { return missing[row] != 0; }
  size_t CountMissing() const;

  bool operator==(const Column&) const = default;
};

struct FeatureTable {
  std::vector<Column> columns;
  std::vector<int64_t> row_ids;

  size_t num_rows() const { return row_ids.size(); }
  size_t num_columns() const { return columns.size(); }

  // Index of the column named `name`, if present.
  std::optional<size_t> Find(const std::string& name) const;
  const Column& at(const std::string& name) const;
  size_t target_index() const;
  std::vector<int> Labels() const;
  // Non-target column names in table order.
  std::vector<std::string> FeatureNames() const;
  Schema schema() const;

  FeatureTable SelectRows(std::span<const size_t> rows) const;
  void RemoveColumns(std::span<const std::string> names);

  // Checks the table invariants: one target column with values in {0, 1} and
  // no missing cells, unique row ids, finite continuous cells, and consistent
  // column lengths. Throws kValidation.
  void Validate() const;

  // Dense matrix of the non-target columns. Every such column must be
  // continuous and fully observed (the state after encoding).
  Matrix ToMatrix() const;

  bool operator==(const FeatureTable&) const = default;
};

// Cells equal to "" or "NA" (after trimming surrounding spaces) are missing.
bool IsMissingToken(std::string_view cell);

// Parses CSV text with a header row. Header names and schema names must match
// as sets; column order follows the header. When `require_target` is false a
// schema target column may be absent from the header (used for scoring rows).
FeatureTable ParseCsv(const std::string& content, const Schema& schema,
                      bool require_target = true);
FeatureTable ReadCsv(const std::string& path, const Schema& schema);
std::string ToCsv(const FeatureTable& table);
void WriteCsv(const std::string& path, const FeatureTable& table);

// Shortest decimal text that parses back to the same double.
std::string FormatNumber(double value);

enum class Comparator { kLess, kLessEqual, kGreater, kGreaterEqual, kEqual,
                        kNotEqual };

// A row matching the predicate `column <comparator> constant` is removed.
// Missing cells never match.
struct RowFilter {
  std::string column;
  Comparator comparator = Comparator::kGreater;
  double constant = 0.0;
};

struct PreprocessConfig {
  double split_ratio = 0.7;
  double missing_rate_threshold = 0.10;
  double alpha = 0.05;
  uint64_t seed = 0;
  std::string sentinel_category = "Unavailable";
  bool gcs_rule_enabled = true;
  std::vector<std::string> category_fill_columns = {"apache_2_bodysystem",
                                                    "apache_3j_bodysystem"};
  std::vector<std::string> drop_columns;
  std::vector<RowFilter> row_filters;

  // Throws kConfig when a field is out of range.
  void Validate() const;
};

PreprocessConfig PreprocessConfigFromJson(const nlohmann::json& json);
nlohmann::json PreprocessConfigToJson(const PreprocessConfig& config);

inline constexpr char kReasonConfigDrop[] = "config_drop";
inline constexpr char kReasonMissingRate[] = "missing_rate";
inline constexpr char kReasonConstant[] = "constant";
inline constexpr char kReasonAssociation[] = "association";

struct Exclusion {
  std::string column;
  std::string reason;
  // Missing rate or p-value behind the decision; NaN for config drops and
  // constant columns.
  double value = 0.0;
};

struct AssociationEntry {
  std::string column;
  // "chi_squared" or "mann_whitney".
  std::string test;
  double statistic = 0.0;
  double p_value = 1.0;
  bool low_expected_count = false;
};

// A fill value for one column; `number` for continuous, `category` for
// categorical columns.
struct FillValue {
  double number = 0.0;
  std::string category;

  bool operator==(const FillValue&) const = default;
};

using ImputationValues = std::map<std::string, FillValue>;
using EncoderMap = std::map<std::string, std::map<std::string, int>>;

struct PreprocessReport {
  std::vector<std::string> input_columns;
  size_t rows_filtered = 0;
  std::map<std::string, double> missing_rates;
  std::vector<AssociationEntry> associations;
  std::vector<Exclusion> excluded;
  std::vector<std::string> retained;
  ImputationValues train_imputation;
  ImputationValues test_imputation;
  EncoderMap encoders;
  // Original row id of each final row, per split.
  std::vector<int64_t> train_source_ids;
  std::vector<int64_t> test_source_ids;
};

nlohmann::json PreprocessReportToJson(const PreprocessReport& report);
PreprocessReport PreprocessReportFromJson(const nlohmann::json& json);

// Step 1. Rows with gcs_unable_apache = 1 get gcs_motor = gcs_verbal =
// gcs_eyes = 0. No-op unless all four columns exist.
FeatureTable AdjustGcs(FeatureTable table);

// Step 2. Missing cells of the named categorical columns become `sentinel`.
// Names absent from the table are ignored; a continuous column is a config
// error.
FeatureTable CompleteCategories(FeatureTable table,
                                std::span<const std::string> column_names,
                                const std::string& sentinel);

// Name of the missingness indicator for `column`.
std::string IndicatorName(const std::string& column);

// Step 3. Appends a categorical {"0","1"} indicator for every non-target
// column.
FeatureTable AddMissingnessIndicators(FeatureTable table);

// Step 4.
std::pair<FeatureTable, FeatureTable> StratifiedSplit(const FeatureTable& table,
                                                      double split_ratio,
                                                      uint64_t seed);

// Step 5. Missing rates are computed on train only; columns above the
// threshold are removed from both splits.
std::vector<Exclusion> ExcludeByMissingness(
    FeatureTable& train, FeatureTable& test, double threshold,
    std::map<std::string, double>* rates = nullptr);

// Step 6. Chi-squared for categorical columns, Mann-Whitney U for continuous
// ones, on train only. Missing cells are left out of each test.
std::vector<Exclusion> SelectByAssociation(
    FeatureTable& train, FeatureTable& test, double alpha,
    std::vector<AssociationEntry>* entries = nullptr);

// Median (continuous) or mode (categorical, ties to the lexicographically
// smallest value) of the observed cells. Throws kImputation when every cell is
// missing.
FillValue ComputeFill(const Column& column);

// Step 7. Each split is imputed from its own statistics.
std::pair<ImputationValues, ImputationValues> Impute(FeatureTable& train,
                                                     FeatureTable& test);

// Step 8. Categories are coded in lexicographic order of the train values;
// test-only categories get the reserved code equal to the train category
// count. Encoded columns become continuous.
EncoderMap OrdinalEncode(FeatureTable& train, FeatureTable& test);

// Step 9. Row ids become 0..n-1 in row order; returns the previous ids.
std::vector<int64_t> Reindex(FeatureTable& table);

// What scoring a new row needs from a preprocessing run.
struct FittedPreprocessor {
  Schema raw_schema;
  PreprocessConfig config;
  // Final feature columns in model order.
  std::vector<std::string> feature_names;
  // Kind of each feature column before encoding.
  std::vector<ColumnKind> feature_kinds;
  ImputationValues train_imputation;
  EncoderMap encoders;
};

nlohmann::json FittedPreprocessorToJson(const FittedPreprocessor& fitted);
FittedPreprocessor FittedPreprocessorFromJson(const nlohmann::json& json);

struct PreprocessResult {
  FeatureTable train;
  FeatureTable test;
  PreprocessReport report;
  FittedPreprocessor fitted;
};

// Config drops and row filters, then steps 1 through 9.
PreprocessResult Preprocess(const FeatureTable& raw,
                            const PreprocessConfig& config);

// Applies the train-fit transforms to raw rows (target optional) and returns
// their feature matrix in model order. Missing cells take the train fill
// values. Throws kSchema if a required column is absent.
Matrix TransformRows(const FittedPreprocessor& fitted, const FeatureTable& raw);

enum class MissingMechanism { kNone, kRandom, kOutcomeLinked };

struct SyntheticSpec {
  size_t n_rows = 1000;
  size_t n_features = 8;
  size_t n_planted_subgroups = 2;
  // Per subgroup, one coefficient per feature.
  std::vector<std::vector<double>> coefficients;
  // Per subgroup outcome prevalence.
  std::vector<double> prevalence;
  // Per subgroup feature means; zeros when empty.
  std::vector<std::vector<double>> feature_means;
  // Mixing proportions; equal when empty.
  std::vector<double> weights;
  MissingMechanism missingness = MissingMechanism::kNone;
  double missing_rate = 0.0;
  uint64_t seed = 0;
  std::string target_name = "outcome";

  void Validate() const;
};

SyntheticSpec SyntheticSpecFromJson(const nlohmann::json& json);
nlohmann::json SyntheticSpecToJson(const SyntheticSpec& spec);

struct SyntheticCohort {
  FeatureTable table;
  Schema schema;
  std::vector<int> planted;
  std::vector<double> intercepts;
  std::vector<std::string> warnings;
};

// Features are N(mean_g, I) for the row's subgroup g; the outcome is
// Bernoulli(sigmoid(intercept_g + coefficients_g . x)) with intercept_g solved
// so the subgroup's expected prevalence matches its target. Missingness is
// injected afterwards: kRandom masks each feature cell with probability
// missing_rate, kOutcomeLinked with 1.5x that rate for positives and 0.5x for
// negatives.
SyntheticCohort GenerateSynthetic(const SyntheticSpec& spec);

}  // namespace adapthetero::tabular

#endif  // ADAPTHETERO_TABULAR_H_
