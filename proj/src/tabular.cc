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

#include "adapthetero/tabular.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "adapthetero/stats.h"

namespace adapthetero::tabular {
namespace {

using json = nlohmann::json;

constexpr char kGcsUnable[] = "gcs_unable_apache";
constexpr char kGcsMotor[] = "gcs_motor";
constexpr char kGcsVerbal[] = "gcs_verbal";
constexpr char kGcsEyes[] = "gcs_eyes";

std::string_view Trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

std::optional<double> ParseNumber(std::string_view text) {
  text = Trim(text);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  double value = 0.0;
  const auto [ptr, ec] =
      std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty() ||
      !std::isfinite(value)) {
    return std::nullopt;
  }
  return value;
}

// Splits CSV text into records of fields. Handles quoted fields with doubled
// quotes and CRLF line ends. Records that are entirely empty are skipped.
std::vector<std::vector<std::string>> SplitCsv(const std::string& content) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  auto end_record = [&]() {
    record.push_back(std::move(field));
    field.clear();
    if (!(record.size() == 1 && record[0].empty())) {
      records.push_back(std::move(record));
    }
    record.clear();
    field_started = false;
  };
  for (size_t i = 0; i < content.size(); ++i) {
    const char c = content[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < content.size() && content[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    if (c == '"' && !field_started) {
      in_quotes = true;
      field_started = true;
    } else if (c == ',') {
      record.push_back(std::move(field));
      field.clear();
      field_started = false;
    } else if (c == '\n') {
      end_record();
    } else if (c == '\r') {
      // Part of a CRLF line end.
    } else {
      field.push_back(c);
      field_started = true;
    }
  }
  if (in_quotes) {
    throw Error(ErrorCode::kParse, "unterminated quoted field");
  }
  if (field_started || !field.empty() || !record.empty()) end_record();
  return records;
}

std::string QuoteIfNeeded(const std::string& value) {
  const bool needs = value.find_first_of(",\"\n\r") != std::string::npos ||
                     (!value.empty() && (value.front() == ' ' ||
                                         value.back() == ' '));
  if (!needs) return value;
  std::string out = "\"";
  for (const char c : value) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

Column EmptyColumn(const std::string& name, ColumnKind kind) {
  Column column;
  column.name = name;
  column.kind = kind;
  return column;
}

void PushCell(Column& column, std::string_view cell, size_t line,
              bool allow_missing_target) {
  const bool missing = IsMissingToken(cell);
  switch (column.kind) {
    case ColumnKind::kTarget: {
      if (missing) {
        if (!allow_missing_target) {
          throw Error(ErrorCode::kValidation,
                      "missing target value in column '" + column.name +
                          "' at line " + std::to_string(line));
        }
        column.numbers.push_back(0.0);
        column.missing.push_back(1);
        return;
      }
      const auto value = ParseNumber(cell);
      if (!value) {
        throw Error(ErrorCode::kParse, "unparseable target '" +
                                           std::string(cell) + "' in column '" +
                                           column.name + "' at line " +
                                           std::to_string(line));
      }
      if (*value != 0.0 && *value != 1.0) {
        throw Error(ErrorCode::kValidation,
                    "target value '" + std::string(cell) + "' in column '" +
                        column.name + "' at line " + std::to_string(line) +
                        " is not 0 or 1");
      }
      column.numbers.push_back(*value);
      column.missing.push_back(0);
      return;
    }
    case ColumnKind::kContinuous: {
      if (missing) {
        column.numbers.push_back(0.0);
        column.missing.push_back(1);
        return;
      }
      const auto value = ParseNumber(cell);
      if (!value) {
        throw Error(ErrorCode::kParse, "unparseable number '" +
                                           std::string(cell) + "' in column '" +
                                           column.name + "' at line " +
                                           std::to_string(line));
      }
      column.numbers.push_back(*value);
      column.missing.push_back(0);
      return;
    }
    case ColumnKind::kCategorical:
      column.categories.push_back(missing ? std::string() : std::string(cell));
      column.missing.push_back(missing ? 1 : 0);
      return;
  }
}

bool Matches(Comparator comparator, double value, double constant) {
  switch (comparator) {
    case Comparator::kLess:
      return value < constant;
    case Comparator::kLessEqual:
      return value <= constant;
    case Comparator::kGreater:
      return value > constant;
    case Comparator::kGreaterEqual:
      return value >= constant;
    case Comparator::kEqual:
      return value == constant;
    case Comparator::kNotEqual:
      return value != constant;
  }
  return false;
}

std::string ComparatorSymbol(Comparator comparator) {
  switch (comparator) {
    case Comparator::kLess:
      return "<";
    case Comparator::kLessEqual:
      return "<=";
    case Comparator::kGreater:
      return ">";
    case Comparator::kGreaterEqual:
      return ">=";
    case Comparator::kEqual:
      return "==";
    case Comparator::kNotEqual:
      return "!=";
  }
  return "?";
}

Comparator ComparatorFromSymbol(const std::string& symbol) {
  for (const auto c : {Comparator::kLess, Comparator::kLessEqual,
                       Comparator::kGreater, Comparator::kGreaterEqual,
                       Comparator::kEqual, Comparator::kNotEqual}) {
    if (ComparatorSymbol(c) == symbol) return c;
  }
  throw Error(ErrorCode::kConfig, "unknown comparator '" + symbol + "'");
}

// Reads a cell of a continuous or categorical column as a number, for the GCS
// rule and row filters.
std::optional<double> CellAsNumber(const Column& column, size_t row) {
  if (column.IsMissing(row)) return std::nullopt;
  if (column.kind == ColumnKind::kCategorical) {
    return ParseNumber(column.categories[row]);
  }
  return column.numbers[row];
}

void SetZero(Column& column, size_t row) {
  if (column.kind == ColumnKind::kCategorical) {
    column.categories[row] = "0";
  } else {
    column.numbers[row] = 0.0;
  }
  column.missing[row] = 0;
}

json FillToJson(const ImputationValues& values, const FeatureTable* kinds) {
  json out = json::object();
  for (const auto& [name, fill] : values) {
    const bool categorical =
        kinds == nullptr ? !fill.category.empty()
                         : kinds->at(name).kind == ColumnKind::kCategorical;
    if (categorical) {
      out[name] = fill.category;
    } else {
      out[name] = fill.number;
    }
  }
  return out;
}

ImputationValues FillFromJson(const json& j) {
  ImputationValues out;
  for (const auto& [name, value] : j.items()) {
    FillValue fill;
    if (value.is_string()) {
      fill.category = value.get<std::string>();
    } else {
      fill.number = value.get<double>();
    }
    out[name] = fill;
  }
  return out;
}

json ExclusionToJson(const Exclusion& e) {
  json out = {{"column", e.column}, {"reason", e.reason}};
  out["value"] = std::isfinite(e.value) ? json(e.value) : json(nullptr);
  return out;
}

}  // namespace

std::string ColumnKindName(ColumnKind kind) {
  switch (kind) {
    case ColumnKind::kContinuous:
      return "continuous";
    case ColumnKind::kCategorical:
      return "categorical";
    case ColumnKind::kTarget:
      return "binary-target";
  }
  return "unknown";
}

ColumnKind ColumnKindFromName(const std::string& name) {
  if (name == "continuous") return ColumnKind::kContinuous;
  if (name == "categorical") return ColumnKind::kCategorical;
  if (name == "binary-target" || name == "target") return ColumnKind::kTarget;
  throw Error(ErrorCode::kSchema, "unknown column kind '" + name + "'");
}

Schema SchemaFromJson(const json& j) {
  if (!j.is_array()) {
    throw Error(ErrorCode::kSchema, "schema must be a JSON list");
  }
  Schema schema;
  std::set<std::string> seen;
  size_t targets = 0;
  for (const auto& entry : j) {
    if (!entry.contains("name") || !entry.contains("kind")) {
      throw Error(ErrorCode::kSchema, "schema entries need name and kind");
    }
    ColumnSpec spec{entry["name"].get<std::string>(),
                    ColumnKindFromName(entry["kind"].get<std::string>())};
    if (!seen.insert(spec.name).second) {
      throw Error(ErrorCode::kSchema, "duplicate column '" + spec.name + "'");
    }
    targets += spec.kind == ColumnKind::kTarget;
    schema.push_back(std::move(spec));
  }
  if (targets != 1) {
    throw Error(ErrorCode::kSchema, "schema needs exactly one target column");
  }
  return schema;
}

json SchemaToJson(const Schema& schema) {
  json out = json::array();
  for (const auto& spec : schema) {
    out.push_back({{"name", spec.name}, {"kind", ColumnKindName(spec.kind)}});
  }
  return out;
}

Schema ReadSchema(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open schema '" + path + "'");
  try {
    return SchemaFromJson(json::parse(in));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kSchema, "invalid schema JSON: " + std::string(e.what()));
  }
}

size_t Column::CountMissing() const {
  return static_cast<size_t>(std::count(missing.begin(), missing.end(), 1));
}

std::optional<size_t> FeatureTable::Find(const std::string& name) const {
  for (size_t c = 0; c < columns.size(); ++c) {
    if (columns[c].name == name) return c;
  }
  return std::nullopt;
}

const Column& FeatureTable::at(const std::string& name) const {
  const auto index = Find(name);
  if (!index) throw Error(ErrorCode::kSchema, "no column '" + name + "'");
  return columns[*index];
}

size_t FeatureTable::target_index() const {
  for (size_t c = 0; c < columns.size(); ++c) {
    if (columns[c].kind == ColumnKind::kTarget) return c;
  }
  throw Error(ErrorCode::kValidation, "table has no target column");
}

std::vector<int> FeatureTable::Labels() const {
  const Column& target = columns[target_index()];
  std::vector<int> labels(target.size());
  for (size_t r = 0; r < labels.size(); ++r) {
    labels[r] = target.numbers[r] != 0.0 ? 1 : 0;
  }
  return labels;
}

std::vector<std::string> FeatureTable::FeatureNames() const {
  std::vector<std::string> names;
  for (const auto& column : columns) {
    if (column.kind != ColumnKind::kTarget) names.push_back(column.name);
  }
  return names;
}

Schema FeatureTable::schema() const {
  Schema out;
  for (const auto& column : columns) out.push_back({column.name, column.kind});
  return out;
}

FeatureTable FeatureTable::SelectRows(std::span<const size_t> rows) const {
  FeatureTable out;
  out.row_ids.reserve(rows.size());
  for (const size_t r : rows) out.row_ids.push_back(row_ids[r]);
  for (const auto& column : columns) {
    Column copy = EmptyColumn(column.name, column.kind);
    copy.missing.reserve(rows.size());
    for (const size_t r : rows) {
      copy.missing.push_back(column.missing[r]);
      if (column.kind == ColumnKind::kCategorical) {
        copy.categories.push_back(column.categories[r]);
      } else {
        copy.numbers.push_back(column.numbers[r]);
      }
    }
    out.columns.push_back(std::move(copy));
  }
  return out;
}

void FeatureTable::RemoveColumns(std::span<const std::string> names) {
  const std::set<std::string> drop(names.begin(), names.end());
  std::erase_if(columns, [&](const Column& c) { return drop.count(c.name) > 0; });
}

void FeatureTable::Validate() const {
  size_t targets = 0;
  std::set<std::string> names;
  for (const auto& column : columns) {
    if (!names.insert(column.name).second) {
      throw Error(ErrorCode::kValidation, "duplicate column '" + column.name + "'");
    }
    if (column.size() != num_rows()) {
      throw Error(ErrorCode::kValidation,
                  "column '" + column.name + "' has wrong length");
    }
    const size_t payload = column.kind == ColumnKind::kCategorical
                               ? column.categories.size()
                               : column.numbers.size();
    if (payload != num_rows()) {
      throw Error(ErrorCode::kValidation,
                  "column '" + column.name + "' storage does not match kind");
    }
    if (column.kind == ColumnKind::kTarget) {
      ++targets;
      for (size_t r = 0; r < num_rows(); ++r) {
        if (column.IsMissing(r) ||
            (column.numbers[r] != 0.0 && column.numbers[r] != 1.0)) {
          throw Error(ErrorCode::kValidation, "target '" + column.name +
                                                  "' must be 0/1 without gaps");
        }
      }
    } else if (column.kind == ColumnKind::kContinuous) {
      for (size_t r = 0; r < num_rows(); ++r) {
        if (!column.IsMissing(r) && !std::isfinite(column.numbers[r])) {
          throw Error(ErrorCode::kValidation,
                      "non-finite value in column '" + column.name + "'");
        }
      }
    }
  }
  if (targets != 1) {
    throw Error(ErrorCode::kValidation, "table needs exactly one target column");
  }
  const std::set<int64_t> ids(row_ids.begin(), row_ids.end());
  if (ids.size() != row_ids.size()) {
    throw Error(ErrorCode::kValidation, "row ids are not unique");
  }
}

Matrix FeatureTable::ToMatrix() const {
  std::vector<const Column*> features;
  for (const auto& column : columns) {
    if (column.kind == ColumnKind::kTarget) continue;
    if (column.kind != ColumnKind::kContinuous) {
      throw Error(ErrorCode::kValidation,
                  "column '" + column.name + "' is not encoded");
    }
    features.push_back(&column);
  }
  Matrix out(num_rows(), features.size());
  for (size_t j = 0; j < features.size(); ++j) {
    for (size_t r = 0; r < num_rows(); ++r) {
      if (features[j]->IsMissing(r)) {
        throw Error(ErrorCode::kValidation,
                    "column '" + features[j]->name + "' has missing cells");
      }
      out(r, j) = features[j]->numbers[r];
    }
  }
  return out;
}

bool IsMissingToken(std::string_view cell) {
  cell = Trim(cell);
  return cell.empty() || cell == "NA";
}

FeatureTable ParseCsv(const std::string& content, const Schema& schema,
                      bool require_target) {
  const auto records = SplitCsv(content);
  if (records.empty()) throw Error(ErrorCode::kParse, "CSV has no header row");
  const auto& header = records.front();

  std::map<std::string, ColumnKind> kinds;
  for (const auto& spec : schema) kinds[spec.name] = spec.kind;

  FeatureTable table;
  std::set<std::string> seen;
  for (const auto& raw_name : header) {
    const std::string name(Trim(raw_name));
    const auto it = kinds.find(name);
    if (it == kinds.end()) {
      throw Error(ErrorCode::kSchema, "header column '" + name +
                                          "' is not in the schema");
    }
    if (!seen.insert(name).second) {
      throw Error(ErrorCode::kSchema, "duplicate header column '" + name + "'");
    }
    table.columns.push_back(EmptyColumn(name, it->second));
  }
  for (const auto& spec : schema) {
    if (seen.count(spec.name)) continue;
    if (spec.kind == ColumnKind::kTarget && !require_target) continue;
    throw Error(ErrorCode::kSchema,
                "schema column '" + spec.name + "' missing from header");
  }

  for (size_t r = 1; r < records.size(); ++r) {
    const auto& record = records[r];
    const size_t line = r + 1;
    if (record.size() != header.size()) {
      throw Error(ErrorCode::kParse, "line " + std::to_string(line) + " has " +
                                         std::to_string(record.size()) +
                                         " fields, expected " +
                                         std::to_string(header.size()));
    }
    for (size_t c = 0; c < record.size(); ++c) {
      PushCell(table.columns[c], record[c], line, !require_target);
    }
    table.row_ids.push_back(static_cast<int64_t>(r - 1));
  }
  return table;
}

FeatureTable ReadCsv(const std::string& path, const Schema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return ParseCsv(buffer.str(), schema);
}

std::string FormatNumber(double value) {
  char buffer[64];
  const auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof(buffer), value);
  return std::string(buffer, ptr);
}

std::string ToCsv(const FeatureTable& table) {
  std::string out;
  for (size_t c = 0; c < table.columns.size(); ++c) {
    if (c) out.push_back(',');
    out += QuoteIfNeeded(table.columns[c].name);
  }
  out.push_back('\n');
  for (size_t r = 0; r < table.num_rows(); ++r) {
    for (size_t c = 0; c < table.columns.size(); ++c) {
      if (c) out.push_back(',');
      const Column& column = table.columns[c];
      if (column.IsMissing(r)) continue;
      if (column.kind == ColumnKind::kCategorical) {
        out += QuoteIfNeeded(column.categories[r]);
      } else {
        out += FormatNumber(column.numbers[r]);
      }
    }
    out.push_back('\n');
  }
  return out;
}

void WriteCsv(const std::string& path, const FeatureTable& table) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write '" + path + "'");
  out << ToCsv(table);
}

void PreprocessConfig::Validate() const {
  if (!(split_ratio > 0.0 && split_ratio < 1.0)) {
    throw Error(ErrorCode::kConfig, "split_ratio must be in (0, 1)");
  }
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw Error(ErrorCode::kConfig, "alpha must be in (0, 1)");
  }
  if (!(missing_rate_threshold >= 0.0 && missing_rate_threshold < 1.0)) {
    throw Error(ErrorCode::kConfig, "missing_rate_threshold must be in [0, 1)");
  }
}

PreprocessConfig PreprocessConfigFromJson(const json& j) {
  PreprocessConfig config;
  config.split_ratio = j.value("split_ratio", config.split_ratio);
  config.missing_rate_threshold =
      j.value("missing_rate_threshold", config.missing_rate_threshold);
  config.alpha = j.value("alpha", config.alpha);
  config.seed = j.value("seed", config.seed);
  config.sentinel_category = j.value("sentinel_category", config.sentinel_category);
  config.gcs_rule_enabled = j.value("gcs_rule_enabled", config.gcs_rule_enabled);
  if (j.contains("category_fill_columns")) {
    config.category_fill_columns =
        j["category_fill_columns"].get<std::vector<std::string>>();
  }
  if (j.contains("drop_columns")) {
    config.drop_columns = j["drop_columns"].get<std::vector<std::string>>();
  }
  if (j.contains("row_filters")) {
    for (const auto& f : j["row_filters"]) {
      config.row_filters.push_back(
          {f.at("column").get<std::string>(),
           ComparatorFromSymbol(f.at("comparator").get<std::string>()),
           f.at("constant").get<double>()});
    }
  }
  config.Validate();
  return config;
}

json PreprocessConfigToJson(const PreprocessConfig& config) {
  json filters = json::array();
  for (const auto& f : config.row_filters) {
    filters.push_back({{"column", f.column},
                       {"comparator", ComparatorSymbol(f.comparator)},
                       {"constant", f.constant}});
  }
  return {{"split_ratio", config.split_ratio},
          {"missing_rate_threshold", config.missing_rate_threshold},
          {"alpha", config.alpha},
          {"seed", config.seed},
          {"sentinel_category", config.sentinel_category},
          {"gcs_rule_enabled", config.gcs_rule_enabled},
          {"category_fill_columns", config.category_fill_columns},
          {"drop_columns", config.drop_columns},
          {"row_filters", filters}};
}

json PreprocessReportToJson(const PreprocessReport& report) {
  json associations = json::array();
  for (const auto& a : report.associations) {
    associations.push_back({{"column", a.column},
                            {"test", a.test},
                            {"statistic", a.statistic},
                            {"p_value", a.p_value},
                            {"low_expected_count", a.low_expected_count}});
  }
  json excluded = json::array();
  for (const auto& e : report.excluded) excluded.push_back(ExclusionToJson(e));
  json encoders = json::object();
  for (const auto& [column, mapping] : report.encoders) {
    encoders[column] = mapping;
  }
  return {{"input_columns", report.input_columns},
          {"rows_filtered", report.rows_filtered},
          {"missing_rates", report.missing_rates},
          {"associations", associations},
          {"excluded", excluded},
          {"retained", report.retained},
          {"imputation",
           {{"train", FillToJson(report.train_imputation, nullptr)},
            {"test", FillToJson(report.test_imputation, nullptr)}}},
          {"encoders", encoders},
          {"source_row_ids",
           {{"train", report.train_source_ids},
            {"test", report.test_source_ids}}}};
}

PreprocessReport PreprocessReportFromJson(const json& j) {
  PreprocessReport report;
  report.input_columns = j.at("input_columns").get<std::vector<std::string>>();
  report.rows_filtered = j.at("rows_filtered").get<size_t>();
  report.missing_rates =
      j.at("missing_rates").get<std::map<std::string, double>>();
  for (const auto& a : j.at("associations")) {
    report.associations.push_back(
        {a.at("column").get<std::string>(), a.at("test").get<std::string>(),
         a.at("statistic").get<double>(), a.at("p_value").get<double>(),
         a.at("low_expected_count").get<bool>()});
  }
  for (const auto& e : j.at("excluded")) {
    report.excluded.push_back(
        {e.at("column").get<std::string>(), e.at("reason").get<std::string>(),
         e.at("value").is_null() ? std::numeric_limits<double>::quiet_NaN()
                                 : e.at("value").get<double>()});
  }
  report.retained = j.at("retained").get<std::vector<std::string>>();
  report.train_imputation = FillFromJson(j.at("imputation").at("train"));
  report.test_imputation = FillFromJson(j.at("imputation").at("test"));
  report.encoders = j.at("encoders").get<EncoderMap>();
  report.train_source_ids =
      j.at("source_row_ids").at("train").get<std::vector<int64_t>>();
  report.test_source_ids =
      j.at("source_row_ids").at("test").get<std::vector<int64_t>>();
  return report;
}

FeatureTable AdjustGcs(FeatureTable table) {
  const auto unable = table.Find(kGcsUnable);
  const auto motor = table.Find(kGcsMotor);
  const auto verbal = table.Find(kGcsVerbal);
  const auto eyes = table.Find(kGcsEyes);
  if (!unable || !motor || !verbal || !eyes) return table;
  for (size_t r = 0; r < table.num_rows(); ++r) {
    const auto flag = CellAsNumber(table.columns[*unable], r);
    if (!flag || *flag != 1.0) continue;
    SetZero(table.columns[*motor], r);
    SetZero(table.columns[*verbal], r);
    SetZero(table.columns[*eyes], r);
  }
  return table;
}

FeatureTable CompleteCategories(FeatureTable table,
                                std::span<const std::string> column_names,
                                const std::string& sentinel) {
  for (const auto& name : column_names) {
    const auto index = table.Find(name);
    if (!index) continue;
    Column& column = table.columns[*index];
    if (column.kind != ColumnKind::kCategorical) {
      throw Error(ErrorCode::kConfig,
                  "category completion on non-categorical column '" + name + "'");
    }
    for (size_t r = 0; r < column.size(); ++r) {
      if (column.IsMissing(r)) {
        column.categories[r] = sentinel;
        column.missing[r] = 0;
      }
    }
  }
  return table;
}

std::string IndicatorName(const std::string& column) {
  return column + "_missing";
}

FeatureTable AddMissingnessIndicators(FeatureTable table) {
  std::set<std::string> names;
  for (const auto& column : table.columns) names.insert(column.name);
  std::vector<Column> indicators;
  for (const auto& column : table.columns) {
    if (column.kind == ColumnKind::kTarget) continue;
    const std::string name = IndicatorName(column.name);
    if (!names.insert(name).second) {
      throw Error(ErrorCode::kValidation,
                  "indicator column '" + name + "' collides with an existing column");
    }
    Column indicator = EmptyColumn(name, ColumnKind::kCategorical);
    indicator.missing.assign(column.size(), 0);
    indicator.categories.reserve(column.size());
    for (size_t r = 0; r < column.size(); ++r) {
      indicator.categories.push_back(column.IsMissing(r) ? "1" : "0");
    }
    indicators.push_back(std::move(indicator));
  }
  for (auto& indicator : indicators) table.columns.push_back(std::move(indicator));
  return table;
}

std::pair<FeatureTable, FeatureTable> StratifiedSplit(const FeatureTable& table,
                                                      double split_ratio,
                                                      uint64_t seed) {
  const std::vector<int> labels = table.Labels();
  const auto positives = std::count(labels.begin(), labels.end(), 1);
  if (positives == 0 || static_cast<size_t>(positives) == labels.size()) {
    throw Error(ErrorCode::kStratification,
                "stratified split needs both target classes");
  }
  if (labels.size() < 4) {
    throw Error(ErrorCode::kStratification,
                "stratified split needs at least 4 rows");
  }
  const IndexSplit split = StratifiedIndexSplit(labels, split_ratio, seed);
  return {table.SelectRows(split.first), table.SelectRows(split.second)};
}

std::vector<Exclusion> ExcludeByMissingness(FeatureTable& train,
                                            FeatureTable& test,
                                            double threshold,
                                            std::map<std::string, double>* rates) {
  std::vector<Exclusion> excluded;
  std::vector<std::string> names;
  const auto n = static_cast<double>(train.num_rows());
  for (const auto& column : train.columns) {
    if (column.kind == ColumnKind::kTarget) continue;
    const double rate =
        n > 0 ? static_cast<double>(column.CountMissing()) / n : 0.0;
    if (rates != nullptr) (*rates)[column.name] = rate;
    if (rate > threshold) {
      excluded.push_back({column.name, kReasonMissingRate, rate});
      names.push_back(column.name);
    }
  }
  train.RemoveColumns(names);
  test.RemoveColumns(names);
  return excluded;
}

std::vector<Exclusion> SelectByAssociation(
    FeatureTable& train, FeatureTable& test, double alpha,
    std::vector<AssociationEntry>* entries) {
  const std::vector<int> labels = train.Labels();
  if (std::count(labels.begin(), labels.end(), 1) == 0 ||
      std::count(labels.begin(), labels.end(), 0) == 0) {
    throw Error(ErrorCode::kValidation,
                "association test needs both classes in train");
  }
  constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
  std::vector<Exclusion> excluded;
  std::vector<std::string> names;
  for (const auto& column : train.columns) {
    if (column.kind == ColumnKind::kTarget) continue;
    AssociationEntry entry;
    entry.column = column.name;
    bool constant = false;
    if (column.kind == ColumnKind::kCategorical) {
      entry.test = "chi_squared";
      std::vector<std::string> values;
      std::vector<int> y;
      for (size_t r = 0; r < column.size(); ++r) {
        if (column.IsMissing(r)) continue;
        values.push_back(column.categories[r]);
        y.push_back(labels[r]);
      }
      const auto result = stats::ChiSquaredTest(values, y);
      if (!result) {
        constant = true;
      } else {
        entry.statistic = result->statistic;
        entry.p_value = result->p_value;
        entry.low_expected_count = result->low_expected_count;
      }
    } else {
      entry.test = "mann_whitney";
      std::vector<double> negatives;
      std::vector<double> positives;
      std::set<double> distinct;
      for (size_t r = 0; r < column.size(); ++r) {
        if (column.IsMissing(r)) continue;
        (labels[r] ? positives : negatives).push_back(column.numbers[r]);
        distinct.insert(column.numbers[r]);
      }
      if (distinct.size() < 2 || negatives.empty() || positives.empty()) {
        constant = true;
      } else {
        const auto result = stats::MannWhitneyU(negatives, positives);
        entry.statistic = result.u;
        entry.p_value = result.p_value;
      }
    }
    if (constant) {
      excluded.push_back({column.name, kReasonConstant, kNaN});
      names.push_back(column.name);
      continue;
    }
    if (entries != nullptr) entries->push_back(entry);
    if (!(entry.p_value < alpha)) {
      excluded.push_back({column.name, kReasonAssociation, entry.p_value});
      names.push_back(column.name);
    }
  }
  train.RemoveColumns(names);
  test.RemoveColumns(names);
  return excluded;
}

FillValue ComputeFill(const Column& column) {
  FillValue fill;
  if (column.kind == ColumnKind::kCategorical) {
    std::map<std::string, size_t> counts;
    for (size_t r = 0; r < column.size(); ++r) {
      if (!column.IsMissing(r)) ++counts[column.categories[r]];
    }
    if (counts.empty()) {
      throw Error(ErrorCode::kImputation,
                  "column '" + column.name + "' has no observed values");
    }
    // std::map iterates in lexicographic order, so the first maximum wins.
    size_t best = 0;
    for (const auto& [value, count] : counts) {
      if (count > best) {
        best = count;
        fill.category = value;
      }
    }
    return fill;
  }
  std::vector<double> observed;
  for (size_t r = 0; r < column.size(); ++r) {
    if (!column.IsMissing(r)) observed.push_back(column.numbers[r]);
  }
  if (observed.empty()) {
    throw Error(ErrorCode::kImputation,
                "column '" + column.name + "' has no observed values");
  }
  std::sort(observed.begin(), observed.end());
  const size_t mid = observed.size() / 2;
  fill.number = observed.size() % 2 == 1
                    ? observed[mid]
                    : 0.5 * (observed[mid - 1] + observed[mid]);
  return fill;
}

namespace {

ImputationValues ImputeSplit(FeatureTable& table) {
  ImputationValues values;
  for (auto& column : table.columns) {
    if (column.kind == ColumnKind::kTarget) continue;
    const FillValue fill = ComputeFill(column);
    for (size_t r = 0; r < column.size(); ++r) {
      if (!column.IsMissing(r)) continue;
      if (column.kind == ColumnKind::kCategorical) {
        column.categories[r] = fill.category;
      } else {
        column.numbers[r] = fill.number;
      }
      column.missing[r] = 0;
    }
    values[column.name] = fill;
  }
  return values;
}

}  // namespace

std::pair<ImputationValues, ImputationValues> Impute(FeatureTable& train,
                                                     FeatureTable& test) {
  ImputationValues train_values = ImputeSplit(train);
  ImputationValues test_values =
      test.num_rows() > 0 ? ImputeSplit(test) : ImputationValues{};
  return {std::move(train_values), std::move(test_values)};
}

EncoderMap OrdinalEncode(FeatureTable& train, FeatureTable& test) {
  EncoderMap encoders;
  for (auto& column : train.columns) {
    if (column.kind != ColumnKind::kCategorical) continue;
    std::set<std::string> categories;
    for (size_t r = 0; r < column.size(); ++r) {
      if (!column.IsMissing(r)) categories.insert(column.categories[r]);
    }
    auto& mapping = encoders[column.name];
    int code = 0;
    for (const auto& category : categories) mapping[category] = code++;
  }
  auto apply = [&](FeatureTable& table) {
    for (auto& column : table.columns) {
      const auto it = encoders.find(column.name);
      if (it == encoders.end()) continue;
      const auto& mapping = it->second;
      const int unseen = static_cast<int>(mapping.size());
      column.numbers.resize(column.size());
      for (size_t r = 0; r < column.size(); ++r) {
        if (column.IsMissing(r)) {
          column.numbers[r] = 0.0;
          continue;
        }
        const auto code = mapping.find(column.categories[r]);
        column.numbers[r] = code == mapping.end() ? unseen : code->second;
      }
      column.categories.clear();
      column.kind = ColumnKind::kContinuous;
    }
  };
  apply(train);
  apply(test);
  return encoders;
}

std::vector<int64_t> Reindex(FeatureTable& table) {
  std::vector<int64_t> previous = table.row_ids;
  for (size_t r = 0; r < table.row_ids.size(); ++r) {
    table.row_ids[r] = static_cast<int64_t>(r);
  }
  return previous;
}

json FittedPreprocessorToJson(const FittedPreprocessor& fitted) {
  std::vector<std::string> kinds;
  for (const auto kind : fitted.feature_kinds) kinds.push_back(ColumnKindName(kind));
  json imputation = json::object();
  for (size_t j = 0; j < fitted.feature_names.size(); ++j) {
    const auto& name = fitted.feature_names[j];
    const auto& fill = fitted.train_imputation.at(name);
    if (fitted.feature_kinds[j] == ColumnKind::kCategorical) {
      imputation[name] = fill.category;
    } else {
      imputation[name] = fill.number;
    }
  }
  return {{"raw_schema", SchemaToJson(fitted.raw_schema)},
          {"config", PreprocessConfigToJson(fitted.config)},
          {"feature_names", fitted.feature_names},
          {"feature_kinds", kinds},
          {"train_imputation", imputation},
          {"encoders", fitted.encoders}};
}

FittedPreprocessor FittedPreprocessorFromJson(const json& j) {
  FittedPreprocessor fitted;
  fitted.raw_schema = SchemaFromJson(j.at("raw_schema"));
  fitted.config = PreprocessConfigFromJson(j.at("config"));
  fitted.feature_names = j.at("feature_names").get<std::vector<std::string>>();
  for (const auto& kind : j.at("feature_kinds")) {
    fitted.feature_kinds.push_back(ColumnKindFromName(kind.get<std::string>()));
  }
  fitted.train_imputation = FillFromJson(j.at("train_imputation"));
  fitted.encoders = j.at("encoders").get<EncoderMap>();
  return fitted;
}

namespace {

// Config drops and row filters. Returns the number of filtered rows.
size_t ApplyConfigFilters(FeatureTable& table, const PreprocessConfig& config) {
  for (const auto& name : config.drop_columns) {
    if (!table.Find(name)) {
      throw Error(ErrorCode::kConfig, "drop column '" + name + "' not in table");
    }
    if (table.at(name).kind == ColumnKind::kTarget) {
      throw Error(ErrorCode::kConfig, "cannot drop the target column");
    }
  }
  table.RemoveColumns(config.drop_columns);
  std::vector<size_t> keep;
  for (size_t r = 0; r < table.num_rows(); ++r) {
    bool excluded = false;
    for (const auto& filter : config.row_filters) {
      const auto index = table.Find(filter.column);
      if (!index) {
        throw Error(ErrorCode::kConfig,
                    "row filter column '" + filter.column + "' not in table");
      }
      const auto value = CellAsNumber(table.columns[*index], r);
      if (value && Matches(filter.comparator, *value, filter.constant)) {
        excluded = true;
        break;
      }
    }
    if (!excluded) keep.push_back(r);
  }
  const size_t filtered = table.num_rows() - keep.size();
  if (filtered > 0) table = table.SelectRows(keep);
  return filtered;
}

// Steps 1 to 3, shared by the training pipeline and row scoring.
FeatureTable RowLevelSteps(FeatureTable table, const PreprocessConfig& config) {
  if (config.gcs_rule_enabled) table = AdjustGcs(std::move(table));
  table = CompleteCategories(std::move(table), config.category_fill_columns,
                             config.sentinel_category);
  return AddMissingnessIndicators(std::move(table));
}

}  // namespace

PreprocessResult Preprocess(const FeatureTable& raw,
                            const PreprocessConfig& config) {
  config.Validate();
  raw.Validate();
  PreprocessResult result;
  PreprocessReport& report = result.report;

  FeatureTable table = raw;
  report.rows_filtered = ApplyConfigFilters(table, config);
  constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
  for (const auto& name : config.drop_columns) {
    report.input_columns.push_back(name);
    report.excluded.push_back({name, kReasonConfigDrop, kNaN});
  }

  table = RowLevelSteps(std::move(table), config);
  for (const auto& name : table.FeatureNames()) report.input_columns.push_back(name);

  auto [train, test] = StratifiedSplit(table, config.split_ratio, config.seed);
  for (auto& e : ExcludeByMissingness(train, test, config.missing_rate_threshold,
                                      &report.missing_rates)) {
    report.excluded.push_back(std::move(e));
  }
  for (auto& e : SelectByAssociation(train, test, config.alpha,
                                     &report.associations)) {
    report.excluded.push_back(std::move(e));
  }

  FittedPreprocessor& fitted = result.fitted;
  fitted.raw_schema = raw.schema();
  fitted.config = config;
  for (const auto& column : train.columns) {
    if (column.kind == ColumnKind::kTarget) continue;
    fitted.feature_names.push_back(column.name);
    fitted.feature_kinds.push_back(column.kind);
  }
  report.retained = fitted.feature_names;

  std::tie(report.train_imputation, report.test_imputation) = Impute(train, test);
  report.encoders = OrdinalEncode(train, test);
  report.train_source_ids = Reindex(train);
  report.test_source_ids = Reindex(test);

  fitted.train_imputation = report.train_imputation;
  fitted.encoders = report.encoders;
  result.train = std::move(train);
  result.test = std::move(test);
  return result;
}

Matrix TransformRows(const FittedPreprocessor& fitted, const FeatureTable& raw) {
  FeatureTable table = raw;
  table.RemoveColumns(fitted.config.drop_columns);
  table = RowLevelSteps(std::move(table), fitted.config);

  Matrix out(table.num_rows(), fitted.feature_names.size());
  for (size_t j = 0; j < fitted.feature_names.size(); ++j) {
    const std::string& name = fitted.feature_names[j];
    const auto index = table.Find(name);
    if (!index) {
      throw Error(ErrorCode::kSchema, "row lacks feature column '" + name + "'");
    }
    const Column& column = table.columns[*index];
    if (column.kind != fitted.feature_kinds[j]) {
      throw Error(ErrorCode::kSchema, "column '" + name + "' has the wrong kind");
    }
    const FillValue& fill = fitted.train_imputation.at(name);
    for (size_t r = 0; r < table.num_rows(); ++r) {
      if (column.kind == ColumnKind::kCategorical) {
        const std::string& value =
            column.IsMissing(r) ? fill.category : column.categories[r];
        const auto& mapping = fitted.encoders.at(name);
        const auto code = mapping.find(value);
        out(r, j) = code == mapping.end() ? static_cast<double>(mapping.size())
                                          : code->second;
      } else {
        out(r, j) = column.IsMissing(r) ? fill.number : column.numbers[r];
      }
    }
  }
  return out;
}

void SyntheticSpec::Validate() const {
  if (n_rows < 4 || n_features < 1 || n_planted_subgroups < 1) {
    throw Error(ErrorCode::kConfig,
                "synthetic spec needs n_rows >= 4, n_features >= 1 and at "
                "least one subgroup");
  }
  if (coefficients.size() != n_planted_subgroups ||
      prevalence.size() != n_planted_subgroups) {
    throw Error(ErrorCode::kConfig,
                "one coefficient vector and prevalence per subgroup required");
  }
  for (const auto& beta : coefficients) {
    if (beta.size() != n_features) {
      throw Error(ErrorCode::kConfig, "coefficient vector has wrong length");
    }
  }
  for (size_t a = 0; a < coefficients.size(); ++a) {
    for (size_t b = a + 1; b < coefficients.size(); ++b) {
      if (coefficients[a] == coefficients[b]) {
        throw Error(ErrorCode::kConfig,
                    "subgroup coefficient vectors must differ");
      }
    }
  }
  for (const double p : prevalence) {
    if (!(p > 0.0 && p < 1.0)) {
      throw Error(ErrorCode::kConfig, "prevalence targets must be in (0, 1)");
    }
  }
  if (!feature_means.empty()) {
    if (feature_means.size() != n_planted_subgroups) {
      throw Error(ErrorCode::kConfig, "one mean vector per subgroup required");
    }
    for (const auto& mean : feature_means) {
      if (mean.size() != n_features) {
        throw Error(ErrorCode::kConfig, "mean vector has wrong length");
      }
    }
  }
  if (!weights.empty()) {
    if (weights.size() != n_planted_subgroups) {
      throw Error(ErrorCode::kConfig, "one weight per subgroup required");
    }
    for (const double w : weights) {
      if (!(w > 0.0)) throw Error(ErrorCode::kConfig, "weights must be positive");
    }
  }
  if (!(missing_rate >= 0.0 && missing_rate < 1.0)) {
    throw Error(ErrorCode::kConfig, "missing_rate must be in [0, 1)");
  }
}

namespace {

std::string MechanismName(MissingMechanism m) {
  switch (m) {
    case MissingMechanism::kNone:
      return "none";
    case MissingMechanism::kRandom:
      return "random";
    case MissingMechanism::kOutcomeLinked:
      return "outcome_linked";
  }
  return "none";
}

MissingMechanism MechanismFromName(const std::string& name) {
  if (name == "none") return MissingMechanism::kNone;
  if (name == "random") return MissingMechanism::kRandom;
  if (name == "outcome_linked") return MissingMechanism::kOutcomeLinked;
  throw Error(ErrorCode::kConfig, "unknown missingness mechanism '" + name + "'");
}

}  // namespace

SyntheticSpec SyntheticSpecFromJson(const json& j) {
  SyntheticSpec spec;
  spec.n_rows = j.value("n_rows", spec.n_rows);
  spec.n_features = j.value("n_features", spec.n_features);
  spec.n_planted_subgroups = j.value("n_planted_subgroups", spec.n_planted_subgroups);
  spec.coefficients =
      j.at("coefficients").get<std::vector<std::vector<double>>>();
  spec.prevalence = j.at("prevalence").get<std::vector<double>>();
  if (j.contains("feature_means")) {
    spec.feature_means =
        j["feature_means"].get<std::vector<std::vector<double>>>();
  }
  if (j.contains("weights")) spec.weights = j["weights"].get<std::vector<double>>();
  spec.missingness = MechanismFromName(j.value("missingness", std::string("none")));
  spec.missing_rate = j.value("missing_rate", spec.missing_rate);
  spec.seed = j.value("seed", spec.seed);
  spec.target_name = j.value("target_name", spec.target_name);
  spec.Validate();
  return spec;
}

json SyntheticSpecToJson(const SyntheticSpec& spec) {
  json out = {{"n_rows", spec.n_rows},
              {"n_features", spec.n_features},
              {"n_planted_subgroups", spec.n_planted_subgroups},
              {"coefficients", spec.coefficients},
              {"prevalence", spec.prevalence},
              {"missingness", MechanismName(spec.missingness)},
              {"missing_rate", spec.missing_rate},
              {"seed", spec.seed},
              {"target_name", spec.target_name}};
  if (!spec.feature_means.empty()) out["feature_means"] = spec.feature_means;
  if (!spec.weights.empty()) out["weights"] = spec.weights;
  return out;
}

SyntheticCohort GenerateSynthetic(const SyntheticSpec& spec) {
  spec.Validate();
  const size_t n = spec.n_rows;
  const size_t d = spec.n_features;
  const size_t groups = spec.n_planted_subgroups;
  Rng rng(spec.seed);

  std::vector<double> cumulative(groups);
  double total_weight = 0.0;
  for (size_t g = 0; g < groups; ++g) {
    total_weight += spec.weights.empty() ? 1.0 : spec.weights[g];
    cumulative[g] = total_weight;
  }

  SyntheticCohort cohort;
  cohort.planted.resize(n);
  Matrix x(n, d);
  for (size_t i = 0; i < n; ++i) {
    const double u = rng.Uniform() * total_weight;
    size_t g = 0;
    while (g + 1 < groups && u >= cumulative[g]) ++g;
    cohort.planted[i] = static_cast<int>(g);
    for (size_t j = 0; j < d; ++j) {
      const double mean = spec.feature_means.empty() ? 0.0 : spec.feature_means[g][j];
      x(i, j) = mean + rng.Normal();
    }
  }

  // Linear scores, then a per-subgroup intercept solved by bisection so the
  // mean outcome probability hits the prevalence target.
  std::vector<double> score(n, 0.0);
  for (size_t i = 0; i < n; ++i) {
    const auto& beta = spec.coefficients[cohort.planted[i]];
    for (size_t j = 0; j < d; ++j) score[i] += beta[j] * x(i, j);
  }
  cohort.intercepts.assign(groups, 0.0);
  for (size_t g = 0; g < groups; ++g) {
    std::vector<double> members;
    for (size_t i = 0; i < n; ++i) {
      if (cohort.planted[i] == static_cast<int>(g)) members.push_back(score[i]);
    }
    if (members.empty()) {
      cohort.warnings.push_back("subgroup " + std::to_string(g) + " drew no rows");
      continue;
    }
    auto mean_probability = [&](double intercept) {
      double sum = 0.0;
      for (const double s : members) sum += Sigmoid(intercept + s);
      return sum / static_cast<double>(members.size());
    };
    double lo = -50.0;
    double hi = 50.0;
    for (int iter = 0; iter < 200; ++iter) {
      const double mid = 0.5 * (lo + hi);
      (mean_probability(mid) < spec.prevalence[g] ? lo : hi) = mid;
    }
    cohort.intercepts[g] = 0.5 * (lo + hi);
    const double reached = mean_probability(cohort.intercepts[g]);
    if (std::abs(reached - spec.prevalence[g]) > 0.01) {
      cohort.warnings.push_back("subgroup " + std::to_string(g) +
                                " prevalence target infeasible, reached " +
                                FormatNumber(reached));
    }
  }

  std::vector<int> y(n);
  for (size_t i = 0; i < n; ++i) {
    const double p = Sigmoid(cohort.intercepts[cohort.planted[i]] + score[i]);
    y[i] = rng.Uniform() < p ? 1 : 0;
  }

  FeatureTable& table = cohort.table;
  for (size_t j = 0; j < d; ++j) {
    Column column = EmptyColumn("x" + std::to_string(j), ColumnKind::kContinuous);
    column.numbers.resize(n);
    column.missing.assign(n, 0);
    for (size_t i = 0; i < n; ++i) column.numbers[i] = x(i, j);
    table.columns.push_back(std::move(column));
  }
  if (spec.missingness != MissingMechanism::kNone) {
    for (size_t i = 0; i < n; ++i) {
      double rate = spec.missing_rate;
      if (spec.missingness == MissingMechanism::kOutcomeLinked) {
        rate *= y[i] ? 1.5 : 0.5;
      }
      for (size_t j = 0; j < d; ++j) {
        if (rng.Uniform() < rate) {
          table.columns[j].missing[i] = 1;
          table.columns[j].numbers[i] = 0.0;
        }
      }
    }
  }
  Column target = EmptyColumn(spec.target_name, ColumnKind::kTarget);
  target.missing.assign(n, 0);
  for (size_t i = 0; i < n; ++i) target.numbers.push_back(y[i]);
  table.columns.push_back(std::move(target));
  for (size_t i = 0; i < n; ++i) table.row_ids.push_back(static_cast<int64_t>(i));
  cohort.schema = table.schema();
  return cohort;
}

}  // namespace adapthetero::tabular
