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

#include "adapthetero/pipeline.h"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "adapthetero/attribution.h"
#include "adapthetero/stats.h"

namespace adapthetero::pipeline {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;
using tabular::Column;
using tabular::ColumnKind;
using tabular::FeatureTable;

constexpr char kReportFile[] = "report.json";
constexpr char kPlotsDir[] = "plots/";
constexpr size_t kRankingSize = 5;
const std::vector<std::string> kSides = {"A", "B"};

// ---------------------------------------------------------------- file i/o

std::string ReadText(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open '" + path.string() + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

json ReadJson(const fs::path& path) {
  const std::string text = ReadText(path);
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, "'" + path.string() + "': " + e.what());
  }
}

void WriteText(const fs::path& path, const std::string& content) {
  std::error_code ec;
  fs::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write '" + path.string() + "'");
  out << content;
  if (!out) throw Error(ErrorCode::kIo, "write failed for '" + path.string() + "'");
}

void WriteJson(const fs::path& path, const json& value) {
  WriteText(path, value.dump(2) + "\n");
}

double NumberOr(const json& value, double fallback) {
  return value.is_number() ? value.get<double>() : fallback;
}

// ---------------------------------------------------------- numeric tables

Column NumericColumn(const std::string& name, std::vector<double> values) {
  Column column;
  column.name = name;
  column.kind = ColumnKind::kContinuous;
  column.missing.assign(values.size(), 0);
  column.numbers = std::move(values);
  return column;
}

Column TextColumn(const std::string& name, std::vector<std::string> values) {
  Column column;
  column.name = name;
  column.kind = ColumnKind::kCategorical;
  column.missing.assign(values.size(), 0);
  column.categories = std::move(values);
  return column;
}

std::vector<double> Sequence(size_t n) {
  std::vector<double> out(n);
  std::iota(out.begin(), out.end(), 0.0);
  return out;
}

std::string TableCsv(std::vector<Column> columns) {
  FeatureTable table;
  const size_t n = columns.empty() ? 0 : columns.front().size();
  table.columns = std::move(columns);
  table.row_ids.resize(n);
  std::iota(table.row_ids.begin(), table.row_ids.end(), 0);
  return tabular::ToCsv(table);
}

// row_id column followed by one column per matrix column.
std::string MatrixCsv(const std::vector<double>& row_ids,
                      const std::vector<std::string>& names, const Matrix& m) {
  std::vector<Column> columns{NumericColumn("row_id", row_ids)};
  for (size_t j = 0; j < m.cols(); ++j) {
    std::vector<double> values(m.rows());
    for (size_t r = 0; r < m.rows(); ++r) values[r] = m(r, j);
    columns.push_back(NumericColumn(names[j], std::move(values)));
  }
  return TableCsv(std::move(columns));
}

// Reads the columns `wanted` (default: all) of a numeric CSV whose header
// holds exactly `header`.
Matrix ReadMatrixCsv(const fs::path& path, const std::vector<std::string>& header,
                     std::vector<std::string> wanted = {}) {
  if (wanted.empty()) wanted = header;
  tabular::Schema schema;
  for (const auto& name : header) schema.push_back({name, ColumnKind::kContinuous});
  const FeatureTable table = tabular::ParseCsv(ReadText(path), schema, false);
  Matrix out(table.num_rows(), wanted.size());
  for (size_t j = 0; j < wanted.size(); ++j) {
    const Column& column = table.at(wanted[j]);
    for (size_t r = 0; r < table.num_rows(); ++r) {
      if (column.IsMissing(r)) {
        throw Error(ErrorCode::kParse, "'" + path.string() + "' has an empty cell");
      }
      out(r, j) = column.numbers[r];
    }
  }
  return out;
}

std::vector<std::string> WithRowId(std::vector<std::string> names) {
  names.insert(names.begin(), "row_id");
  return names;
}

const std::vector<std::string> kCoordsHeader = {"row_id", "x", "y"};
const std::vector<std::string> kLabelsHeader = {"row_id", "label", "strength"};
const std::vector<std::string> kScoresHeader = {"row_id", "label", "probability"};

std::vector<double> ColumnOf(const Matrix& m, size_t j) {
  std::vector<double> out(m.rows());
  for (size_t r = 0; r < m.rows(); ++r) out[r] = m(r, j);
  return out;
}

std::vector<int> IntColumn(const Matrix& m, size_t j) {
  std::vector<int> out(m.rows());
  for (size_t r = 0; r < m.rows(); ++r) out[r] = static_cast<int>(m(r, j));
  return out;
}

std::string CoordsCsv(const Matrix& coords) {
  return MatrixCsv(Sequence(coords.rows()), {"x", "y"}, coords);
}

std::string LabelsCsv(const clustering::ClusterAssignment& a) {
  std::vector<double> labels(a.labels.begin(), a.labels.end());
  return TableCsv({NumericColumn("row_id", Sequence(labels.size())),
                   NumericColumn("label", labels),
                   NumericColumn("strength", a.strength)});
}

std::string ScoresCsv(const std::vector<double>& row_ids, std::span<const int> y,
                      std::span<const double> p) {
  return TableCsv({NumericColumn("row_id", row_ids),
                   NumericColumn("label", std::vector<double>(y.begin(), y.end())),
                   NumericColumn("probability", std::vector<double>(p.begin(), p.end()))});
}

// ------------------------------------------------------------ report parts

json RankingToJson(const stats::FeatureRanking& ranking) {
  json out = json::array();
  for (const auto& f : ranking.features) {
    out.push_back({{"feature", f.name}, {"index", f.index}, {"mean_abs_shap", f.score}});
  }
  return out;
}

json RankComparisonToJson(const stats::RankComparison& c) {
  json shared = json::array();
  for (const auto& d : c.shared) {
    shared.push_back({{"feature", d.name},
                      {"rank_first", d.rank_first},
                      {"rank_second", d.rank_second},
                      {"delta", d.delta}});
  }
  return {{"jaccard", c.jaccard}, {"shared", shared}};
}

json ComparisonToJson(const std::string& first, const std::string& second,
                      const std::string& metric, const stats::ComparisonResult& r,
                      double median_first, double median_second) {
  return {{"pair", {first, second}},
          {"metric", metric},
          {"u", r.u},
          {"p_value", r.p_value},
          {"stars", r.stars},
          {"n", {r.n_a, r.n_b}},
          {"exact", r.exact},
          {"medians", {median_first, median_second}}};
}

stats::FeatureRanking Ranking(const Matrix& shap, const std::vector<std::string>& names) {
  return stats::TopFeatures(shap, names, std::min(kRankingSize, names.size()));
}

// Comparison pairs of the report, given which bundles exist.
std::vector<std::pair<std::string, std::string>> ComparisonPairs(const json& metrics) {
  std::vector<std::pair<std::string, std::string>> pairs;
  for (const auto& side : kSides) {
    if (metrics.contains(side)) pairs.emplace_back("All", side);
  }
  for (const auto& side : kSides) {
    if (metrics.contains(side) && metrics.contains(side + "-retrained")) {
      pairs.emplace_back(side, side + "-retrained");
    }
  }
  return pairs;
}

json Comparisons(const std::map<std::string, subgroups::SliceEvaluation>& bundles) {
  json metrics = json::object();
  for (const auto& [name, e] : bundles) {
    if (e.evaluable) metrics[name] = true;
  }
  json out = json::array();
  for (const auto& [first, second] : ComparisonPairs(metrics)) {
    const auto& a = bundles.at(first);
    const auto& b = bundles.at(second);
    out.push_back(ComparisonToJson(
        first, second, "auprc",
        stats::MannWhitneyU(a.auprc_samples.replicates, b.auprc_samples.replicates),
        a.auprc_samples.median, b.auprc_samples.median));
    out.push_back(ComparisonToJson(
        first, second, "log_loss",
        stats::MannWhitneyU(a.log_loss_samples.replicates, b.log_loss_samples.replicates),
        a.log_loss_samples.median, b.log_loss_samples.median));
  }
  return out;
}

std::vector<double> AsDoubles(const std::vector<size_t>& v) {
  return {v.begin(), v.end()};
}

uint64_t AllSeed(uint64_t bootstrap_seed) { return DeriveSeed(bootstrap_seed, "all"); }

}  // namespace

// ------------------------------------------------------------------ config

void RunConfig::Validate() const {
  const bool has_csv = !csv_path.empty();
  if (has_csv == synthetic.has_value()) {
    throw Error(ErrorCode::kConfig, "config needs exactly one input source");
  }
  if (has_csv && schema_path.empty()) {
    throw Error(ErrorCode::kConfig, "csv input needs a schema file");
  }
  if (synthetic) synthetic->Validate();
  preprocess.Validate();
  if (grid.empty()) throw Error(ErrorCode::kConfig, "hyperparameter grid is empty");
  for (const auto& hp : grid) hp.Validate();
  hdbscan.Validate();
  selection.Validate();
  if (propagate_k < 1) throw Error(ErrorCode::kConfig, "propagation k must be >= 1");
  if (bootstrap_replicates < 1) {
    throw Error(ErrorCode::kConfig, "bootstrap_replicates must be >= 1");
  }
  if (umap.n_neighbors < 2 || !(umap.min_dist > 0.0) || umap.n_epochs < 0 ||
      umap.negative_sample_rate < 1) {
    throw Error(ErrorCode::kConfig, "invalid umap settings");
  }
}

RunConfig RunConfigFromJson(const json& j, const std::string& base_dir) {
  RunConfig config;
  try {
    auto resolve = [&](const std::string& p) {
      if (p.empty() || base_dir.empty() || fs::path(p).is_absolute()) return p;
      return (fs::path(base_dir) / p).lexically_normal().string();
    };
    const json& input = j.at("input");
    if (input.contains("csv")) config.csv_path = resolve(input.at("csv").get<std::string>());
    if (input.contains("schema")) {
      config.schema_path = resolve(input.at("schema").get<std::string>());
    }
    if (input.contains("synthetic")) {
      config.synthetic = tabular::SyntheticSpecFromJson(input.at("synthetic"));
    }
    if (j.contains("preprocess")) {
      config.preprocess = tabular::PreprocessConfigFromJson(j.at("preprocess"));
    }
    if (j.contains("grid")) {
      config.grid.clear();
      for (const auto& hp : j.at("grid")) config.grid.push_back(gbdt::HyperparamsFromJson(hp));
    }
    if (j.contains("umap")) config.umap = embedding::UmapConfigFromJson(j.at("umap"));
    if (j.contains("hdbscan")) {
      config.hdbscan = clustering::HdbscanConfigFromJson(j.at("hdbscan"));
    }
    if (j.contains("propagation")) {
      config.propagate_k = j.at("propagation").value("k", config.propagate_k);
      config.noise_votes = j.at("propagation").value("noise_votes", config.noise_votes);
    }
    if (j.contains("include_noise") && !j.at("include_noise").is_null()) {
      config.include_noise = j.at("include_noise").get<bool>();
    }
    if (j.contains("selection")) {
      config.selection = subgroups::CriteriaFromJson(j.at("selection"));
    }
    config.bootstrap_replicates =
        j.value("bootstrap_replicates", config.bootstrap_replicates);
    config.seed = j.value("seed", config.seed);
    config.outdir = resolve(j.value("outdir", std::string()));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfig, std::string("malformed run config: ") + e.what());
  }
  config.Validate();
  return config;
}

json RunConfigToJson(const RunConfig& config) {
  json input;
  if (config.synthetic) {
    input["synthetic"] = tabular::SyntheticSpecToJson(*config.synthetic);
  } else {
    input["csv"] = fs::path(config.csv_path).filename().string();
    input["schema"] = fs::path(config.schema_path).filename().string();
  }
  json grid = json::array();
  for (const auto& hp : config.grid) grid.push_back(gbdt::HyperparamsToJson(hp));
  return {{"input", input},
          {"preprocess", tabular::PreprocessConfigToJson(config.preprocess)},
          {"grid", grid},
          {"umap", embedding::UmapConfigToJson(config.umap)},
          {"hdbscan", clustering::HdbscanConfigToJson(config.hdbscan)},
          {"propagation", {{"k", config.propagate_k}, {"noise_votes", config.noise_votes}}},
          {"include_noise",
           config.include_noise ? json(*config.include_noise) : json(nullptr)},
          {"selection", subgroups::CriteriaToJson(config.selection)},
          {"bootstrap_replicates", config.bootstrap_replicates},
          {"seed", config.seed}};
}

RunConfig ReadRunConfig(const std::string& path) {
  const json j = ReadJson(path);
  return RunConfigFromJson(j, fs::path(path).parent_path().string());
}

// ---------------------------------------------------------------- hashing

std::string Sha256Hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &length, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorCode::kIo, "SHA-256 computation failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < length; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xF]);
  }
  return out;
}

std::map<std::string, std::string> HashTree(const std::string& dir,
                                            const std::vector<std::string>& exclude) {
  std::map<std::string, std::string> out;
  if (!fs::is_directory(dir)) {
    throw Error(ErrorCode::kIo, "'" + dir + "' is not a directory");
  }
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string rel = fs::relative(entry.path(), dir).generic_string();
    const bool skip = std::any_of(exclude.begin(), exclude.end(), [&](const std::string& e) {
      return e.ends_with('/') ? rel.starts_with(e) : rel == e;
    });
    if (!skip) out[rel] = Sha256Hex(ReadText(entry.path()));
  }
  return out;
}

std::string DirectoryDigest(const std::string& dir) {
  std::string listing;
  for (const auto& [path, hash] : HashTree(dir)) listing += path + '\0' + hash + '\n';
  return Sha256Hex(listing);
}

// --------------------------------------------------------------------- run

RunOutcome RunPipeline(const RunConfig& config) {
  RunOutcome outcome;
  const fs::path out = config.outdir;
  json report;
  std::string stage = "config";
  try {
    config.Validate();
    if (config.outdir.empty()) throw Error(ErrorCode::kConfig, "no output directory");
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) throw Error(ErrorCode::kIo, "cannot create '" + out.string() + "'");
    report["config"] = RunConfigToJson(config);

    // Input.
    stage = "input";
    FeatureTable raw;
    if (config.synthetic) {
      const tabular::SyntheticCohort cohort = tabular::GenerateSynthetic(*config.synthetic);
      raw = cohort.table;
      std::vector<double> planted(cohort.planted.begin(), cohort.planted.end());
      WriteText(out / "preprocess" / "planted.csv",
                TableCsv({NumericColumn("source_row_id", Sequence(planted.size())),
                          NumericColumn("planted", planted)}));
      report["input"] = {{"source", "synthetic"},
                         {"rows", raw.num_rows()},
                         {"intercepts", cohort.intercepts},
                         {"warnings", cohort.warnings}};
    } else {
      const tabular::Schema schema = tabular::ReadSchema(config.schema_path);
      const std::string bytes = ReadText(config.csv_path);
      raw = tabular::ParseCsv(bytes, schema);
      raw.Validate();
      report["input"] = {{"source", "csv"},
                         {"rows", raw.num_rows()},
                         {"sha256", Sha256Hex(bytes)}};
    }

    // Steps 1-9.
    stage = "preprocess";
    tabular::PreprocessConfig pre = config.preprocess;
    pre.seed = DeriveSeed(config.seed, "split");
    const tabular::PreprocessResult prep = tabular::Preprocess(raw, pre);
    WriteJson(out / "preprocess" / "report.json", tabular::PreprocessReportToJson(prep.report));
    WriteJson(out / "preprocess" / "fitted.json", tabular::FittedPreprocessorToJson(prep.fitted));
    WriteText(out / "preprocess" / "train.csv", tabular::ToCsv(prep.train));
    WriteText(out / "preprocess" / "test.csv", tabular::ToCsv(prep.test));
    const std::vector<std::string>& features = prep.fitted.feature_names;
    if (features.empty()) throw Error(ErrorCode::kValidation, "no feature survived selection");
    const Matrix train_x = prep.train.ToMatrix();
    const Matrix test_x = prep.test.ToMatrix();
    const std::vector<int> train_y = prep.train.Labels();
    const std::vector<int> test_y = prep.test.Labels();
    report["preprocess"] = {{"train_rows", train_x.rows()},
                            {"test_rows", test_x.rows()},
                            {"rows_filtered", prep.report.rows_filtered},
                            {"retained", prep.report.retained},
                            {"excluded", prep.report.excluded.size()},
                            {"features", features}};

    // Global model.
    stage = "model";
    const gbdt::TunedModel global =
        gbdt::TuneAndFit(train_x, train_y, config.grid, DeriveSeed(config.seed, "global_model"));
    WriteJson(out / "model" / "global.json",
              {{"model", gbdt::EnsembleToJson(global.model)},
               {"hyperparams", gbdt::HyperparamsToJson(global.chosen)},
               {"feature_names", features}});
    WriteJson(out / "model" / "tuning.json", gbdt::TuningRecordToJson(global.record));
    const std::vector<double> test_p = gbdt::PredictProba(global.model, test_x);
    WriteText(out / "model" / "test_scores.csv",
              ScoresCsv(Sequence(test_y.size()), test_y, test_p));
    report["tuning"] = {{"chosen", gbdt::HyperparamsToJson(global.chosen)},
                        {"record", gbdt::TuningRecordToJson(global.record)}};

    // Attributions.
    stage = "shap";
    const auto train_shap = attribution::ComputeShap(global.model, train_x, features);
    const auto test_shap = attribution::ComputeShap(global.model, test_x, features);
    const auto shap_stats = attribution::StandardizeFit(train_shap.values);
    const Matrix train_z = attribution::StandardizeApply(train_shap.values, shap_stats);
    const Matrix test_z = attribution::StandardizeApply(test_shap.values, shap_stats);
    WriteText(out / "shap" / "train.csv",
              MatrixCsv(Sequence(train_x.rows()), features, train_shap.values));
    WriteText(out / "shap" / "test.csv",
              MatrixCsv(Sequence(test_x.rows()), features, test_shap.values));
    WriteJson(out / "shap" / "meta.json", {{"base_value", train_shap.base_value},
                                           {"feature_names", features},
                                           {"standardization", attribution::StatsToJson(shap_stats)}});

    // Embedding.
    stage = "embedding";
    embedding::UmapConfig umap = config.umap;
    umap.seed = DeriveSeed(config.seed, "umap");
    const embedding::Embedding2D fitted = embedding::FitEmbedding(train_z, umap);
    const size_t transform_k = static_cast<size_t>(umap.n_neighbors);
    const Matrix test_coords =
        embedding::TransformEmbedding(train_z, fitted.coords, test_z, transform_k);
    WriteText(out / "embedding" / "train.csv", CoordsCsv(fitted.coords));
    WriteText(out / "embedding" / "test.csv", CoordsCsv(test_coords));
    WriteJson(out / "embedding" / "meta.json",
              {{"config", embedding::UmapConfigToJson(umap)},
               {"curve", {{"a", fitted.curve.a}, {"b", fitted.curve.b}}},
               {"fitted_rows", fitted.fitted_rows},
               {"sigma_fallbacks", fitted.sigma_fallbacks},
               {"transform_k", transform_k}});

    // Clusters.
    stage = "clusters";
    const auto train_clusters = clustering::Hdbscan(fitted.coords, config.hdbscan);
    const auto test_clusters = clustering::KnnPropagate(
        fitted.coords, train_clusters.labels, test_coords,
        static_cast<size_t>(config.propagate_k), config.noise_votes);
    WriteText(out / "clusters" / "train.csv", LabelsCsv(train_clusters));
    WriteText(out / "clusters" / "test.csv", LabelsCsv(test_clusters));
    const auto counts =
        subgroups::CountClusters(train_clusters.labels, train_y, test_clusters.labels);
    json sizes = json::array();
    for (const auto& c : counts) {
      sizes.push_back({{"label", c.label},
                       {"train_rows", c.train_rows},
                       {"train_positives", c.train_positives},
                       {"test_rows", c.test_rows}});
    }
    const json cluster_summary = {{"num_clusters", train_clusters.num_clusters},
                                  {"sizes", sizes},
                                  {"propagate_k", config.propagate_k},
                                  {"noise_votes", config.noise_votes},
                                  {"hdbscan", clustering::HdbscanConfigToJson(config.hdbscan)}};
    WriteJson(out / "clusters" / "summary.json", cluster_summary);
    report["clusters"] = cluster_summary;

    // Combinations, selection and retraining.
    stage = "subgroups";
    const bool has_noise = std::count(train_clusters.labels.begin(),
                                      train_clusters.labels.end(), clustering::kNoise) > 0;
    const bool include_noise = config.include_noise.value_or(has_noise);
    const auto specs = subgroups::EnumerateSubgroups(train_clusters.num_clusters, include_noise);
    const uint64_t bootstrap_seed = DeriveSeed(config.seed, "bootstrap");
    const int replicates = config.bootstrap_replicates;
    const auto evaluations = subgroups::EvaluateCombinations(
        test_y, test_p, test_clusters.labels, specs, replicates, bootstrap_seed,
        subgroups::MeetsSizeCriteria(counts, specs, config.selection));
    json combinations = json::array();
    for (size_t i = 0; i < specs.size(); ++i) {
      combinations.push_back({{"spec", subgroups::SpecToJson(specs[i])},
                              {"evaluation", subgroups::EvaluationToJson(evaluations[i], false)}});
    }
    WriteJson(out / "subgroups" / "combinations.json",
              {{"include_noise", include_noise}, {"combinations", combinations}});
    const auto selection = subgroups::SelectSubgroups(counts, specs, evaluations, config.selection);
    WriteJson(out / "subgroups" / "selection.json", subgroups::SelectionToJson(selection));
    report["selection"] = subgroups::SelectionToJson(selection);
    report["combinations"] = specs.size();

    std::map<std::string, subgroups::SliceEvaluation> bundles;
    std::vector<size_t> all_rows(test_y.size());
    std::iota(all_rows.begin(), all_rows.end(), 0);
    bundles["All"] = subgroups::EvaluateSlice(test_y, test_p, all_rows, replicates,
                                              AllSeed(bootstrap_seed));
    json rankings;
    rankings["All"] = RankingToJson(Ranking(test_shap.values, features));
    json rank_comparisons = json::object();
    json runs = json::object();

    if (selection.selected) {
      std::map<std::string, stats::FeatureRanking> global_rank;
      for (const auto& side : kSides) {
        const auto& spec = side == "A" ? selection.a : selection.b;
        const size_t index = side == "A" ? selection.a_index : selection.b_index;
        bundles[side] = evaluations[index];
        const auto rows = subgroups::SliceRows(test_clusters.labels, spec);
        global_rank[side] = Ranking(test_shap.values.SelectRows(rows), features);
        rankings[side] = RankingToJson(global_rank[side]);

        const auto run = subgroups::RetrainSubgroup(
            train_x, train_y, train_clusters.labels, test_x, test_y, test_clusters.labels,
            spec, config.grid, features, DeriveSeed(config.seed, "retrain:" + side),
            replicates, subgroups::SliceSeed(bootstrap_seed, spec));
        const fs::path dir = out / "subgroups" / side;
        json run_json = {{"spec", subgroups::SpecToJson(spec)},
                         {"train_rows", run.train_rows},
                         {"test_rows", run.test_rows},
                         {"retrained", run.retrained},
                         {"failure", run.failure}};
        if (run.retrained) {
          run_json["tuning"] = gbdt::TuningRecordToJson(run.tuned.record);
          run_json["chosen"] = gbdt::HyperparamsToJson(run.tuned.chosen);
          WriteJson(dir / "model.json", {{"model", gbdt::EnsembleToJson(run.tuned.model)},
                                         {"hyperparams", gbdt::HyperparamsToJson(run.tuned.chosen)},
                                         {"feature_names", features}});
          std::vector<int> y;
          for (size_t r : run.test_rows) y.push_back(test_y[r]);
          WriteText(dir / "test_scores.csv", ScoresCsv(AsDoubles(run.test_rows), y, run.test_scores));
          WriteText(dir / "shap.csv", MatrixCsv(AsDoubles(run.test_rows), features, run.test_shap.values));
          if (run.evaluation.evaluable) bundles[side + "-retrained"] = run.evaluation;
          const auto retrained_rank = Ranking(run.test_shap.values, features);
          rankings[side + "-retrained"] = RankingToJson(retrained_rank);
          rank_comparisons[side + " vs " + side + "-retrained"] =
              RankComparisonToJson(stats::RankCompare(global_rank[side], retrained_rank));
        }
        WriteJson(dir / "run.json", run_json);
        runs[side] = run_json;
      }
      rank_comparisons["A vs B"] =
          RankComparisonToJson(stats::RankCompare(global_rank["A"], global_rank["B"]));
    }

    stage = "report";
    json metrics = json::object();
    for (const auto& [name, e] : bundles) metrics[name] = subgroups::EvaluationToJson(e, true);
    report["metrics"] = metrics;
    report["comparisons"] = Comparisons(bundles);
    report["rankings"] = rankings;
    report["rank_comparisons"] = rank_comparisons;
    report["runs"] = runs;
    report["bootstrap"] = {{"replicates", replicates}, {"seed", bootstrap_seed}};
    report["status"] = "ok";
    report["manifest"] = HashTree(out.string(), {kReportFile, kPlotsDir});
    WriteJson(out / kReportFile, report);
    outcome.ok = true;
  } catch (const Error& e) {
    outcome.code = e.code();
    outcome.message = e.what();
  } catch (const std::exception& e) {
    outcome.code = ErrorCode::kValidation;
    outcome.message = e.what();
  }
  if (!outcome.ok) {
    outcome.failed_stage = stage;
    report["status"] = "failed";
    report["failure"] = {{"stage", stage},
                         {"code", std::string(ErrorCodeName(outcome.code))},
                         {"message", outcome.message}};
    try {
      if (!config.outdir.empty() && fs::is_directory(out)) {
        report["manifest"] = HashTree(out.string(), {kReportFile, kPlotsDir});
        WriteJson(out / kReportFile, report);
      }
    } catch (const std::exception&) {
      // The failure is already reported to the caller.
    }
  }
  outcome.report = std::move(report);
  return outcome;
}

// ----------------------------------------------------------------- scoring

subgroups::ScoringArtifacts LoadScoringArtifacts(const std::string& artifacts_dir) {
  const fs::path dir = artifacts_dir;
  const json report = ReadJson(dir / kReportFile);
  if (report.value("status", "") != "ok") {
    throw Error(ErrorCode::kIo, "run in '" + artifacts_dir + "' did not complete");
  }
  subgroups::ScoringArtifacts a;
  const json global = ReadJson(dir / "model" / "global.json");
  a.global_model = gbdt::EnsembleFromJson(global.at("model"));
  const auto features = global.at("feature_names").get<std::vector<std::string>>();

  const json shap_meta = ReadJson(dir / "shap" / "meta.json");
  a.shap_stats = attribution::StatsFromJson(shap_meta.at("standardization"));
  const Matrix train_shap = ReadMatrixCsv(dir / "shap" / "train.csv", WithRowId(features), features);
  a.train_standardized = attribution::StandardizeApply(train_shap, a.shap_stats);
  a.train_coords = ReadMatrixCsv(dir / "embedding" / "train.csv", kCoordsHeader, {"x", "y"});
  a.transform_k = ReadJson(dir / "embedding" / "meta.json").at("transform_k").get<size_t>();
  a.train_labels = IntColumn(ReadMatrixCsv(dir / "clusters" / "train.csv", kLabelsHeader, {"label"}), 0);
  const json summary = ReadJson(dir / "clusters" / "summary.json");
  a.propagate_k = summary.at("propagate_k").get<size_t>();
  a.noise_votes = summary.at("noise_votes").get<bool>();

  auto uncertainty = [&](const std::string& bundle) {
    subgroups::Uncertainty u;
    const json& m = report.at("metrics").at(bundle);
    u.auprc_median = NumberOr(m.at("bootstrap").at("auprc").at("median"), NAN);
    u.auprc_iqr = NumberOr(m.at("bootstrap").at("auprc").at("iqr"), NAN);
    u.log_loss = NumberOr(m.at("log_loss"), NAN);
    return u;
  };
  a.global_uncertainty = uncertainty("All");
  const json selection = ReadJson(dir / "subgroups" / "selection.json");
  if (selection.at("selected").get<bool>()) {
    for (const auto& side : kSides) {
      subgroups::ServingSubgroup s;
      s.spec = subgroups::SpecFromJson(selection.at(side == "A" ? "a" : "b"));
      const json run = ReadJson(dir / "subgroups" / side / "run.json");
      const std::string retrained = side + "-retrained";
      s.has_model = run.at("retrained").get<bool>() &&
                    report.at("metrics").contains(retrained);
      if (s.has_model) {
        s.model = gbdt::EnsembleFromJson(
            ReadJson(dir / "subgroups" / side / "model.json").at("model"));
        s.uncertainty = uncertainty(retrained);
      } else {
        s.uncertainty = uncertainty(side);
      }
      a.subgroups.push_back(std::move(s));
    }
  }
  return a;
}

json ScoreRows(const std::string& artifacts_dir, const std::string& rows_csv) {
  const fs::path dir = artifacts_dir;
  const auto fitted =
      tabular::FittedPreprocessorFromJson(ReadJson(dir / "preprocess" / "fitted.json"));
  const auto artifacts = LoadScoringArtifacts(artifacts_dir);
  const FeatureTable rows = tabular::ParseCsv(ReadText(rows_csv), fitted.raw_schema, false);
  if (rows.num_rows() == 0) throw Error(ErrorCode::kParse, "no rows to score");
  const Matrix x = tabular::TransformRows(fitted, rows);
  json records = json::array();
  for (size_t r = 0; r < x.rows(); ++r) {
    json record = subgroups::ScoreRecordToJson(subgroups::ScoreNewPatient(artifacts, x.row(r)));
    record["row"] = r;
    records.push_back(std::move(record));
  }
  return records;
}

// ------------------------------------------------------------------- plots

std::vector<std::string> EmitPlots(const std::string& artifacts_dir) {
  const fs::path dir = artifacts_dir;
  const json report = ReadJson(dir / kReportFile);
  if (report.value("status", "") != "ok") {
    throw Error(ErrorCode::kIo, "run in '" + artifacts_dir + "' did not complete");
  }
  std::vector<std::string> written;

  std::vector<std::string> split;
  std::vector<double> row_id, x, y, label, strength;
  for (const std::string part : {"train", "test"}) {
    const Matrix coords = ReadMatrixCsv(dir / "embedding" / (part + ".csv"), kCoordsHeader);
    const Matrix labels =
        ReadMatrixCsv(dir / "clusters" / (part + ".csv"), kLabelsHeader);
    if (coords.rows() != labels.rows()) {
      throw Error(ErrorCode::kValidation, part + " embedding and labels differ in rows");
    }
    for (size_t r = 0; r < coords.rows(); ++r) {
      split.push_back(part);
      row_id.push_back(coords(r, 0));
      x.push_back(coords(r, 1));
      y.push_back(coords(r, 2));
      label.push_back(labels(r, 1));
      strength.push_back(labels(r, 2));
    }
  }
  const fs::path embedding_path = dir / "plots" / "embedding.csv";
  WriteText(embedding_path,
            TableCsv({TextColumn("split", split), NumericColumn("row_id", row_id),
                      NumericColumn("x", x), NumericColumn("y", y),
                      NumericColumn("label", label), NumericColumn("strength", strength)}));
  written.push_back(embedding_path.string());

  for (const auto& [slice, ranking] : report.at("rankings").items()) {
    std::vector<double> rank;
    std::vector<std::string> feature;
    std::vector<double> score;
    for (const auto& entry : ranking) {
      rank.push_back(static_cast<double>(rank.size() + 1));
      feature.push_back(entry.at("feature").get<std::string>());
      score.push_back(entry.at("mean_abs_shap").get<double>());
    }
    const fs::path path = dir / "plots" / "rankings" / (slice + ".csv");
    WriteText(path, TableCsv({NumericColumn("rank", rank), TextColumn("feature", feature),
                              NumericColumn("mean_abs_shap", score)}));
    written.push_back(path.string());
  }

  json medians = json::object();
  for (const auto& [name, m] : report.at("metrics").items()) {
    medians[name] = {{"auprc", m.at("bootstrap").at("auprc").at("median")},
                     {"log_loss", m.at("bootstrap").at("log_loss").at("median")}};
  }
  const fs::path comparisons_path = dir / "plots" / "comparisons.json";
  WriteJson(comparisons_path,
            {{"comparisons", report.at("comparisons")}, {"medians", medians}});
  written.push_back(comparisons_path.string());
  return written;
}

// ------------------------------------------------------------------ verify

std::vector<std::string> Verify(const std::string& artifacts_dir) {
  const fs::path dir = artifacts_dir;
  std::vector<std::string> problems;
  const json report = ReadJson(dir / kReportFile);
  if (report.value("status", "") != "ok") {
    problems.push_back("run did not complete");
    return problems;
  }

  // Hashes.
  const auto manifest = report.at("manifest").get<std::map<std::string, std::string>>();
  const auto actual = HashTree(artifacts_dir, {kReportFile, kPlotsDir});
  for (const auto& [path, hash] : manifest) {
    const auto it = actual.find(path);
    if (it == actual.end()) {
      problems.push_back("missing artifact " + path);
    } else if (it->second != hash) {
      problems.push_back("hash mismatch for " + path);
    }
  }
  for (const auto& [path, hash] : actual) {
    if (!manifest.count(path)) problems.push_back("unlisted artifact " + path);
  }

  auto close = [](double x, double y) {
    return std::abs(x - y) <= 1e-12 * std::max(1.0, std::abs(y));
  };
  const json& metrics = report.at("metrics");
  const int replicates = report.at("bootstrap").at("replicates").get<int>();
  const uint64_t bootstrap_seed = report.at("bootstrap").at("seed").get<uint64_t>();

  // Recomputes one bundle from per-row outputs.
  std::map<std::string, subgroups::SliceEvaluation> bundles;
  auto check = [&](const std::string& name, std::span<const int> y,
                   std::span<const double> p, uint64_t seed) {
    std::vector<size_t> rows(y.size());
    std::iota(rows.begin(), rows.end(), 0);
    const auto e = subgroups::EvaluateSlice(y, p, rows, replicates, seed);
    bundles[name] = e;
    if (!metrics.contains(name)) {
      problems.push_back("report lacks metrics for " + name);
      return;
    }
    const json& m = metrics.at(name);
    const json& boot = m.at("bootstrap");
    const bool same =
        close(e.auprc, m.at("auprc").get<double>()) &&
        close(e.log_loss, m.at("log_loss").get<double>()) &&
        close(e.auprc_samples.median, boot.at("auprc").at("median").get<double>()) &&
        close(e.auprc_samples.iqr, boot.at("auprc").at("iqr").get<double>()) &&
        close(e.log_loss_samples.median, boot.at("log_loss").at("median").get<double>()) &&
        e.auprc_samples.replicates ==
            boot.at("auprc").at("values").get<std::vector<double>>();
    if (!same) problems.push_back("metrics of " + name + " do not recompute");
  };

  try {
    const Matrix scores =
        ReadMatrixCsv(dir / "model" / "test_scores.csv", kScoresHeader);
    const std::vector<int> y = IntColumn(scores, 1);
    const std::vector<double> p = ColumnOf(scores, 2);
    check("All", y, p, AllSeed(bootstrap_seed));

    const std::vector<int> clusters =
        IntColumn(ReadMatrixCsv(dir / "clusters" / "test.csv", kLabelsHeader, {"label"}), 0);
    const json global = ReadJson(dir / "model" / "global.json");
    const auto features = global.at("feature_names").get<std::vector<std::string>>();
    const Matrix test_shap = ReadMatrixCsv(dir / "shap" / "test.csv", WithRowId(features), features);

    std::map<std::string, stats::FeatureRanking> recomputed;
    recomputed["All"] = Ranking(test_shap, features);
    const json selection = report.at("selection");
    if (selection.at("selected").get<bool>()) {
      for (const auto& side : kSides) {
        const auto spec = subgroups::SpecFromJson(selection.at(side == "A" ? "a" : "b"));
        const auto rows = subgroups::SliceRows(clusters, spec);
        std::vector<int> sy;
        std::vector<double> sp;
        for (size_t r : rows) {
          sy.push_back(y[r]);
          sp.push_back(p[r]);
        }
        check(side, sy, sp, subgroups::SliceSeed(bootstrap_seed, spec));
        recomputed[side] = Ranking(test_shap.SelectRows(rows), features);

        const fs::path run_dir = dir / "subgroups" / side;
        if (!fs::exists(run_dir / "test_scores.csv")) continue;
        const Matrix rs =
            ReadMatrixCsv(run_dir / "test_scores.csv", kScoresHeader);
        const std::vector<int> ry = IntColumn(rs, 1);
        if (std::count(ry.begin(), ry.end(), 1) > 0 &&
            std::count(ry.begin(), ry.end(), 0) > 0) {
          check(side + "-retrained", ry, ColumnOf(rs, 2),
                subgroups::SliceSeed(bootstrap_seed, spec));
        }
        recomputed[side + "-retrained"] =
            Ranking(ReadMatrixCsv(run_dir / "shap.csv", WithRowId(features), features), features);
      }
    }
    for (const auto& [name, ranking] : recomputed) {
      if (!report.at("rankings").contains(name) ||
          report.at("rankings").at(name) != RankingToJson(ranking)) {
        problems.push_back("ranking of " + name + " does not recompute");
      }
    }
    if (Comparisons(bundles) != report.at("comparisons")) {
      problems.push_back("comparisons do not recompute");
    }
  } catch (const Error& e) {
    problems.push_back(std::string("cannot recompute: ") + e.what());
  }
  return problems;
}

// ------------------------------------------------------------------- synth

std::vector<std::string> Synthesize(const tabular::SyntheticSpec& spec,
                                    const std::string& out_csv) {
  const tabular::SyntheticCohort cohort = tabular::GenerateSynthetic(spec);
  const fs::path path = out_csv;
  const fs::path stem = path.parent_path() / path.stem();
  WriteText(path, tabular::ToCsv(cohort.table));
  WriteJson(stem.string() + ".schema.json", tabular::SchemaToJson(cohort.schema));
  std::vector<double> planted(cohort.planted.begin(), cohort.planted.end());
  WriteText(stem.string() + ".planted.csv",
            TableCsv({NumericColumn("row_id", Sequence(planted.size())),
                      NumericColumn("planted", planted)}));
  return cohort.warnings;
}

}  // namespace adapthetero::pipeline
