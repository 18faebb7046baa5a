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

// End-to-end runs over an artifact directory:
//
//   preprocess/  report.json fitted.json train.csv test.csv [planted.csv]
//   model/       global.json tuning.json test_scores.csv
//   shap/        train.csv test.csv meta.json
//   embedding/   train.csv test.csv meta.json
//   clusters/    train.csv test.csv summary.json
//   subgroups/   combinations.json selection.json {A,B}/...
//   report.json
//
// Every stage seed is derived from the root seed, so the directory content is
// a function of the input bytes and the config.

#ifndef ADAPTHETERO_PIPELINE_H_
#define ADAPTHETERO_PIPELINE_H_

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "adapthetero/clustering.h"
#include "adapthetero/common.h"
#include "adapthetero/embedding.h"
#include "adapthetero/gbdt.h"
#include "adapthetero/subgroups.h"
#include "adapthetero/tabular.h"
#include "json.hpp"

namespace adapthetero::pipeline {

struct RunConfig {
  // Exactly one of (csv_path with schema_path) or synthetic.
  std::string csv_path;
  std::string schema_path;
  std::optional<tabular::SyntheticSpec> synthetic;

  tabular::PreprocessConfig preprocess;
  std::vector<gbdt::Hyperparams> grid = gbdt::DefaultGrid();
  embedding::UmapConfig umap;
  clustering::HdbscanConfig hdbscan;
  int propagate_k = 5;
  bool noise_votes = true;
  // Unset: the noise label joins the combinations when training has noise.
  std::optional<bool> include_noise;
  subgroups::SelectionCriteria selection;
  int bootstrap_replicates = 200;
  uint64_t seed = 0;
  std::string outdir;

  void Validate() const;
};

// Relative input paths are resolved against `base_dir`.
RunConfig RunConfigFromJson(const nlohmann::json& json,
                            const std::string& base_dir = "");
// The output directory is left out, so two runs differing only in where they
// write produce the same report.
nlohmann::json RunConfigToJson(const RunConfig& config);
RunConfig ReadRunConfig(const std::string& path);

struct RunOutcome {
  bool ok = false;
  std::string failed_stage;
  ErrorCode code = ErrorCode::kIo;
  std::string message;
  nlohmann::json report;
};

// Runs every stage and writes the artifact directory. Stage errors are caught:
// the partial artifacts stay, and report.json records the failing stage.
RunOutcome RunPipeline(const RunConfig& config);

// Scores every row of a CSV against a completed run. Rows are raw cohort rows;
// the target column may be absent.
nlohmann::json ScoreRows(const std::string& artifacts_dir,
                         const std::string& rows_csv);

// Loads what ScoreNewPatient needs from a completed run.
subgroups::ScoringArtifacts LoadScoringArtifacts(const std::string& artifacts_dir);

// Writes plots/embedding.csv, plots/rankings/<slice>.csv and
// plots/comparisons.json under the artifact directory. Returns written paths.
std::vector<std::string> EmitPlots(const std::string& artifacts_dir);

// Recomputes every hash, metric, comparison and ranking of report.json from
// the persisted per-row outputs. Returns the discrepancies found.
std::vector<std::string> Verify(const std::string& artifacts_dir);

// Writes the cohort to `out_csv`, its schema next to it as
// <stem>.schema.json and the planted subgroup of each row as
// <stem>.planted.csv. Returns generation warnings.
std::vector<std::string> Synthesize(const tabular::SyntheticSpec& spec,
                                    const std::string& out_csv);

std::string Sha256Hex(const std::string& bytes);

// Relative path to SHA-256 of every regular file under `dir`, skipping
// `exclude` entries (relative paths or directory prefixes ending in '/').
std::map<std::string, std::string> HashTree(
    const std::string& dir, const std::vector<std::string>& exclude = {});

// Single digest over HashTree(dir).
std::string DirectoryDigest(const std::string& dir);

}  // namespace adapthetero::pipeline

#endif  // ADAPTHETERO_PIPELINE_H_
