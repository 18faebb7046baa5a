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

// Command-line front end.
//
//   adapthetero run --config cfg.json --outdir DIR
//   adapthetero score --artifacts DIR --row row.csv
//   adapthetero emit-plots --artifacts DIR
//   adapthetero verify --artifacts DIR
//   adapthetero synth --spec spec.json --out data.csv
//
// Exit codes: 0 success, 1 stage failure, 2 input or config error.

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "adapthetero/pipeline.h"
#include "json.hpp"

namespace {

using adapthetero::Error;
using adapthetero::ErrorCode;
using json = nlohmann::json;
namespace pipeline = adapthetero::pipeline;

constexpr int kExitOk = 0;
constexpr int kExitStage = 1;
constexpr int kExitInput = 2;

int ExitFor(ErrorCode code) {
  return adapthetero::IsInputError(code) ? kExitInput : kExitStage;
}

json ReadJsonFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, "'" + path + "': " + e.what());
  }
}

int Run(const std::string& config_path, const std::string& outdir) {
  pipeline::RunConfig config = pipeline::ReadRunConfig(config_path);
  if (!outdir.empty()) config.outdir = outdir;
  const pipeline::RunOutcome outcome = pipeline::RunPipeline(config);
  if (!outcome.ok) {
    std::cerr << "stage '" << outcome.failed_stage << "' failed ("
              << adapthetero::ErrorCodeName(outcome.code) << "): " << outcome.message
              << "\n";
    return ExitFor(outcome.code);
  }
  const json& selection = outcome.report.at("selection");
  std::cerr << "clusters: " << outcome.report.at("clusters").at("num_clusters")
            << ", subgroups selected: " << (selection.at("selected").get<bool>() ? 2 : 0)
            << "\n";
  std::cout << json{{"outdir", config.outdir},
                    {"digest", pipeline::DirectoryDigest(config.outdir)}}
                   .dump()
            << "\n";
  return kExitOk;
}

int Score(const std::string& artifacts, const std::string& row_csv) {
  const json records = pipeline::ScoreRows(artifacts, row_csv);
  for (const auto& r : records) {
    std::cerr << "row " << r.at("row") << ": subgroup " << r.at("subgroup").get<std::string>()
              << ", model " << r.at("model").get<std::string>() << ", probability "
              << r.at("probability") << ", AUPRC IQR "
              << r.at("uncertainty").at("auprc_iqr") << ", log loss "
              << r.at("uncertainty").at("log_loss") << "\n";
  }
  std::cout << json{{"records", records}}.dump(2) << "\n";
  return kExitOk;
}

int EmitPlots(const std::string& artifacts) {
  for (const auto& path : pipeline::EmitPlots(artifacts)) std::cout << path << "\n";
  return kExitOk;
}

int Verify(const std::string& artifacts) {
  const auto problems = pipeline::Verify(artifacts);
  for (const auto& p : problems) std::cerr << "verify: " << p << "\n";
  std::cout << json{{"ok", problems.empty()}, {"problems", problems}}.dump() << "\n";
  return problems.empty() ? kExitOk : kExitStage;
}

int Synth(const std::string& spec_path, const std::string& out) {
  const auto spec = adapthetero::tabular::SyntheticSpecFromJson(ReadJsonFile(spec_path));
  for (const auto& w : pipeline::Synthesize(spec, out)) std::cerr << "warning: " << w << "\n";
  std::cout << out << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Subgroup discovery from SHAP embeddings of a boosted-tree model"};
  app.require_subcommand(1);

  std::string config_path, outdir, artifacts, row_csv, spec_path, out_csv;
  auto* run = app.add_subcommand("run", "Run the full pipeline");
  run->add_option("--config", config_path, "Run config (JSON)")->required();
  run->add_option("--outdir", outdir, "Artifact directory (overrides the config)");

  auto* score = app.add_subcommand("score", "Score new rows against a completed run");
  score->add_option("--artifacts", artifacts, "Artifact directory")->required();
  score->add_option("--row", row_csv, "CSV with header and one or more raw rows")->required();

  auto* plots = app.add_subcommand("emit-plots", "Write plot data under DIR/plots");
  plots->add_option("--artifacts", artifacts, "Artifact directory")->required();

  auto* verify = app.add_subcommand("verify", "Recompute the report from raw outputs");
  verify->add_option("--artifacts", artifacts, "Artifact directory")->required();

  auto* synth = app.add_subcommand("synth", "Generate a planted-subgroup cohort");
  synth->add_option("--spec", spec_path, "Synthetic spec (JSON)")->required();
  synth->add_option("--out", out_csv, "Output CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (*run) return Run(config_path, outdir);
    if (*score) return Score(artifacts, row_csv);
    if (*plots) return EmitPlots(artifacts);
    if (*verify) return Verify(artifacts);
    if (*synth) return Synth(spec_path, out_csv);
  } catch (const Error& e) {
    std::cerr << "error (" << adapthetero::ErrorCodeName(e.code()) << "): " << e.what()
              << "\n";
    return ExitFor(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitStage;
  }
  return kExitInput;
}
