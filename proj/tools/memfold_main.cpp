/* Copyright 2026 The memfold Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// memfold: static peak-GPU-memory predictor for model training.

#include <unistd.h>

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "memfold/cli.hpp"

namespace {

// Styling only when writing a table to a terminal and MEMFOLD_COLOR != 0.
memfold::TableStyle table_style(bool to_file) {
  const char* env = std::getenv("MEMFOLD_COLOR");
  const bool disabled = env != nullptr && std::string(env) == "0";
  return memfold::TableStyle{!disabled && !to_file && isatty(STDOUT_FILENO)};
}

const std::map<std::string, memfold::ReportFormat> kFormats = {
    {"json", memfold::ReportFormat::json},
    {"table", memfold::ReportFormat::table}};

}  // namespace

int main(int argc, char** argv) {
  using namespace memfold;

  CLI::App app{"memfold: predict peak GPU memory for model training"};
  app.require_subcommand(1);

  cli::PredictOptions predict;
  std::string predict_out;
  std::string predict_trace;
  std::uint64_t capacity = 0;
  auto* predict_cmd =
      app.add_subcommand("predict", "predict the peak for one config");
  predict_cmd->add_option("ir", predict.ir_path, ".mir.json model file")
      ->required();
  predict_cmd->add_option("config", predict.cfg_path, ".tcfg.json config file")
      ->required();
  predict_cmd->add_option("--format", predict.format, "json or table")
      ->transform(CLI::CheckedTransformer(kFormats, CLI::ignore_case));
  auto* predict_out_opt =
      predict_cmd->add_option("--out", predict_out, "write report to a file");
  auto* capacity_opt = predict_cmd->add_option(
      "--capacity-bytes", capacity,
      "exit 4 if m_peak_adjusted exceeds this many bytes");
  auto* trace_opt = predict_cmd->add_option(
      "--trace", predict_trace, "write the allocation event trace (NDJSON)");

  cli::SweepOptions sweep;
  std::string sweep_out;
  auto* sweep_cmd =
      app.add_subcommand("sweep", "predict over a range of dp degrees");
  sweep_cmd->add_option("ir", sweep.ir_path, ".mir.json model file")
      ->required();
  sweep_cmd->add_option("config", sweep.cfg_path, ".tcfg.json config file")
      ->required();
  sweep_cmd->add_option("--dp", sweep.dp_range, "inclusive range A..B")
      ->capture_default_str();
  sweep_cmd->add_option("--format", sweep.format, "json or table")
      ->transform(CLI::CheckedTransformer(kFormats, CLI::ignore_case));
  auto* sweep_out_opt =
      sweep_cmd->add_option("--out", sweep_out, "write rows to a file");

  cli::CompareOptions compare;
  auto* compare_cmd = app.add_subcommand(
      "compare", "score predictions against measured peaks (MAPE)");
  compare_cmd
      ->add_option("--reports", compare.report_paths,
                   "report or sweep JSON files")
      ->required();
  compare_cmd
      ->add_option("--measured", compare.measured_csv_path,
                   "CSV with header dp,measured_bytes")
      ->required();

  std::string validate_path;
  auto* validate_cmd = app.add_subcommand("validate", "check a model file");
  validate_cmd->add_option("ir", validate_path, ".mir.json model file")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return cli::kInvalidInput;
  }

  if (*predict_cmd) {
    if (*predict_out_opt) {
      predict.out_path = predict_out;
    }
    if (*capacity_opt) {
      predict.capacity_bytes = capacity;
    }
    if (*trace_opt) {
      predict.trace_path = predict_trace;
    }
    predict.style = table_style(predict.out_path.has_value());
    return cli::cmd_predict(predict, std::cout, std::cerr);
  }
  if (*sweep_cmd) {
    if (*sweep_out_opt) {
      sweep.out_path = sweep_out;
    }
    sweep.style = table_style(sweep.out_path.has_value());
    return cli::cmd_sweep(sweep, std::cout, std::cerr);
  }
  if (*compare_cmd) {
    return cli::cmd_compare(compare, std::cout, std::cerr);
  }
  return cli::cmd_validate(validate_path, std::cout, std::cerr);
}
