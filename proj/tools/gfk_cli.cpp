// Copyright 2026 The gfk Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


// Experiment driver: generate, run, table, figure-data.

#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "gfk/gfk.hpp"

namespace {

struct Options {
  std::string config_path;
  std::string out_dir;
  bool full = false;
  int workers = 1;
  std::string runs_path;
  std::string kind = "ess_trace";
  int repeat = 0;
};

gfk::ExperimentConfig load_config(const Options& opt) {
  gfk::ExperimentConfig cfg = opt.full ? gfk::ExperimentConfig::full() : gfk::ExperimentConfig::desk();
  if (!opt.config_path.empty()) {
    cfg = gfk::config_from_json(gfk::read_json(opt.config_path), cfg);
  }
  if (!opt.out_dir.empty()) {
    cfg.output_dir = opt.out_dir;
  }
  cfg.validate();
  return cfg;
}

std::filesystem::path runs_file(const Options& opt, const gfk::ExperimentConfig& cfg) {
  return opt.runs_path.empty() ? std::filesystem::path(cfg.output_dir) / "runs.jsonl"
                               : std::filesystem::path(opt.runs_path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Twisted Feynman-Kac posterior sampling experiments"};
  app.require_subcommand(1);
  Options opt;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config_path, "JSON experiment config")->check(CLI::ExistingFile);
    sub->add_option("--out", opt.out_dir, "output directory (overrides output_dir)");
    sub->add_flag("--full", opt.full, "start from the full preset (100 repeats) instead of desk");
  };

  auto* generate = app.add_subcommand("generate", "write the problem instance, schedule and twist coefficients");
  add_common(generate);

  auto* run = app.add_subcommand("run", "run the sweep, appending to runs.jsonl");
  add_common(run);
  run->add_option("--workers", opt.workers, "worker threads")->check(CLI::PositiveNumber);

  auto* table = app.add_subcommand("table", "aggregate runs.jsonl into table.csv");
  add_common(table);
  table->add_option("--runs", opt.runs_path, "runs file (default <out>/runs.jsonl)");

  auto* figure = app.add_subcommand("figure-data", "write ESS traces or marginal histograms as CSV");
  add_common(figure);
  figure->add_option("--runs", opt.runs_path, "runs file (default <out>/runs.jsonl)");
  figure->add_option("--kind", opt.kind, "ess_trace or marginal_hist")
      ->check(CLI::IsMember({"ess_trace", "marginal_hist"}));
  figure->add_option("--repeat", opt.repeat, "repeat index to export")->check(CLI::NonNegativeNumber);

  CLI11_PARSE(app, argc, argv);

  try {
    const gfk::ExperimentConfig cfg = load_config(opt);
    if (generate->parsed()) {
      for (const auto& path : gfk::write_generated(cfg)) {
        std::cout << path.string() << '\n';
      }
    } else if (run->parsed()) {
      const auto summary = gfk::run_sweep(cfg, opt.workers);
      std::cout << "executed " << summary.executed << ", skipped " << summary.skipped << ", failed "
                << summary.failed << '\n';
    } else if (table->parsed()) {
      const auto csv = std::filesystem::path(cfg.output_dir) / "table.csv";
      std::filesystem::create_directories(cfg.output_dir);
      gfk::write_table(runs_file(opt, cfg), csv);
      std::cout << csv.string() << '\n';
    } else if (figure->parsed()) {
      const auto dir = std::filesystem::path(cfg.output_dir) / "figures";
      for (const auto& path :
           gfk::write_figure_data(cfg, runs_file(opt, cfg), dir, gfk::parse_figure_kind(opt.kind), opt.repeat)) {
        std::cout << path.string() << '\n';
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
