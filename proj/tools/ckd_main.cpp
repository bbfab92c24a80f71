#include <CLI11.hpp>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "ckd/commands.hpp"
#include "ckd/config.hpp"

namespace {

std::optional<std::filesystem::path> optional_path(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return std::filesystem::path(s);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Knowledge distillation with continuation schedules"};
  app.require_subcommand(1);

  std::string config;
  std::string out;

  auto* train = app.add_subcommand("train", "Train one run from a config file");
  train->add_option("--config", config, "Run configuration (INI)")->required()->check(CLI::ExistingFile);
  train->add_option("--out", out, "Output root (overrides [output] root and $CKD_OUTPUT_ROOT)");

  auto* ablate = app.add_subcommand("ablate", "Run the four one-factor-dynamic ablation arms");
  ablate->add_option("--config", config, "Base continuation config (INI)")->required()->check(CLI::ExistingFile);
  ablate->add_option("--out", out, "Output root");

  std::string corrupt;
  std::size_t points = 100;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every loss");
  gradcheck->add_option("--points", points, "Random points per loss")->check(CLI::PositiveNumber);
  gradcheck->add_option("--corrupt", corrupt, "Fault injection: break the backward rule of this loss")
      ->group("");

  ckd::SweepOptions sweep_opts;
  auto* sweep = app.add_subcommand("sweep", "Run methods x seeds and aggregate");
  sweep->add_option("--config", config, "Base config (INI)")->required()->check(CLI::ExistingFile);
  sweep->add_option("--out", out, "Output root");
  sweep->add_option("--seeds", sweep_opts.seeds, "Seeds, e.g. 0,1,2")->required()->delimiter(',');
  sweep->add_option("--methods", sweep_opts.methods, "Methods (default: all five)")->delimiter(',');
  sweep->add_option("--jobs", sweep_opts.jobs, "Parallel runs")->check(CLI::PositiveNumber);

  ckd::ReportOptions report_opts;
  std::string checkpoint, dataset, plot_out = "smoothness.csv";
  std::size_t grid = 0;
  auto* report = app.add_subcommand("report", "Smoothness report of a regression checkpoint");
  report->add_option("--checkpoint", checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  auto* ds = report->add_option("--dataset", dataset, "Noisy-sine dataset file")->check(CLI::ExistingFile);
  report->add_option("--config", config, "Config whose [data] section regenerates the dataset")
      ->check(CLI::ExistingFile)
      ->excludes(ds);
  report->add_option("--grid", grid, "Grid size (>= 8)");
  report->add_option("--out", plot_out, "Plot-data CSV path");

  app.add_subcommand("defaults", "Print the config reference with every key and default");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? ckd::kExitOk : ckd::kExitConfig;
  }

  if (*train) return ckd::cmd_train(config, optional_path(out), std::cout, std::cerr);
  if (*ablate) return ckd::cmd_ablate(config, optional_path(out), std::cout, std::cerr);
  if (*gradcheck) {
    std::optional<std::string> c;
    if (!corrupt.empty()) c = corrupt;
    return ckd::cmd_gradcheck(std::cout, std::cerr, c, points);
  }
  if (*sweep) return ckd::cmd_sweep(config, optional_path(out), sweep_opts, std::cout, std::cerr);
  if (*report) {
    report_opts.checkpoint = checkpoint;
    report_opts.dataset = optional_path(dataset);
    report_opts.config = optional_path(config);
    if (grid != 0) report_opts.grid = grid;
    report_opts.plot_out = plot_out;
    return ckd::cmd_report(report_opts, std::cout, std::cerr);
  }
  std::cout << ckd::config_reference();
  return 0;
}
