#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ckd/config.hpp"
#include "ckd/distill.hpp"
#include "ckd/smoothness.hpp"

namespace ckd {

enum ExitCode : int { kExitOk = 0, kExitConfig = 1, kExitNumeric = 2, kExitPartial = 3 };

/// Environment variable naming the default output root.
inline constexpr const char* kOutputRootEnv = "CKD_OUTPUT_ROOT";

/// --out, then [output] root, then $CKD_OUTPUT_ROOT, then "runs".
std::filesystem::path output_root(const std::optional<std::filesystem::path>& cli_out,
                                  const RunConfig& config);

/// <method>-seed<k>-<config hash>
std::string run_dir_name(const RunConfig& config);

/// Full dataset described by the [data] section, seeded with data_seed().
Dataset make_dataset(const RunConfig& config);

/// Stable seed derived from a run seed and a role tag ("teacher", "ta").
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag);

/// Exact metrics.csv text for a record.
std::string metrics_csv(std::span<const EpochRow> rows);

/// Teachers trained from scratch, shared between runs that would train the
/// same one (same data, architecture, optimizer and seed). Thread-safe.
class TeacherCache {
 public:
  std::shared_ptr<const Network> get(const std::string& key, const std::function<Network()>& train);

 private:
  struct Slot {
    std::once_flag once;
    std::shared_ptr<const Network> net;
  };
  std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Slot>> slots_;
};

struct RunOutput {
  std::filesystem::path dir;
  RunRecord record;
  double test_metric = 0.0;
  std::optional<SmoothnessReport> smoothness;
};

/// Trains per the config and writes the run directory under `root`. The
/// directory is created only after training succeeds.
RunOutput execute_run(const RunConfig& config, const std::filesystem::path& root,
                      TeacherCache* cache = nullptr);

/// Subcommands. Diagnostics go to `err`, progress and results to `out`.
int cmd_train(const std::filesystem::path& config_path,
              const std::optional<std::filesystem::path>& out_root, std::ostream& out,
              std::ostream& err);

int cmd_ablate(const std::filesystem::path& config_path,
               const std::optional<std::filesystem::path>& out_root, std::ostream& out,
               std::ostream& err);

int cmd_gradcheck(std::ostream& out, std::ostream& err,
                  const std::optional<std::string>& corrupt = {}, std::size_t points = 100);

struct SweepOptions {
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> methods;  // empty: all five
  std::size_t jobs = 1;
};

int cmd_sweep(const std::filesystem::path& config_path,
              const std::optional<std::filesystem::path>& out_root, const SweepOptions& options,
              std::ostream& out, std::ostream& err);

struct ReportOptions {
  std::filesystem::path checkpoint;
  std::optional<std::filesystem::path> dataset;
  std::optional<std::filesystem::path> config;
  std::optional<std::size_t> grid;
  std::filesystem::path plot_out = "smoothness.csv";
};

int cmd_report(const ReportOptions& options, std::ostream& out, std::ostream& err);

}  // namespace ckd
