#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ckd/data.hpp"
#include "ckd/distill.hpp"
#include "ckd/models.hpp"

namespace ckd {

enum class TeacherKind { trained, checkpoint, tabulated };

struct DataConfig {
  std::string generator = "gaussian_mixture";  // gaussian_mixture | noisy_sine
  std::optional<std::uint64_t> seed;           // defaults to method.seed
  std::array<double, 3> split{0.8, 0.1, 0.1};
  NoisySineParams sine;
  GaussianMixtureParams mixture;
};

struct ModelConfig {
  std::vector<std::size_t> student_hidden{16, 16};
  Activation activation = Activation::relu;
  TeacherKind teacher = TeacherKind::trained;
  std::vector<std::size_t> teacher_hidden{256, 256};
  int teacher_epochs = 30;
  std::string teacher_checkpoint;
  std::vector<std::size_t> ta_hidden{64, 64};
};

struct OutputConfig {
  std::string root;  // empty: $CKD_OUTPUT_ROOT, else "runs"
  std::size_t report_grid = 1000;
};

/// Ablation-arm constants: the value a frozen psi takes and the value a frozen
/// phi coefficient takes.
struct AblationConfig {
  double psi = 0.5;
  double coefficient = 1.0;
};

/// Everything a run needs, parsed from an INI file with sections [data],
/// [model], [method], [schedule], [optimizer], [output].
struct RunConfig {
  DataConfig data;
  ModelConfig model;
  DistillConfig distill;
  AblationConfig ablation;
  OutputConfig output;

  std::uint64_t data_seed() const { return data.seed.value_or(distill.seed); }
  /// Cross-field checks; throws ConfigError.
  void validate() const;
};

/// Parses and validates. Unknown sections or keys, malformed values and
/// invalid combinations raise ConfigError naming the key.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

/// Canonical INI listing every key with its resolved value. Parsing the result
/// yields an identical configuration.
std::string to_ini(const RunConfig& config);

/// First 8 hex digits of FNV-1a over the canonical INI without [output].
std::string config_hash(const RunConfig& config);

/// Reference of every key with its default and meaning.
std::string config_reference();

}  // namespace ckd
