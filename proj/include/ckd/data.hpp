#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ckd/tensor.hpp"

namespace ckd {

enum class TaskKind : std::uint32_t { regression = 0, classification = 1 };

std::string_view to_string(TaskKind kind);

/// Ordered key/value pairs describing how a dataset was produced.
using Metadata = std::vector<std::pair<std::string, std::string>>;

struct Dataset {
  TaskKind task = TaskKind::regression;
  Tensor inputs;                       // rows x dim
  Tensor targets;                      // rows x 1, regression only
  std::vector<std::size_t> labels;     // classification only
  std::size_t num_classes = 0;         // classification only
  std::optional<Tensor> clean_targets; // noise-free reference (noisy sine)
  Metadata metadata;
  std::vector<std::size_t> parent_indices;  // filled by split()

  std::size_t size() const noexcept { return inputs.rows(); }
  std::size_t dim() const noexcept { return inputs.cols(); }
  std::optional<std::string> meta(std::string_view key) const;
  /// Numeric metadata lookup; throws DomainError when absent or malformed.
  double meta_double(std::string_view key) const;
  /// Rows in the given order.
  Dataset subset(std::span<const std::size_t> rows) const;
  /// Throws DomainError on non-finite inputs, bad labels or missing targets.
  void validate() const;
};

struct NoisySineParams {
  std::size_t n_samples = 3000;
  double lo = -std::numbers::pi;
  double hi = std::numbers::pi;
  double base_freq = 1.0;
  double noise_freq = 20.0;
  double noise_amp = 0.3;
  std::uint64_t seed = 0;
};

/// x ~ U[lo, hi]; clean = sin(base_freq x); target = clean + noise_amp sin(noise_freq x).
Dataset gen_noisy_sine(const NoisySineParams& p);

struct GaussianMixtureParams {
  std::size_t n_classes = 10;
  std::size_t dim = 2;
  std::size_t n_per_class = 100;
  double spread = 1.0;
  double separation = 3.0;
  std::uint64_t seed = 0;
};

/// Balanced isotropic Gaussian classes whose means lie on a random sphere of
/// radius `separation`.
Dataset gen_gaussian_mixture(const GaussianMixtureParams& p);

struct Splits {
  Dataset train;
  Dataset val;
  Dataset test;
};

/// Seeded permutation, then contiguous train/val/test partition. Fractions
/// must be positive and sum to 1 within 1e-9.
Splits split(const Dataset& data, std::array<double, 3> fractions, std::uint64_t seed);

// Dataset file layout (little-endian): magic "CKDDATA\0", u32 version, u32 task,
// u64 rows, u64 dim, u64 num_classes, u32 has_clean, u64 metadata count +
// (key, value) strings, u64 parent index count + u64 indices, inputs f64,
// targets f64 or labels u64, clean f64 if present, u64 FNV-1a checksum.
inline constexpr std::uint32_t kDatasetVersion = 1;

void save_dataset(const Dataset& data, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace ckd
