#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "ckd/autodiff.hpp"
#include "ckd/tensor.hpp"

namespace ckd {

enum class Activation : std::uint32_t { identity = 0, relu = 1, tanh = 2 };

std::string_view to_string(Activation a);
Activation parse_activation(std::string_view name);

struct LayerSpec {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  Activation activation = Activation::identity;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// in -> hidden... -> out, `hidden_activation` on hidden layers, identity on the
/// output layer.
std::vector<LayerSpec> mlp_spec(std::size_t in_dim, std::span<const std::size_t> hidden,
                                std::size_t out_dim, Activation hidden_activation);

/// Dense feed-forward network computing logits = f_L(...f_1(x W_1 + b_1)...).
/// Weights are in_dim x out_dim, biases 1 x out_dim.
class Network {
 public:
  Network() = default;
  /// Zero-initialized parameters. Validates the layer list.
  explicit Network(std::vector<LayerSpec> layers);

  const std::vector<LayerSpec>& layers() const noexcept { return layers_; }
  std::size_t in_dim() const { return layers_.front().in_dim; }
  std::size_t out_dim() const { return layers_.back().out_dim; }

  Tensor& weight(std::size_t layer) { return weights_.at(layer); }
  const Tensor& weight(std::size_t layer) const { return weights_.at(layer); }
  Tensor& bias(std::size_t layer) { return biases_.at(layer); }
  const Tensor& bias(std::size_t layer) const { return biases_.at(layer); }

  /// Sum over layers of in*out + out.
  std::size_t param_count() const noexcept;
  /// Weights and biases interleaved per layer: W1, b1, W2, b2, ...
  std::vector<Tensor*> parameters();
  /// Concatenation of all parameters in parameters() order.
  std::vector<double> flat_params() const;
  void zero_grads();

 private:
  std::vector<LayerSpec> layers_;
  std::vector<Tensor> weights_;
  std::vector<Tensor> biases_;
};

/// Throws ConfigError naming the offending layer pair on inconsistent specs.
void validate_spec(std::span<const LayerSpec> spec);

/// Glorot-uniform weights U(-sqrt(6/(in+out)), +sqrt(6/(in+out))), zero biases.
Network init_network(std::vector<LayerSpec> spec, std::uint64_t seed);

/// Differentiable forward pass; parameters are registered on `g`.
Var forward(Graph& g, Network& net, Var batch);
/// Same arithmetic as forward() without gradient bookkeeping.
Tensor predict(const Network& net, const Tensor& batch);

/// The noisy function itself standing in for a teacher: exact-match lookup of
/// outputs by input row.
class TabulatedTeacher {
 public:
  /// inputs: b x d, outputs: b x k. Duplicate input rows are rejected.
  TabulatedTeacher(const Tensor& inputs, const Tensor& outputs);

  std::size_t in_dim() const noexcept { return in_dim_; }
  std::size_t out_dim() const noexcept { return out_dim_; }
  std::size_t size() const noexcept { return table_.size(); }
  /// Throws LookupError with the row index of the first missing input.
  Tensor lookup(const Tensor& inputs) const;

 private:
  std::size_t in_dim_;
  std::size_t out_dim_;
  std::map<std::vector<double>, std::vector<double>> table_;
};

using TeacherSource = std::variant<Network, TabulatedTeacher>;

/// Detached teacher outputs for a batch of inputs.
Tensor teacher_logits(const TeacherSource& teacher, const Tensor& inputs);

// Checkpoint layout (little-endian): magic "CKDNET\0\0", u32 version,
// u32 layer count, per layer {u32 in, u32 out, u32 activation}, u64 parameter
// count, parameter block as f64 in parameters() order, u64 FNV-1a checksum.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_network(const Network& net, const std::filesystem::path& path);
Network load_network(const std::filesystem::path& path);

}  // namespace ckd
