#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ckd/data.hpp"
#include "ckd/losses.hpp"
#include "ckd/models.hpp"
#include "ckd/schedules.hpp"

namespace ckd {

// ---------------------------------------------------------------------------
// Optimizer

struct OptimizerSettings {
  double learning_rate = 0.05;
  double momentum = 0.9;

  void validate() const;
};

/// SGD with heavy-ball momentum; one velocity buffer per parameter tensor.
struct OptimizerState {
  double learning_rate = 0.05;
  double momentum = 0.9;
  std::vector<std::vector<double>> velocity;

  explicit OptimizerState(const OptimizerSettings& s = {})
      : learning_rate(s.learning_rate), momentum(s.momentum) {}
};

/// v <- momentum * v + g;  p <- p - lr * v. Gradients are read from each
/// tensor's grad buffer. Velocity buffers are created on first use. Throws
/// NumericError (tagged with `epoch`) on a non-finite gradient before touching
/// any parameter.
void sgd_step(std::span<Tensor* const> params, OptimizerState& state, int epoch = 0);

// ---------------------------------------------------------------------------
// Configuration

enum class Method { scratch, vanilla, takd, annealing, continuation };

std::string_view to_string(Method m);
Method parse_method(std::string_view name);

/// Constants that replace a dynamic factor of the continuation loss.
struct FreezeFlags {
  std::optional<double> psi;
  std::optional<double> phi_teacher;
  std::optional<double> phi_margin;

  bool any() const { return psi || phi_teacher || phi_margin; }
};

/// two_stage: published Annealing-KD. Stage 1 runs the temperature ladder over
/// its own k epochs (phi 1/T_max -> 1); stage 2 fine-tunes the stage-1 best
/// checkpoint with a fresh optimizer; the result is the best stage-2 epoch.
///
/// continuous: the Continuation-KD special case (margin 0, step psi). The
/// ladder spans all n epochs, stage 2 continues from the last stage-1 state
/// and optimizer, and the best epoch is taken over the whole run.
enum class AnnealingProtocol { two_stage, continuous };

std::string_view to_string(AnnealingProtocol p);
AnnealingProtocol parse_annealing_protocol(std::string_view name);

struct AnnealingStages {
  int stage1_epochs = 0;  // k
  int stage2_epochs = 0;  // m
  AnnealingProtocol protocol = AnnealingProtocol::two_stage;
};

struct DistillConfig {
  Method method = Method::continuation;
  int epochs = 30;
  std::size_t batch_size = 32;
  int t_max = 10;
  PsiSpec psi_spec{PsiCappedRamp{40.0, 20}, 30};
  LossHyper loss;
  OptimizerSettings optimizer;
  std::uint64_t seed = 0;
  FreezeFlags freeze;
  AnnealingStages annealing;

  /// Throws ConfigError describing the first violated constraint.
  void validate() const;
};

// ---------------------------------------------------------------------------
// Run records

struct EpochRow {
  int epoch = 0;
  int temperature = 1;
  double phi_teacher = 1.0;
  double phi_margin = 1.0;
  double psi = 1.0;
  double train_loss = 0.0;
  double val_metric = 0.0;
  bool is_best = false;
};

struct RunRecord {
  std::vector<EpochRow> rows;
  Network best_checkpoint;
  int best_epoch = 0;  // 0: no epoch ran, best_checkpoint is the initial network
  double best_metric = 0.0;
  Network final_network;
};

struct TakdResult {
  RunRecord ta;
  RunRecord student;
  std::filesystem::path ta_checkpoint;  // empty unless a directory was given
};

// ---------------------------------------------------------------------------
// Engines. Each takes the initialized student by value and returns the best
// checkpoint (by validation metric) plus one row per epoch. Identical inputs
// give bit-identical records.

/// Classification: accuracy (argmax, first index wins ties). Regression: -MSE.
double evaluate(const Network& net, const Dataset& split);

RunRecord train_scratch(Network student, const Dataset& train, const Dataset& val,
                        const DistillConfig& config);

RunRecord train_vanilla(Network student, const TeacherSource& teacher, const Dataset& train,
                        const Dataset& val, const DistillConfig& config);

RunRecord train_annealing(Network student, const TeacherSource& teacher, const Dataset& train,
                          const Dataset& val, const DistillConfig& config);

RunRecord train_continuation(Network student, const TeacherSource& teacher, const Dataset& train,
                             const Dataset& val, const DistillConfig& config);

/// Teacher -> TA and TA -> student Vanilla-KD hops. The TA checkpoint is saved
/// as `ta.ckpt` under `ta_checkpoint_dir` when that is non-empty.
TakdResult train_takd(const TeacherSource& teacher, std::optional<Network> ta, Network student,
                      const Dataset& train, const Dataset& val, const DistillConfig& config,
                      const std::filesystem::path& ta_checkpoint_dir = {});

/// Sample order of one epoch: a permutation of [0, n) keyed by (seed, epoch).
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch);

}  // namespace ckd
