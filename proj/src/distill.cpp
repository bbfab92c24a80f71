#include "ckd/distill.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>

#include "ckd/errors.hpp"

namespace ckd {

// ---------------------------------------------------------------------------
// Optimizer

void OptimizerSettings::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("optimizer.learning_rate must be > 0");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("optimizer.momentum must be in [0, 1)");
}

void sgd_step(std::span<Tensor* const> params, OptimizerState& state, int epoch) {
  if (state.velocity.empty()) {
    for (const Tensor* p : params) state.velocity.emplace_back(p->size(), 0.0);
  }
  if (state.velocity.size() != params.size()) {
    throw DimensionError("sgd_step: optimizer state tracks " +
                         std::to_string(state.velocity.size()) + " tensors, got " +
                         std::to_string(params.size()));
  }
  for (std::size_t t = 0; t < params.size(); ++t) {
    if (state.velocity[t].size() != params[t]->size()) {
      throw DimensionError("sgd_step: velocity shape differs from parameter " + std::to_string(t));
    }
    for (const double g : params[t]->grad()) {
      if (!std::isfinite(g)) throw NumericError("non-finite gradient", epoch);
    }
  }
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto p = params[t]->data();
    const auto g = params[t]->grad();
    auto& v = state.velocity[t];
    for (std::size_t i = 0; i < p.size(); ++i) {
      v[i] = state.momentum * v[i] + g[i];
      p[i] -= state.learning_rate * v[i];
    }
  }
}

// ---------------------------------------------------------------------------
// Configuration

std::string_view to_string(Method m) {
  switch (m) {
    case Method::scratch:
      return "scratch";
    case Method::vanilla:
      return "vanilla";
    case Method::takd:
      return "takd";
    case Method::annealing:
      return "annealing";
    case Method::continuation:
      return "continuation";
  }
  return "?";
}

Method parse_method(std::string_view name) {
  for (const Method m : {Method::scratch, Method::vanilla, Method::takd, Method::annealing,
                         Method::continuation}) {
    if (to_string(m) == name) return m;
  }
  throw ConfigError("unknown method '" + std::string(name) +
                    "' (expected scratch, vanilla, takd, annealing or continuation)");
}

std::string_view to_string(AnnealingProtocol p) {
  return p == AnnealingProtocol::continuous ? "continuous" : "two_stage";
}

AnnealingProtocol parse_annealing_protocol(std::string_view name) {
  if (name == "two_stage") return AnnealingProtocol::two_stage;
  if (name == "continuous") return AnnealingProtocol::continuous;
  throw ConfigError("unknown annealing protocol '" + std::string(name) +
                    "' (expected two_stage or continuous)");
}

void DistillConfig::validate() const {
  if (epochs < 0) throw ConfigError("method.epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("method.batch_size must be >= 1");
  optimizer.validate();
  try {
    loss.validate();
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
  if (method != Method::continuation && freeze.any()) {
    throw ConfigError("method.freeze_* flags only apply to method.name = continuation");
  }
  for (const auto& f : {freeze.psi, freeze.phi_teacher, freeze.phi_margin}) {
    if (f && !(*f >= 0.0 && *f <= 1.0)) throw ConfigError("method.freeze_* values must be in [0, 1]");
  }

  if (method == Method::continuation) {
    if (t_max < 1) throw ConfigError("schedule.t_max must be >= 1");
    if (epochs < t_max) {
      throw ConfigError("continuation requires method.epochs >= schedule.t_max (epochs=" + std::to_string(epochs) +
                        ", t_max=" + std::to_string(t_max) + ")");
    }
    if (psi_spec.n != epochs) throw ConfigError("schedule.psi length differs from method.epochs");
    try {
      psi_spec.validate();
    } catch (const DomainError& e) {
      throw ConfigError(e.what());
    }
  }
  if (method == Method::annealing) {
    if (t_max < 1) throw ConfigError("schedule.t_max must be >= 1");
    if (annealing.stage1_epochs < 0 || annealing.stage2_epochs < 0) {
      throw ConfigError("method.annealing_stage1_epochs must be in [0, method.epochs]");
    }
    if (annealing.stage1_epochs + annealing.stage2_epochs != epochs) {
      throw ConfigError("annealing requires stage1 + stage2 epochs == method.epochs");
    }
    if (annealing.protocol == AnnealingProtocol::two_stage && annealing.stage1_epochs > 0 &&
        annealing.stage1_epochs < t_max) {
      throw ConfigError("two_stage annealing requires method.annealing_stage1_epochs >= schedule.t_max");
    }
    if (annealing.protocol == AnnealingProtocol::continuous && epochs < t_max) {
      throw ConfigError("continuous annealing requires method.epochs >= schedule.t_max");
    }
  }
}

// ---------------------------------------------------------------------------
// Engine

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), 0x5eedu};
  std::mt19937_64 rng(seq);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

double evaluate(const Network& net, const Dataset& split) {
  if (split.size() == 0 || split.inputs.empty()) throw DomainError("evaluate: empty split");
  const Tensor out = predict(net, split.inputs);
  if (split.task == TaskKind::classification) {
    std::size_t correct = 0;
    for (std::size_t r = 0; r < out.rows(); ++r) {
      const auto row = out.row_span(r);
      const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
      if (best == split.labels[r]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(out.rows());
  }
  double total = 0.0;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    const double d = out(r, 0) - split.targets(r, 0);
    total += d * d;
  }
  return -total / static_cast<double>(out.rows());
}

namespace {

struct EpochPlan {
  int temperature = 1;
  double phi_teacher = 1.0;
  double phi_margin = 1.0;
  double psi = 1.0;
};

struct Batch {
  Tensor inputs;
  std::vector<std::size_t> labels;
  Tensor targets;
  Tensor teacher;
};

using PlanFn = std::function<EpochPlan(int epoch)>;
using LossFn = std::function<Var(Graph&, Var out, const Batch&, const EpochPlan&)>;

struct Segment {
  std::vector<EpochRow> rows;
  Network best;
  int best_epoch = 0;
  double best_metric = 0.0;
};

class Trainer {
 public:
  Trainer(const Dataset& train, const Dataset& val, const DistillConfig& config,
          std::optional<Tensor> teacher_train)
      : train_(train), val_(val), config_(config), teacher_(std::move(teacher_train)) {}

  /// Runs epochs [first, first + count) on `student`, mutating it and `opt`,
  /// appending rows to `seg` and updating its best checkpoint.
  void run(Network& student, OptimizerState& opt, int first, int count, const PlanFn& plan,
           const LossFn& loss, Segment& seg) const {
    const auto params = student.parameters();
    const std::size_t n = train_.size();
    for (int epoch = first; epoch < first + count; ++epoch) {
      const EpochPlan p = plan(epoch);
      const auto order = epoch_order(n, config_.seed, epoch);
      double weighted = 0.0;
      for (std::size_t start = 0; start < n; start += config_.batch_size) {
        const std::size_t stop = std::min(n, start + config_.batch_size);
        const Batch batch = make_batch(std::span(order).subspan(start, stop - start));
        student.zero_grads();
        Graph g;
        const Var out = forward(g, student, g.frozen(batch.inputs));
        const Var root = loss(g, out, batch, p);
        const double value = g.scalar(root);
        if (!std::isfinite(value)) throw NumericError("non-finite training loss", epoch);
        g.backward(root);
        sgd_step(params, opt, epoch);
        weighted += value * static_cast<double>(stop - start);
      }
      EpochRow row;
      row.epoch = epoch;
      row.temperature = p.temperature;
      row.phi_teacher = p.phi_teacher;
      row.phi_margin = p.phi_margin;
      row.psi = p.psi;
      row.train_loss = weighted / static_cast<double>(n);
      row.val_metric = evaluate(student, val_);
      if (seg.best_epoch == 0 || row.val_metric > seg.best_metric) {
        row.is_best = true;
        seg.best = student;
        seg.best_epoch = epoch;
        seg.best_metric = row.val_metric;
      }
      seg.rows.push_back(row);
    }
  }

  /// Empty segment whose best checkpoint is the untrained `student`.
  Segment start(const Network& student) const {
    Segment seg;
    seg.best = student;
    seg.best_metric = evaluate(student, val_);
    return seg;
  }

  bool classification() const { return train_.task == TaskKind::classification; }

  /// Cross-entropy for classification, MSE to the targets for regression.
  Var hard_loss(Graph& g, Var out, const Batch& b) const {
    if (classification()) return cross_entropy(g, out, b.labels);
    return mse_regression(g, out, g.constant(b.targets));
  }

 private:
  Batch make_batch(std::span<const std::size_t> rows) const {
    Batch b;
    const std::size_t dim = train_.dim();
    b.inputs = Tensor(rows.size(), dim);
    if (!classification()) b.targets = Tensor(rows.size(), 1);
    if (teacher_) b.teacher = Tensor(rows.size(), teacher_->cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const std::size_t r = rows[i];
      std::copy_n(train_.inputs.row_span(r).begin(), dim, b.inputs.row_span(i).begin());
      if (classification()) {
        b.labels.push_back(train_.labels[r]);
      } else {
        b.targets(i, 0) = train_.targets(r, 0);
      }
      if (teacher_) {
        std::copy_n(teacher_->row_span(r).begin(), teacher_->cols(), b.teacher.row_span(i).begin());
      }
    }
    return b;
  }

  const Dataset& train_;
  const Dataset& val_;
  const DistillConfig& config_;
  std::optional<Tensor> teacher_;
};

void check_data(const Network& student, const Dataset& train, const Dataset& val) {
  train.validate();
  val.validate();
  if (train.task != val.task) throw ConfigError("train and validation splits differ in task kind");
  if (student.in_dim() != train.dim()) {
    throw ConfigError("student expects " + std::to_string(student.in_dim()) +
                      " input features, data has " + std::to_string(train.dim()));
  }
  const std::size_t want = train.task == TaskKind::classification ? train.num_classes : 1;
  if (student.out_dim() != want) {
    throw ConfigError("student produces " + std::to_string(student.out_dim()) +
                      " outputs, task needs " + std::to_string(want));
  }
}

Tensor teacher_outputs(const TeacherSource& teacher, const Network& student, const Dataset& train) {
  Tensor out = teacher_logits(teacher, train.inputs);
  if (out.cols() != student.out_dim()) {
    throw ConfigError("teacher produces " + std::to_string(out.cols()) + " outputs, student " +
                      std::to_string(student.out_dim()));
  }
  return out;
}

RunRecord finish(Segment seg, Network final_network) {
  RunRecord rec;
  rec.rows = std::move(seg.rows);
  rec.best_checkpoint = std::move(seg.best);
  rec.best_epoch = seg.best_epoch;
  rec.best_metric = seg.best_metric;
  rec.final_network = std::move(final_network);
  return rec;
}

EpochPlan plain_plan(int) { return {}; }

}  // namespace

RunRecord train_scratch(Network student, const Dataset& train, const Dataset& val,
                        const DistillConfig& config) {
  config.validate();
  check_data(student, train, val);
  const Trainer trainer(train, val, config, std::nullopt);
  OptimizerState opt(config.optimizer);
  Segment seg = trainer.start(student);
  trainer.run(
      student, opt, 1, config.epochs, plain_plan,
      [&](Graph& g, Var out, const Batch& b, const EpochPlan&) { return trainer.hard_loss(g, out, b); },
      seg);
  return finish(std::move(seg), std::move(student));
}

RunRecord train_vanilla(Network student, const TeacherSource& teacher, const Dataset& train,
                        const Dataset& val, const DistillConfig& config) {
  config.validate();
  check_data(student, train, val);
  const Trainer trainer(train, val, config, teacher_outputs(teacher, student, train));
  OptimizerState opt(config.optimizer);
  const LossHyper hyper = config.loss;
  Segment seg = trainer.start(student);
  trainer.run(
      student, opt, 1, config.epochs,
      [&](int) {
        EpochPlan p;
        p.psi = hyper.lambda;
        return p;
      },
      [&](Graph& g, Var out, const Batch& b, const EpochPlan&) {
        if (trainer.classification()) return vanilla_kd_loss(g, out, b.teacher, b.labels, hyper);
        return regression_kd_loss(g, out, b.targets, b.teacher, hyper);
      },
      seg);
  return finish(std::move(seg), std::move(student));
}

RunRecord train_annealing(Network student, const TeacherSource& teacher, const Dataset& train,
                          const Dataset& val, const DistillConfig& config) {
  config.validate();
  if (config.method != Method::annealing) throw ConfigError("train_annealing: method is not annealing");
  check_data(student, train, val);
  const Trainer trainer(train, val, config, teacher_outputs(teacher, student, train));
  const int k = config.annealing.stage1_epochs;
  const int m = config.annealing.stage2_epochs;
  const bool continuous = config.annealing.protocol == AnnealingProtocol::continuous;

  // The ladder spans stage 1 only (two_stage) or the whole run (continuous).
  const TemperatureLadder ladder{config.t_max, continuous ? config.epochs : std::max(k, 1)};
  const PlanFn stage1_plan = [&](int epoch) {
    EpochPlan p;
    p.temperature = temperature_at_epoch(ladder, epoch);
    p.phi_teacher = p.phi_margin = phi_of_temperature(p.temperature, config.t_max);
    p.psi = 0.0;
    return p;
  };
  const PlanFn stage2_plan = [&](int epoch) {
    if (!continuous) return EpochPlan{};
    EpochPlan p = stage1_plan(epoch);
    p.psi = 1.0;
    return p;
  };
  const LossFn stage1_loss = [](Graph& g, Var out, const Batch& b, const EpochPlan& p) {
    return annealing_loss(g, out, b.teacher, p.phi_teacher);
  };
  const LossFn stage2_loss = [&](Graph& g, Var out, const Batch& b, const EpochPlan&) {
    return trainer.hard_loss(g, out, b);
  };

  OptimizerState opt(config.optimizer);
  Segment stage1 = trainer.start(student);
  trainer.run(student, opt, 1, k, stage1_plan, stage1_loss, stage1);
  if (continuous) {
    trainer.run(student, opt, k + 1, m, stage2_plan, stage2_loss, stage1);
    return finish(std::move(stage1), std::move(student));
  }

  student = stage1.best;
  opt = OptimizerState(config.optimizer);
  Segment stage2 = trainer.start(student);
  trainer.run(student, opt, k + 1, m, stage2_plan, stage2_loss, stage2);
  if (m == 0) return finish(std::move(stage1), std::move(student));
  std::vector<EpochRow> rows = std::move(stage1.rows);
  rows.insert(rows.end(), stage2.rows.begin(), stage2.rows.end());
  stage2.rows = std::move(rows);
  return finish(std::move(stage2), std::move(student));
}

RunRecord train_continuation(Network student, const TeacherSource& teacher, const Dataset& train,
                             const Dataset& val, const DistillConfig& config) {
  config.validate();
  if (config.method != Method::continuation) {
    throw ConfigError("train_continuation: method is not continuation");
  }
  check_data(student, train, val);
  const Trainer trainer(train, val, config, teacher_outputs(teacher, student, train));
  const TemperatureLadder ladder{config.t_max, config.epochs};
  const FreezeFlags& freeze = config.freeze;
  const double margin = config.loss.margin;

  const PlanFn plan = [&](int epoch) {
    EpochPlan p;
    p.temperature = temperature_at_epoch(ladder, epoch);
    const double phi = phi_of_temperature(p.temperature, config.t_max);
    p.phi_teacher = freeze.phi_teacher.value_or(phi);
    p.phi_margin = freeze.phi_margin.value_or(phi);
    p.psi = freeze.psi.value_or(psi(config.psi_spec, epoch));
    return p;
  };
  const LossFn loss = [&](Graph& g, Var out, const Batch& b, const EpochPlan& p) {
    const Var hard = trainer.hard_loss(g, out, b);
    const Var cnt = continuation_kd_loss(g, out, b.teacher, p.phi_teacher, p.phi_margin, margin);
    return composite_loss(g, hard, cnt, p.psi);
  };

  OptimizerState opt(config.optimizer);
  Segment seg = trainer.start(student);
  trainer.run(student, opt, 1, config.epochs, plan, loss, seg);
  return finish(std::move(seg), std::move(student));
}

TakdResult train_takd(const TeacherSource& teacher, std::optional<Network> ta, Network student,
                      const Dataset& train, const Dataset& val, const DistillConfig& config,
                      const std::filesystem::path& ta_checkpoint_dir) {
  if (!ta) throw ConfigError("takd requires a teacher-assistant network (model.ta_hidden)");
  if (const auto* t = std::get_if<Network>(&teacher); t && t->param_count() <= ta->param_count()) {
    throw ConfigError("takd requires teacher capacity > TA capacity");
  }
  if (ta->param_count() <= student.param_count()) {
    throw ConfigError("takd requires TA capacity > student capacity");
  }
  DistillConfig hop = config;
  hop.method = Method::vanilla;

  TakdResult result;
  result.ta = train_vanilla(std::move(*ta), teacher, train, val, hop);
  if (!ta_checkpoint_dir.empty()) {
    result.ta_checkpoint = ta_checkpoint_dir / "ta.ckpt";
    save_network(result.ta.best_checkpoint, result.ta_checkpoint);
  }
  const TeacherSource relay{result.ta.best_checkpoint};
  result.student = train_vanilla(std::move(student), relay, train, val, hop);
  return result;
}

}  // namespace ckd
