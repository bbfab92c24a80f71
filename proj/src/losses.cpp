#include "ckd/losses.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "ckd/errors.hpp"

namespace ckd {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(op) + ": shape " + a.shape_string() + " vs " +
                         b.shape_string());
  }
}

// weight * a + (1 - weight) * b with the degenerate ends short-circuited.
Var mix(Graph& g, Var a, Var b, double weight) {
  if (weight == 1.0) return scale(g, a, 1.0);
  if (weight == 0.0) return scale(g, b, 1.0);
  return add(g, scale(g, a, weight), scale(g, b, 1.0 - weight));
}

}  // namespace

void LossHyper::validate() const {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw DomainError("lambda (method.lambda) must be in [0, 1]");
  if (!(tau >= 1.0)) throw DomainError("tau (method.tau) must be >= 1");
  if (!(margin >= 0.0)) throw DomainError("margin (method.margin) must be >= 0");
}

Var cross_entropy(Graph& g, Var logits, std::span<const std::size_t> labels) {
  const Tensor& z = g.value(logits);
  if (labels.size() != z.rows()) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) +
                         " labels for logits " + z.shape_string());
  }
  for (const std::size_t y : labels) {
    if (y >= z.cols()) {
      throw DomainError("cross_entropy: label " + std::to_string(y) + " out of range [0, " +
                        std::to_string(z.cols()) + ")");
    }
  }
  return mean(g, sub(g, log_sum_exp(g, logits, 1), gather(g, logits, labels)));
}

Var mse_regression(Graph& g, Var pred, Var targets) {
  require_same_shape(g.value(pred), g.value(targets), "mse_regression");
  return mean(g, square(g, sub(g, pred, targets)));
}

Var kl_divergence(Graph& g, Var student_logits, const Tensor& teacher_logits, double tau) {
  require_same_shape(g.value(student_logits), teacher_logits, "kl_divergence");
  const std::size_t rows = teacher_logits.rows();
  const std::size_t cols = teacher_logits.cols();
  const double inv_tau = 1.0 / tau;

  Tensor teacher_scaled(rows, cols);
  for (std::size_t i = 0; i < teacher_scaled.size(); ++i) {
    teacher_scaled.data()[i] = teacher_logits.data()[i] * inv_tau;
  }
  Tensor teacher_log_p(rows, cols);
  kernels::log_softmax_rows(teacher_scaled.data(), teacher_log_p.data(), rows, cols);

  const Var student_scaled = scale(g, student_logits, inv_tau);
  const Tensor& s = g.value(student_scaled);
  std::vector<double> student_log_p(s.size());
  kernels::log_softmax_rows(s.data(), student_log_p, rows, cols);

  double total = 0.0;
  for (std::size_t i = 0; i < student_log_p.size(); ++i) {
    const double lp_t = teacher_log_p.data()[i];
    total += std::exp(lp_t) * (lp_t - student_log_p[i]);
  }
  const auto batch = static_cast<double>(rows);
  return g.record(
      Tensor::scalar(total / batch), {student_scaled},
      [student_scaled, teacher_log_p = std::move(teacher_log_p),
       student_log_p = std::move(student_log_p), batch](Graph& gr, Var self) {
        if (!gr.requires_grad(student_scaled)) return;
        // d/ds KL = (softmax(s) - p_T) / batch
        const double up = gr.grad(self)[0] / batch;
        auto gs = gr.grad(student_scaled);
        for (std::size_t i = 0; i < gs.size(); ++i) {
          gs[i] += up * (std::exp(student_log_p[i]) - std::exp(teacher_log_p.data()[i]));
        }
      },
      "kl_divergence");
}

Var vanilla_kd_loss(Graph& g, Var student_logits, const Tensor& teacher_logits,
                    std::span<const std::size_t> labels, const LossHyper& hyper) {
  hyper.validate();
  require_same_shape(g.value(student_logits), teacher_logits, "vanilla_kd_loss");
  if (hyper.lambda == 1.0) return scale(g, cross_entropy(g, student_logits, labels), 1.0);
  if (hyper.lambda == 0.0) {
    return scale(g, kl_divergence(g, student_logits, teacher_logits, hyper.tau), 1.0);
  }
  const Var ce = cross_entropy(g, student_logits, labels);
  const Var kl = kl_divergence(g, student_logits, teacher_logits, hyper.tau);
  return mix(g, ce, kl, hyper.lambda);
}

Var regression_kd_loss(Graph& g, Var pred, const Tensor& targets, const Tensor& teacher,
                       const LossHyper& hyper) {
  hyper.validate();
  require_same_shape(g.value(pred), targets, "regression_kd_loss");
  require_same_shape(g.value(pred), teacher, "regression_kd_loss");
  if (hyper.lambda == 1.0) return scale(g, mse_regression(g, pred, g.constant(targets)), 1.0);
  if (hyper.lambda == 0.0) return scale(g, mse_regression(g, pred, g.constant(teacher)), 1.0);
  const Var hard = mse_regression(g, pred, g.constant(targets));
  const Var soft = mse_regression(g, pred, g.constant(teacher));
  return mix(g, hard, soft, hyper.lambda);
}

Var scaled_distance(Graph& g, Var student_logits, const Tensor& teacher_logits, double coeff) {
  require_same_shape(g.value(student_logits), teacher_logits, "scaled_distance");
  Tensor target(teacher_logits.rows(), teacher_logits.cols());
  for (std::size_t i = 0; i < target.size(); ++i) {
    target.data()[i] = coeff * teacher_logits.data()[i];
  }
  return sum_rows(g, square(g, sub(g, student_logits, g.constant(std::move(target)))));
}

Var annealing_loss(Graph& g, Var student_logits, const Tensor& teacher_logits, double phi) {
  if (!(phi >= 0.0 && phi <= 1.0)) throw DomainError("annealing_loss: phi must be in [0, 1]");
  return mean(g, scaled_distance(g, student_logits, teacher_logits, phi));
}

Var continuation_kd_loss(Graph& g, Var student_logits, const Tensor& teacher_logits,
                         double phi_teacher, double phi_margin, double margin) {
  if (!(phi_teacher >= 0.0 && phi_teacher <= 1.0) || !(phi_margin >= 0.0 && phi_margin <= 1.0)) {
    throw DomainError("continuation_kd_loss: phi must be in [0, 1]");
  }
  if (!(margin >= 0.0)) throw DomainError("continuation_kd_loss: margin must be >= 0");
  const Var dist = scaled_distance(g, student_logits, teacher_logits, phi_teacher);
  return mean(g, relu(g, add_scalar(g, dist, -(margin * phi_margin))));
}

Var composite_loss(Graph& g, Var hard_loss, Var kd_loss, double psi) {
  if (!(psi >= 0.0 && psi <= 1.0)) throw DomainError("composite_loss: psi must be in [0, 1]");
  if (!g.value(hard_loss).is_scalar() || !g.value(kd_loss).is_scalar()) {
    throw DimensionError("composite_loss: both terms must be scalars");
  }
  return mix(g, hard_loss, kd_loss, psi);
}

}  // namespace ckd
