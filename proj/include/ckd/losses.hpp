#pragma once

#include <cstddef>
#include <span>

#include "ckd/autodiff.hpp"
#include "ckd/tensor.hpp"

namespace ckd {

/// lambda mixes hard-label and teacher terms of Vanilla-KD, tau softens both
/// distributions, margin is the hinge dead zone of the continuation loss.
struct LossHyper {
  double lambda = 0.5;
  double tau = 2.0;
  double margin = 0.0;

  void validate() const;
};

/// Batch mean of -log softmax(logits)[label], via log-sum-exp.
Var cross_entropy(Graph& g, Var logits, std::span<const std::size_t> labels);

/// Batch mean of squared error; pred and targets are b x 1.
Var mse_regression(Graph& g, Var pred, Var targets);

/// KL(softmax(teacher/tau) || softmax(student/tau)) averaged over the batch.
/// Fused so identical distributions give exactly zero gradient.
Var kl_divergence(Graph& g, Var student_logits, const Tensor& teacher_logits, double tau);

/// lambda * CE(labels, z_S) + (1 - lambda) * KL(z_T/tau || z_S/tau).
Var vanilla_kd_loss(Graph& g, Var student_logits, const Tensor& teacher_logits,
                    std::span<const std::size_t> labels, const LossHyper& hyper);

/// Regression stand-in for Vanilla-KD: lambda * MSE(pred, targets) +
/// (1 - lambda) * MSE(pred, teacher).
Var regression_kd_loss(Graph& g, Var pred, const Tensor& targets, const Tensor& teacher,
                       const LossHyper& hyper);

/// Per-sample squared distance ||z_S - coeff * z_T||^2, b x 1.
Var scaled_distance(Graph& g, Var student_logits, const Tensor& teacher_logits, double coeff);

/// Batch mean of ||z_S - phi z_T||^2 (Annealing-KD stage 1).
Var annealing_loss(Graph& g, Var student_logits, const Tensor& teacher_logits, double phi);

/// Batch mean of max{0, ||z_S - phi_teacher z_T||^2 - margin * phi_margin}; the
/// hinge is applied per sample before averaging.
Var continuation_kd_loss(Graph& g, Var student_logits, const Tensor& teacher_logits,
                         double phi_teacher, double phi_margin, double margin);
inline Var continuation_kd_loss(Graph& g, Var student_logits, const Tensor& teacher_logits,
                                double phi, double margin) {
  return continuation_kd_loss(g, student_logits, teacher_logits, phi, phi, margin);
}

/// psi * hard_loss + (1 - psi) * kd_loss. At psi = 0 (psi = 1) the other term is
/// left out of the graph entirely, so no gradient flows through it.
Var composite_loss(Graph& g, Var hard_loss, Var kd_loss, double psi);

}  // namespace ckd
