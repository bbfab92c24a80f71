#pragma once

#include <functional>
#include <span>

#include "ckd/autodiff.hpp"

namespace ckd {

/// Builds a scalar loss on a fresh graph. Must register every tensor being
/// checked through Graph::parameter and must be deterministic.
using LossBuilder = std::function<Var(Graph&)>;

/// Compares reverse-mode gradients against central differences with step
/// `eps` and returns the largest
///   |analytic - numeric| / max(1e-12, |analytic| + |numeric|)
/// over every entry of every tensor in `params`. Parameter values are
/// restored and their grads left zeroed. Throws NumericError on a non-finite
/// loss and DomainError if eps <= 0.
double grad_check(const LossBuilder& loss_fn, std::span<Tensor* const> params, double eps = 1e-5);

}  // namespace ckd
