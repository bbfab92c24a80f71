#include "ckd/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "ckd/errors.hpp"

namespace ckd {

namespace {

double evaluate(const LossBuilder& loss_fn) {
  Graph g;
  const double value = g.scalar(loss_fn(g));
  if (!std::isfinite(value)) throw NumericError("grad_check: non-finite loss", 0);
  return value;
}

}  // namespace

double grad_check(const LossBuilder& loss_fn, std::span<Tensor* const> params, double eps) {
  if (!(eps > 0.0)) throw DomainError("grad_check: eps must be positive");

  for (Tensor* p : params) p->zero_grad();
  {
    Graph g;
    const Var loss = loss_fn(g);
    if (!std::isfinite(g.scalar(loss))) throw NumericError("grad_check: non-finite loss", 0);
    g.backward(loss);
  }
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (Tensor* p : params) {
    analytic.emplace_back(p->grad().begin(), p->grad().end());
    p->zero_grad();
  }

  double worst = 0.0;
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto values = params[t]->data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + eps;
      const double plus = evaluate(loss_fn);
      values[i] = saved - eps;
      const double minus = evaluate(loss_fn);
      values[i] = saved;
      const double numeric = (plus - minus) / (2.0 * eps);
      const double a = analytic[t][i];
      const double err = std::abs(a - numeric) / std::max(1e-12, std::abs(a) + std::abs(numeric));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace ckd
