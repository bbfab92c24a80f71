#include "ckd/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>

#include "ckd/errors.hpp"

namespace ckd {

// ---------------------------------------------------------------------------
// Graph

Var Graph::constant(Tensor value) {
  Node n;
  n.kind = Kind::constant;
  n.owned = std::move(value);
  n.op = "constant";
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Graph::parameter(Tensor& param) {
  Node n;
  n.kind = Kind::parameter;
  n.external = &param;
  n.requires_grad = true;
  n.op = "parameter";
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Graph::frozen(const Tensor& value) {
  Node n;
  n.kind = Kind::frozen;
  n.frozen = &value;
  n.op = "frozen";
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Graph::record(Tensor value, std::vector<Var> inputs, BackwardFn backward,
                  std::string_view op) {
  Node n;
  n.kind = Kind::op;
  n.owned = std::move(value);
  for (const Var in : inputs) {
    if (in.id >= nodes_.size()) throw Error(std::string(op) + ": input from another graph");
    n.requires_grad = n.requires_grad || nodes_[in.id].requires_grad;
  }
  n.inputs = std::move(inputs);
  n.backward = std::move(backward);
  n.op = op;
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

const Graph::Node& Graph::node(Var v) const {
  if (v.id >= nodes_.size()) throw Error("Var does not belong to this graph");
  return nodes_[v.id];
}

Graph::Node& Graph::node(Var v) {
  if (v.id >= nodes_.size()) throw Error("Var does not belong to this graph");
  return nodes_[v.id];
}

const Tensor& Graph::value(Var v) const {
  const Node& n = node(v);
  switch (n.kind) {
    case Kind::parameter:
      return *n.external;
    case Kind::frozen:
      return *n.frozen;
    default:
      return n.owned;
  }
}

double Graph::scalar(Var v) const { return value(v).item(); }

bool Graph::requires_grad(Var v) const { return node(v).requires_grad; }

std::span<double> Graph::grad(Var v) {
  Node& n = node(v);
  if (n.kind == Kind::parameter) return n.external->grad();
  if (n.kind == Kind::frozen) return {};
  return n.owned.grad();
}

std::span<const double> Graph::grad(Var v) const {
  const Node& n = node(v);
  if (n.kind == Kind::parameter) return n.external->grad();
  if (n.kind == Kind::frozen) return {};
  return n.owned.grad();
}

const std::vector<Var>& Graph::inputs(Var v) const { return node(v).inputs; }

std::string_view Graph::op_name(Var v) const { return node(v).op; }

void Graph::backward(Var root) {
  const Tensor& root_value = value(root);
  if (!root_value.is_scalar()) {
    throw DimensionError("backward: root must be a scalar, got " + root_value.shape_string());
  }
  if (!node(root).requires_grad) return;

  // Only nodes the root depends on take part; unrelated branches built on the
  // same tape are left untouched.
  std::vector<char> needed(root.id + 1, 0);
  needed[root.id] = 1;
  for (std::size_t i = root.id + 1; i-- > 0;) {
    if (!needed[i]) continue;
    for (const Var in : nodes_[i].inputs) {
      if (nodes_[in.id].requires_grad) needed[in.id] = 1;
    }
  }
  for (std::size_t i = 0; i <= root.id; ++i) {
    if (needed[i] && nodes_[i].kind == Kind::op) nodes_[i].owned.zero_grad();
  }

  grad(root)[0] += 1.0;
  for (std::size_t i = root.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!needed[i] || n.kind != Kind::op || !n.backward) continue;
    n.backward(*this, Var{i});
  }
}

// ---------------------------------------------------------------------------
// Kernels

namespace kernels {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> out,
            std::size_t m, std::size_t k, std::size_t n) {
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* out_row = out.data() + i * n;
    const double* a_row = a.data() + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double a_ip = a_row[p];
      const double* b_row = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) out_row[j] += a_ip * b_row[j];
    }
  }
}

double log_sum_exp(std::span<const double> values) {
  double peak = -std::numeric_limits<double>::infinity();
  for (const double v : values) peak = std::max(peak, v);
  if (!std::isfinite(peak)) return peak;
  double total = 0.0;
  for (const double v : values) total += std::exp(v - peak);
  return peak + std::log(total);
}

void log_softmax_rows(std::span<const double> in, std::span<double> out, std::size_t rows,
                      std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    const auto row = in.subspan(r * cols, cols);
    const double lse = log_sum_exp(row);
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = row[c] - lse;
  }
}

}  // namespace kernels

// ---------------------------------------------------------------------------
// Ops

namespace {

enum class Broadcast { same, row, column, scalar };

Broadcast broadcast_kind(const Tensor& a, const Tensor& b, std::string_view op) {
  if (a.same_shape(b)) return Broadcast::same;
  if (b.is_scalar()) return Broadcast::scalar;
  if (b.rows() == 1 && b.cols() == a.cols()) return Broadcast::row;
  if (b.cols() == 1 && b.rows() == a.rows()) return Broadcast::column;
  throw DimensionError(std::string(op) + ": shape " + a.shape_string() +
                       " incompatible with " + b.shape_string());
}

std::size_t broadcast_index(Broadcast kind, std::size_t r, std::size_t c, std::size_t cols) {
  switch (kind) {
    case Broadcast::same:
      return r * cols + c;
    case Broadcast::row:
      return c;
    case Broadcast::column:
      return r;
    case Broadcast::scalar:
      return 0;
  }
  return 0;
}

// Elementwise binary op with broadcasting of the second operand. `fwd` maps
// (x, y) to the output; `dx`/`dy` give the local partials at (x, y).
template <typename Fwd, typename Dx, typename Dy>
Var binary_op(Graph& g, Var a, Var b, std::string_view name, Fwd fwd, Dx dx, Dy dy) {
  const Tensor& av = g.value(a);
  const Tensor& bv = g.value(b);
  const Broadcast kind = broadcast_kind(av, bv, name);
  Tensor out(av.rows(), av.cols());
  const std::size_t cols = av.cols();
  for (std::size_t r = 0; r < av.rows(); ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      out(r, c) = fwd(av(r, c), bv.data()[broadcast_index(kind, r, c, cols)]);
    }
  }
  return g.record(
      std::move(out), {a, b},
      [a, b, kind, dx, dy](Graph& gr, Var self) {
        const Tensor& x = gr.value(a);
        const Tensor& y = gr.value(b);
        const auto up = gr.grad(self);
        const std::size_t cols = x.cols();
        const bool need_a = gr.requires_grad(a);
        const bool need_b = gr.requires_grad(b);
        auto ga = gr.grad(a);
        auto gb = gr.grad(b);
        for (std::size_t r = 0; r < x.rows(); ++r) {
          for (std::size_t c = 0; c < cols; ++c) {
            const std::size_t i = r * cols + c;
            const std::size_t j = broadcast_index(kind, r, c, cols);
            const double xv = x.data()[i];
            const double yv = y.data()[j];
            if (need_a) ga[i] += up[i] * dx(xv, yv);
            if (need_b) gb[j] += up[i] * dy(xv, yv);
          }
        }
      },
      name);
}

template <typename Fwd, typename Deriv>
Var unary_op(Graph& g, Var a, std::string_view name, Fwd fwd, Deriv deriv) {
  const Tensor& av = g.value(a);
  Tensor out(av.rows(), av.cols());
  auto od = out.data();
  const auto ad = av.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = fwd(ad[i]);
  return g.record(
      std::move(out), {a},
      [a, deriv](Graph& gr, Var self) {
        if (!gr.requires_grad(a)) return;
        const auto x = gr.value(a).data();
        const auto y = gr.value(self).data();
        const auto up = gr.grad(self);
        auto ga = gr.grad(a);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += up[i] * deriv(x[i], y[i]);
      },
      name);
}

}  // namespace

Var matmul(Graph& g, Var a, Var b) {
  const Tensor& av = g.value(a);
  const Tensor& bv = g.value(b);
  if (av.cols() != bv.rows()) {
    throw DimensionError("matmul: shape " + av.shape_string() + " incompatible with " +
                         bv.shape_string());
  }
  const std::size_t m = av.rows();
  const std::size_t k = av.cols();
  const std::size_t n = bv.cols();
  Tensor out(m, n);
  kernels::matmul(av.data(), bv.data(), out.data(), m, k, n);
  return g.record(
      std::move(out), {a, b},
      [a, b, m, k, n](Graph& gr, Var self) {
        const auto x = gr.value(a).data();
        const auto w = gr.value(b).data();
        const auto up = gr.grad(self);
        if (gr.requires_grad(a)) {
          // dA += dC * B^T
          auto ga = gr.grad(a);
          for (std::size_t i = 0; i < m; ++i) {
            const double* up_row = up.data() + i * n;
            for (std::size_t p = 0; p < k; ++p) {
              const double* w_row = w.data() + p * n;
              double acc = 0.0;
              for (std::size_t j = 0; j < n; ++j) acc += up_row[j] * w_row[j];
              ga[i * k + p] += acc;
            }
          }
        }
        if (gr.requires_grad(b)) {
          // dB += A^T * dC
          auto gb = gr.grad(b);
          for (std::size_t i = 0; i < m; ++i) {
            const double* up_row = up.data() + i * n;
            for (std::size_t p = 0; p < k; ++p) {
              const double x_ip = x[i * k + p];
              double* gb_row = gb.data() + p * n;
              for (std::size_t j = 0; j < n; ++j) gb_row[j] += x_ip * up_row[j];
            }
          }
        }
      },
      "matmul");
}

Var add(Graph& g, Var a, Var b) {
  return binary_op(
      g, a, b, "add", [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Var sub(Graph& g, Var a, Var b) {
  return binary_op(
      g, a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Var mul(Graph& g, Var a, Var b) {
  return binary_op(
      g, a, b, "mul", [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

Var scale(Graph& g, Var a, double c) {
  return unary_op(
      g, a, "scale", [c](double x) { return x * c; }, [c](double, double) { return c; });
}

Var add_scalar(Graph& g, Var a, double c) {
  return unary_op(
      g, a, "add_scalar", [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Var relu(Graph& g, Var a) {
  // Subgradient at the kink is 0.
  return unary_op(
      g, a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var tanh(Graph& g, Var a) {
  return unary_op(
      g, a, "tanh", [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Var square(Graph& g, Var a) {
  return unary_op(
      g, a, "square", [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var sum(Graph& g, Var a) {
  double total = 0.0;
  for (const double v : g.value(a).data()) total += v;
  return g.record(
      Tensor::scalar(total), {a},
      [a](Graph& gr, Var self) {
        if (!gr.requires_grad(a)) return;
        const double up = gr.grad(self)[0];
        for (double& v : gr.grad(a)) v += up;
      },
      "sum");
}

Var mean(Graph& g, Var a) {
  const auto n = static_cast<double>(g.value(a).size());
  double total = 0.0;
  for (const double v : g.value(a).data()) total += v;
  return g.record(
      Tensor::scalar(total / n), {a},
      [a, n](Graph& gr, Var self) {
        if (!gr.requires_grad(a)) return;
        const double up = gr.grad(self)[0] / n;
        for (double& v : gr.grad(a)) v += up;
      },
      "mean");
}

Var sum_rows(Graph& g, Var a) {
  const Tensor& av = g.value(a);
  Tensor out(av.rows(), 1);
  for (std::size_t r = 0; r < av.rows(); ++r) {
    double total = 0.0;
    for (const double v : av.row_span(r)) total += v;
    out(r, 0) = total;
  }
  return g.record(
      std::move(out), {a},
      [a](Graph& gr, Var self) {
        if (!gr.requires_grad(a)) return;
        const auto up = gr.grad(self);
        const std::size_t cols = gr.value(a).cols();
        auto ga = gr.grad(a);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += up[i / cols];
      },
      "sum_rows");
}

Var sum_sq(Graph& g, Var a) {
  double total = 0.0;
  for (const double v : g.value(a).data()) total += v * v;
  return g.record(
      Tensor::scalar(total), {a},
      [a](Graph& gr, Var self) {
        if (!gr.requires_grad(a)) return;
        const double up = gr.grad(self)[0];
        const auto x = gr.value(a).data();
        auto ga = gr.grad(a);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += up * 2.0 * x[i];
      },
      "sum_sq");
}

Var log_sum_exp(Graph& g, Var a, int axis) {
  if (axis != 0 && axis != 1) throw DomainError("log_sum_exp: axis must be 0 or 1");
  const Tensor& av = g.value(a);
  const std::size_t rows = av.rows();
  const std::size_t cols = av.cols();
  Tensor out = axis == 1 ? Tensor(rows, 1) : Tensor(1, cols);
  if (axis == 1) {
    for (std::size_t r = 0; r < rows; ++r) out(r, 0) = kernels::log_sum_exp(av.row_span(r));
  } else {
    std::vector<double> column(rows);
    for (std::size_t c = 0; c < cols; ++c) {
      for (std::size_t r = 0; r < rows; ++r) column[r] = av(r, c);
      out(0, c) = kernels::log_sum_exp(column);
    }
  }
  return g.record(
      std::move(out), {a},
      [a, axis](Graph& gr, Var self) {
        if (!gr.requires_grad(a)) return;
        const Tensor& x = gr.value(a);
        const auto lse = gr.value(self).data();
        const auto up = gr.grad(self);
        auto ga = gr.grad(a);
        for (std::size_t r = 0; r < x.rows(); ++r) {
          for (std::size_t c = 0; c < x.cols(); ++c) {
            const std::size_t o = axis == 1 ? r : c;
            ga[r * x.cols() + c] += up[o] * std::exp(x(r, c) - lse[o]);
          }
        }
      },
      "log_sum_exp");
}

Var log_softmax(Graph& g, Var a) {
  const Tensor& av = g.value(a);
  Tensor out(av.rows(), av.cols());
  kernels::log_softmax_rows(av.data(), out.data(), av.rows(), av.cols());
  return g.record(
      std::move(out), {a},
      [a](Graph& gr, Var self) {
        if (!gr.requires_grad(a)) return;
        const Tensor& y = gr.value(self);
        const auto up = gr.grad(self);
        auto ga = gr.grad(a);
        const std::size_t cols = y.cols();
        for (std::size_t r = 0; r < y.rows(); ++r) {
          double up_total = 0.0;
          for (std::size_t c = 0; c < cols; ++c) up_total += up[r * cols + c];
          for (std::size_t c = 0; c < cols; ++c) {
            const std::size_t i = r * cols + c;
            ga[i] += up[i] - std::exp(y.data()[i]) * up_total;
          }
        }
      },
      "log_softmax");
}

Var gather(Graph& g, Var a, std::span<const std::size_t> indices) {
  const Tensor& av = g.value(a);
  if (indices.size() != av.rows()) {
    throw DimensionError("gather: " + std::to_string(indices.size()) + " indices for shape " +
                         av.shape_string());
  }
  Tensor out(av.rows(), 1);
  for (std::size_t r = 0; r < av.rows(); ++r) {
    if (indices[r] >= av.cols()) {
      throw DomainError("gather: index " + std::to_string(indices[r]) + " out of range for " +
                        av.shape_string());
    }
    out(r, 0) = av(r, indices[r]);
  }
  std::vector<std::size_t> picks(indices.begin(), indices.end());
  return g.record(
      std::move(out), {a},
      [a, picks = std::move(picks)](Graph& gr, Var self) {
        if (!gr.requires_grad(a)) return;
        const std::size_t cols = gr.value(a).cols();
        const auto up = gr.grad(self);
        auto ga = gr.grad(a);
        for (std::size_t r = 0; r < picks.size(); ++r) ga[r * cols + picks[r]] += up[r];
      },
      "gather");
}

}  // namespace ckd
