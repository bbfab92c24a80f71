#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "ckd/tensor.hpp"

namespace ckd {

/// Handle to a node of a Graph. Only meaningful for the graph that issued it.
struct Var {
  std::size_t id = 0;
};

/// Append-only tape for reverse-mode differentiation.
///
/// Nodes are stored in insertion order, which is also a topological order:
/// an op can only consume nodes that already exist. backward() walks the tape
/// in exact reverse order.
///
/// Three kinds of leaves:
///  - constant(): owned copy, never receives gradient.
///  - parameter(): references an external Tensor, gradient accumulates into
///    that tensor's grad buffer. The tensor must outlive the graph.
///  - frozen(): references an external Tensor read-only, no gradient.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, Var)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) = default;
  Graph& operator=(Graph&&) = default;

  Var constant(Tensor value);
  Var parameter(Tensor& param);
  Var frozen(const Tensor& value);

  /// Appends an op node. `backward` receives the graph and the new node and
  /// must accumulate into the gradients of the node's inputs that require it.
  Var record(Tensor value, std::vector<Var> inputs, BackwardFn backward, std::string_view op);

  const Tensor& value(Var v) const;
  double scalar(Var v) const;
  bool requires_grad(Var v) const;
  std::span<double> grad(Var v);
  std::span<const double> grad(Var v) const;
  const std::vector<Var>& inputs(Var v) const;
  std::string_view op_name(Var v) const;
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Seeds d(root)/d(root) = 1 and propagates to every node the root depends
  /// on. Intermediate gradients are reset on each call; parameter gradients
  /// accumulate across calls until the caller zeroes them.
  void backward(Var root);

 private:
  enum class Kind { constant, parameter, frozen, op };

  struct Node {
    Kind kind = Kind::constant;
    Tensor owned;
    Tensor* external = nullptr;
    const Tensor* frozen = nullptr;
    bool requires_grad = false;
    std::vector<Var> inputs;
    BackwardFn backward;
    std::string_view op;
  };

  const Node& node(Var v) const;
  Node& node(Var v);

  std::vector<Node> nodes_;
};

// Primitive ops. Binary elementwise ops accept the second operand with the same
// shape as the first, or broadcast as a 1xN row, an Mx1 column or a 1x1 scalar.

Var matmul(Graph& g, Var a, Var b);
Var add(Graph& g, Var a, Var b);
Var sub(Graph& g, Var a, Var b);
Var mul(Graph& g, Var a, Var b);
Var scale(Graph& g, Var a, double c);
Var add_scalar(Graph& g, Var a, double c);
Var relu(Graph& g, Var a);
Var tanh(Graph& g, Var a);
Var square(Graph& g, Var a);
/// Sum of all entries, 1x1.
Var sum(Graph& g, Var a);
/// Mean of all entries, 1x1.
Var mean(Graph& g, Var a);
/// Per-row sums, Mx1.
Var sum_rows(Graph& g, Var a);
/// Sum of squared entries, 1x1.
Var sum_sq(Graph& g, Var a);
/// Stable log-sum-exp along `axis` (0: down columns -> 1xN, 1: across rows -> Mx1).
Var log_sum_exp(Graph& g, Var a, int axis);
/// Row-wise log-softmax.
Var log_softmax(Graph& g, Var a);
/// Picks a(i, indices[i]) for each row, Mx1.
Var gather(Graph& g, Var a, std::span<const std::size_t> indices);

namespace kernels {

/// out = a * b for row-major a (m x k), b (k x n). out must be m x n.
void matmul(std::span<const double> a, std::span<const double> b, std::span<double> out,
            std::size_t m, std::size_t k, std::size_t n);

double log_sum_exp(std::span<const double> values);

/// Row-wise log-softmax of an m x n block; the arithmetic shared by the
/// log_softmax op and by code that precomputes detached teacher targets.
void log_softmax_rows(std::span<const double> in, std::span<double> out, std::size_t rows,
                      std::size_t cols);

}  // namespace kernels

}  // namespace ckd
