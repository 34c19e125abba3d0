#pragma once

// Tape-based reverse-mode differentiation over Tensor values.
//
// A Graph records every operation in creation order, which is already a
// topological order, so backward() is a single reverse sweep. Parameters
// enter as leaves bound to a Parameter and receive their gradient in
// Parameter::grad (accumulated, caller zeroes). Inputs created with
// differentiable=true receive gradients readable through Var::grad().

#include <cstddef>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "flowuq/tensor.hpp"

namespace flowuq::ad {

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;  // false for buffers such as running statistics

  void zero_grad() { grad = Tensor(value.shape()); }
};

class Graph;

class Var {
 public:
  Var() = default;
  Var(Graph* g, std::size_t id) : graph_(g), id_(id) {}

  bool valid() const { return graph_ != nullptr; }
  Graph& graph() const { return *graph_; }
  std::size_t id() const { return id_; }

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t size() const { return value().size(); }
  bool requires_grad() const;
  /// Gradient of the last backward() root with respect to this node.
  /// Zero-filled when the node had no downstream use.
  Tensor grad() const;

 private:
  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::size_t self)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);
  Var input(Tensor value, bool differentiable = false);
  Var parameter(Parameter& p);

  /// With gradients disabled nothing is recorded for backward, which keeps
  /// large inference graphs light.
  void set_grad_enabled(bool on) { grad_enabled_ = on; }
  bool grad_enabled() const { return grad_enabled_; }

  /// Records an op. `fn` is dropped when no input requires a gradient.
  Var record(Tensor value, const std::vector<Var>& inputs, BackwardFn fn);

  /// Reverse sweep from a scalar node. Clears node gradients first and
  /// accumulates into the bound Parameters afterwards.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }
  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  bool has_grad(std::size_t id) const { return !nodes_[id].grad.empty(); }
  const Tensor& grad(std::size_t id) const { return nodes_[id].grad; }
  /// Gradient buffer of a node, allocated to zeros on first access.
  Tensor& grad_buffer(std::size_t id);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
  std::unordered_map<Parameter*, std::size_t> param_nodes_;
  bool grad_enabled_ = true;
};

// ---- elementwise and linear algebra ops ----------------------------------

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var scale(Var a, double s);
Var shift(Var a, double s);
Var neg(Var a);
/// a * s for a scalar (size-1) Var s.
Var mul_scalar(Var a, Var s);
Var div_scalar(Var a, Var s);

Var matmul(Var a, Var b);
/// y[b,c,s] = x[b,c,s] * scale[c] + shift[c], viewing x as [B, C, S] with
/// C = dim 1. Either scale or shift may be an invalid (default) Var.
Var affine_channels(Var x, Var scale, Var shift);

Var tanh(Var a);
Var sigmoid(Var a);
Var relu(Var a);
Var leaky_relu(Var a, double slope);
Var softplus(Var a);
Var log_sigmoid(Var a);
Var exp(Var a);
Var log(Var a);
Var square(Var a);
/// Hard clamp; gradient is zero where the clamp is active.
Var clamp(Var a, double lo, double hi);

Var sum(Var a);
Var mean(Var a);
/// Sum over rows of a rank-2 tensor: [n,m] -> [1,m].
Var sum_rows(Var a);
/// Integral of max(0, p) where p linearly interpolates the flat values of
/// `f` on nodes spaced `h` apart. Sign changes inside a segment are resolved
/// exactly.
Var positive_part_integral(Var f, double h);

Var reshape(Var a, Shape shape);
/// out.flat[i] = a.flat[index[i]], shaped `shape`.
Var gather(Var a, std::vector<std::size_t> index, Shape shape);
Var col(Var a, std::size_t j);
Var concat_cols(const std::vector<Var>& parts);
Var concat_rows(const std::vector<Var>& parts);

/// Valid, stride-1 cross-correlation: x[B,C,H,W] * w[O,C,kh,kw].
Var conv2d(Var x, Var w);

struct BatchStats {
  Tensor mean;
  Tensor var;  // biased
};

/// Training-mode batch normalization over all axes except axis 1.
/// Returns normalized-then-affine output and fills `stats`.
Var batch_norm_train(Var x, Var gamma, Var beta, double eps, BatchStats* stats);

}  // namespace flowuq::ad
