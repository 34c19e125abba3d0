#pragma once

// Forward-mode tangents carried as graph nodes.
//
// A Dual pairs a value with directional derivatives (one per seeded input
// direction). Every tangent is itself an ordinary graph Var, so a loss built
// from tangents (for instance a PDE residual needing d/dx and d/dt of a
// network output) is still differentiable by Graph::backward with respect
// to the network parameters.

#include <vector>

#include "flowuq/autodiff.hpp"

namespace flowuq::ad {

struct Dual {
  Var value;
  std::vector<Var> tangents;

  Dual() = default;
  Dual(Var v) : value(v) {}  // NOLINT: constants lift implicitly
  Dual(Var v, std::vector<Var> t) : value(v), tangents(std::move(t)) {}

  std::size_t directions() const { return tangents.size(); }
  const Tensor& val() const { return value.value(); }
};

Dual add(const Dual& a, const Dual& b);
Dual sub(const Dual& a, const Dual& b);
Dual mul(const Dual& a, const Dual& b);
Dual div(const Dual& a, const Dual& b);
Dual scale(const Dual& a, double s);
Dual shift(const Dual& a, double s);
Dual mul_scalar(const Dual& a, Var s);
Dual div_scalar(const Dual& a, Var s);

/// x W + b (b may be invalid).
Dual dense(const Dual& x, Var w, Var b);
Dual affine_channels(const Dual& x, Var scale, Var shift);

Dual tanh(const Dual& a);
Dual sigmoid(const Dual& a);
Dual relu(const Dual& a);
Dual leaky_relu(const Dual& a, double slope);
Dual softplus(const Dual& a);
Dual square(const Dual& a);
Dual clamp(const Dual& a, double lo, double hi);

Dual col(const Dual& a, std::size_t j);
Dual concat_cols(const std::vector<Dual>& parts);

}  // namespace flowuq::ad
