#include "flowuq/dual.hpp"

#include <stdexcept>

namespace flowuq::ad {

namespace {

std::size_t common_directions(const Dual& a, const Dual& b) {
  if (!a.tangents.empty() && !b.tangents.empty() && a.directions() != b.directions()) {
    throw DimensionError("dual: operands carry different tangent counts");
  }
  return std::max(a.directions(), b.directions());
}

// Elementwise derivative factor applied to every tangent.
Dual chain(const Dual& a, Var y, Var dy_dx) {
  Dual out(y);
  for (const auto& t : a.tangents) out.tangents.push_back(mul(t, dy_dx));
  return out;
}

Tensor mask_of(const Tensor& x, double inside, double outside, auto pred) {
  Tensor m(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) m[i] = pred(x[i]) ? inside : outside;
  return m;
}

}  // namespace

Dual add(const Dual& a, const Dual& b) {
  const std::size_t n = common_directions(a, b);
  Dual out(add(a.value, b.value));
  for (std::size_t i = 0; i < n; ++i) {
    if (a.tangents.empty()) out.tangents.push_back(b.tangents[i]);
    else if (b.tangents.empty()) out.tangents.push_back(a.tangents[i]);
    else out.tangents.push_back(add(a.tangents[i], b.tangents[i]));
  }
  return out;
}

Dual sub(const Dual& a, const Dual& b) {
  const std::size_t n = common_directions(a, b);
  Dual out(sub(a.value, b.value));
  for (std::size_t i = 0; i < n; ++i) {
    if (a.tangents.empty()) out.tangents.push_back(neg(b.tangents[i]));
    else if (b.tangents.empty()) out.tangents.push_back(a.tangents[i]);
    else out.tangents.push_back(sub(a.tangents[i], b.tangents[i]));
  }
  return out;
}

Dual mul(const Dual& a, const Dual& b) {
  const std::size_t n = common_directions(a, b);
  Dual out(mul(a.value, b.value));
  for (std::size_t i = 0; i < n; ++i) {
    if (a.tangents.empty()) out.tangents.push_back(mul(a.value, b.tangents[i]));
    else if (b.tangents.empty()) out.tangents.push_back(mul(a.tangents[i], b.value));
    else out.tangents.push_back(add(mul(a.tangents[i], b.value), mul(a.value, b.tangents[i])));
  }
  return out;
}

Dual div(const Dual& a, const Dual& b) {
  const std::size_t n = common_directions(a, b);
  Var y = div(a.value, b.value);
  Dual out(y);
  for (std::size_t i = 0; i < n; ++i) {
    if (b.tangents.empty()) {
      out.tangents.push_back(div(a.tangents[i], b.value));
    } else {
      Var num = mul(y, b.tangents[i]);
      if (!a.tangents.empty()) num = sub(a.tangents[i], num);
      else num = neg(num);
      out.tangents.push_back(div(num, b.value));
    }
  }
  return out;
}

Dual scale(const Dual& a, double s) {
  Dual out(scale(a.value, s));
  for (const auto& t : a.tangents) out.tangents.push_back(scale(t, s));
  return out;
}

Dual shift(const Dual& a, double s) { return Dual(shift(a.value, s), a.tangents); }

Dual mul_scalar(const Dual& a, Var s) {
  Dual out(mul_scalar(a.value, s));
  for (const auto& t : a.tangents) out.tangents.push_back(mul_scalar(t, s));
  return out;
}

Dual div_scalar(const Dual& a, Var s) {
  Dual out(div_scalar(a.value, s));
  for (const auto& t : a.tangents) out.tangents.push_back(div_scalar(t, s));
  return out;
}

Dual dense(const Dual& x, Var w, Var b) {
  Var y = matmul(x.value, w);
  if (b.valid()) y = affine_channels(y, Var{}, b);
  Dual out(y);
  for (const auto& t : x.tangents) out.tangents.push_back(matmul(t, w));
  return out;
}

Dual affine_channels(const Dual& x, Var sc, Var sh) {
  Dual out(affine_channels(x.value, sc, sh));
  for (const auto& t : x.tangents) {
    out.tangents.push_back(sc.valid() ? affine_channels(t, sc, Var{}) : t);
  }
  return out;
}

Dual tanh(const Dual& a) {
  Var y = tanh(a.value);
  if (a.tangents.empty()) return Dual(y);
  return chain(a, y, shift(neg(square(y)), 1.0));
}

Dual sigmoid(const Dual& a) {
  Var y = sigmoid(a.value);
  if (a.tangents.empty()) return Dual(y);
  return chain(a, y, mul(y, shift(neg(y), 1.0)));
}

Dual relu(const Dual& a) {
  Var y = relu(a.value);
  if (a.tangents.empty()) return Dual(y);
  Var m = y.graph().constant(mask_of(a.val(), 1.0, 0.0, [](double v) { return v > 0.0; }));
  return chain(a, y, m);
}

Dual leaky_relu(const Dual& a, double slope) {
  Var y = leaky_relu(a.value, slope);
  if (a.tangents.empty()) return Dual(y);
  Var m = y.graph().constant(mask_of(a.val(), 1.0, slope, [](double v) { return v > 0.0; }));
  return chain(a, y, m);
}

Dual softplus(const Dual& a) {
  Var y = softplus(a.value);
  if (a.tangents.empty()) return Dual(y);
  return chain(a, y, sigmoid(a.value));
}

Dual square(const Dual& a) {
  Var y = square(a.value);
  if (a.tangents.empty()) return Dual(y);
  return chain(a, y, scale(a.value, 2.0));
}

Dual clamp(const Dual& a, double lo, double hi) {
  Var y = clamp(a.value, lo, hi);
  if (a.tangents.empty()) return Dual(y);
  Var m = y.graph().constant(
      mask_of(a.val(), 1.0, 0.0, [lo, hi](double v) { return v >= lo && v <= hi; }));
  return chain(a, y, m);
}

Dual col(const Dual& a, std::size_t j) {
  Dual out(col(a.value, j));
  for (const auto& t : a.tangents) out.tangents.push_back(col(t, j));
  return out;
}

Dual concat_cols(const std::vector<Dual>& parts) {
  std::size_t n = 0;
  for (const auto& p : parts) {
    if (p.directions() == 0) continue;
    if (n && p.directions() != n) throw DimensionError("concat_cols: mixed tangent counts");
    n = p.directions();
  }
  std::vector<Var> values;
  for (const auto& p : parts) values.push_back(p.value);
  Dual out(concat_cols(values));
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<Var> ts;
    for (const auto& p : parts) {
      if (p.tangents.empty()) {
        ts.push_back(p.value.graph().constant(Tensor(p.val().shape())));
      } else {
        ts.push_back(p.tangents[i]);
      }
    }
    out.tangents.push_back(concat_cols(ts));
  }
  return out;
}

}  // namespace flowuq::ad
