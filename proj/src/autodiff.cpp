#include "flowuq/autodiff.hpp"

#include <cmath>

#include "flowuq/kernels.hpp"

namespace flowuq::ad {

namespace k = kernels::parallel;

const Tensor& Var::value() const { return graph_->value(id_); }
bool Var::requires_grad() const { return graph_->requires_grad(id_); }

Tensor Var::grad() const {
  if (graph_->has_grad(id_)) return graph_->grad(id_);
  return Tensor(value().shape());
}

Var Graph::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, nullptr, false});
  return Var(this, nodes_.size() - 1);
}

Var Graph::input(Tensor value, bool differentiable) {
  nodes_.push_back(Node{std::move(value), {}, {}, nullptr, differentiable});
  return Var(this, nodes_.size() - 1);
}

Var Graph::parameter(Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var(this, it->second);
  nodes_.push_back(Node{p.value, {}, {}, &p, p.trainable && grad_enabled_});
  param_nodes_[&p] = nodes_.size() - 1;
  return Var(this, nodes_.size() - 1);
}

Var Graph::record(Tensor value, const std::vector<Var>& inputs, BackwardFn fn) {
  bool rg = false;
  for (const auto& v : inputs) {
    if (grad_enabled_ && v.valid() && v.requires_grad()) rg = true;
  }
  nodes_.push_back(Node{std::move(value), {}, rg ? std::move(fn) : BackwardFn{}, nullptr, rg});
  return Var(this, nodes_.size() - 1);
}

Tensor& Graph::grad_buffer(std::size_t id) {
  auto& n = nodes_[id];
  if (n.grad.empty()) n.grad = Tensor(n.value.shape());
  return n.grad;
}

void Graph::backward(Var loss) {
  if (loss.size() != 1) {
    throw DimensionError("backward: loss must be scalar, got shape " +
                         shape_to_string(loss.shape()));
  }
  for (auto& n : nodes_) n.grad = Tensor();
  grad_buffer(loss.id())[0] = 1.0;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    auto& n = nodes_[i];
    if (n.grad.empty() || !n.backward) continue;
    n.backward(*this, i);
  }
  for (auto& n : nodes_) {
    if (!n.param || n.grad.empty() || !n.param->trainable) continue;
    if (n.param->grad.empty()) n.param->zero_grad();
    n.param->grad += n.grad;
  }
}

namespace {

Graph& graph_of(Var a) { return a.graph(); }

// Adds delta into the gradient of v when v participates in differentiation.
void accumulate(Graph& g, Var v, const Tensor& delta) {
  if (!v.valid() || !g.requires_grad(v.id())) return;
  g.grad_buffer(v.id()) += delta;
}

void require_same(Var a, Var b, const char* op) { require_same_shape(a.value(), b.value(), op); }

template <class Fwd, class Deriv>
Var unary(Var a, Fwd f, Deriv df) {
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  return graph_of(a).record(std::move(y), {a}, [a, df](Graph& g, std::size_t self) {
    const Tensor& x = g.value(a.id());
    const Tensor& y = g.value(self);
    const Tensor& gy = g.grad(self);
    Tensor& gx = g.grad_buffer(a.id());
    for (std::size_t i = 0; i < x.size(); ++i) gx[i] += gy[i] * df(x[i], y[i]);
  });
}

double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus_scalar(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

void require_scalar(Var s, const char* op) {
  if (s.size() != 1) {
    throw DimensionError(std::string(op) + ": expected scalar, got " +
                         shape_to_string(s.shape()));
  }
}

}  // namespace

Var add(Var a, Var b) {
  require_same(a, b, "add");
  Tensor y = a.value();
  y += b.value();
  return graph_of(a).record(std::move(y), {a, b}, [a, b](Graph& g, std::size_t self) {
    accumulate(g, a, g.grad(self));
    accumulate(g, b, g.grad(self));
  });
}

Var sub(Var a, Var b) {
  require_same(a, b, "sub");
  Tensor y = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= bv[i];
  return graph_of(a).record(std::move(y), {a, b}, [a, b](Graph& g, std::size_t self) {
    accumulate(g, a, g.grad(self));
    if (g.requires_grad(b.id())) {
      Tensor d = g.grad(self);
      d *= -1.0;
      accumulate(g, b, d);
    }
  });
}

Var mul(Var a, Var b) {
  require_same(a, b, "mul");
  Tensor y = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= bv[i];
  return graph_of(a).record(std::move(y), {a, b}, [a, b](Graph& g, std::size_t self) {
    const Tensor& gy = g.grad(self);
    const Tensor& av = g.value(a.id());
    const Tensor& bv = g.value(b.id());
    if (g.requires_grad(a.id())) {
      Tensor& ga = g.grad_buffer(a.id());
      for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * bv[i];
    }
    if (g.requires_grad(b.id())) {
      Tensor& gb = g.grad_buffer(b.id());
      for (std::size_t i = 0; i < gy.size(); ++i) gb[i] += gy[i] * av[i];
    }
  });
}

Var div(Var a, Var b) {
  require_same(a, b, "div");
  Tensor y = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] /= bv[i];
  return graph_of(a).record(std::move(y), {a, b}, [a, b](Graph& g, std::size_t self) {
    const Tensor& gy = g.grad(self);
    const Tensor& yv = g.value(self);
    const Tensor& bv = g.value(b.id());
    if (g.requires_grad(a.id())) {
      Tensor& ga = g.grad_buffer(a.id());
      for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] / bv[i];
    }
    if (g.requires_grad(b.id())) {
      Tensor& gb = g.grad_buffer(b.id());
      for (std::size_t i = 0; i < gy.size(); ++i) gb[i] -= gy[i] * yv[i] / bv[i];
    }
  });
}

Var scale(Var a, double s) {
  return unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var shift(Var a, double s) {
  return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var neg(Var a) { return scale(a, -1.0); }

Var mul_scalar(Var a, Var s) {
  require_scalar(s, "mul_scalar");
  Tensor y = a.value();
  y *= s.value()[0];
  return graph_of(a).record(std::move(y), {a, s}, [a, s](Graph& g, std::size_t self) {
    const Tensor& gy = g.grad(self);
    if (g.requires_grad(a.id())) {
      Tensor d = gy;
      d *= g.value(s.id())[0];
      accumulate(g, a, d);
    }
    if (g.requires_grad(s.id())) {
      const Tensor& av = g.value(a.id());
      double acc = 0.0;
      for (std::size_t i = 0; i < gy.size(); ++i) acc += gy[i] * av[i];
      g.grad_buffer(s.id())[0] += acc;
    }
  });
}

Var div_scalar(Var a, Var s) {
  require_scalar(s, "div_scalar");
  Tensor y = a.value();
  y *= 1.0 / s.value()[0];
  return graph_of(a).record(std::move(y), {a, s}, [a, s](Graph& g, std::size_t self) {
    const Tensor& gy = g.grad(self);
    const double sv = g.value(s.id())[0];
    if (g.requires_grad(a.id())) {
      Tensor d = gy;
      d *= 1.0 / sv;
      accumulate(g, a, d);
    }
    if (g.requires_grad(s.id())) {
      const Tensor& yv = g.value(self);
      double acc = 0.0;
      for (std::size_t i = 0; i < gy.size(); ++i) acc += gy[i] * yv[i];
      g.grad_buffer(s.id())[0] -= acc / sv;
    }
  });
}

Var matmul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.cols() != bv.rows()) {
    throw DimensionError("matmul: incompatible shapes " + shape_to_string(av.shape()) + " and " +
                         shape_to_string(bv.shape()));
  }
  const std::size_t n = av.rows(), kk = av.cols(), m = bv.cols();
  Tensor y({n, m});
  k::gemm(av.values(), bv.values(), y.values(), n, kk, m);
  return graph_of(a).record(std::move(y), {a, b}, [a, b, n, kk, m](Graph& g, std::size_t self) {
    const Tensor& gy = g.grad(self);
    if (g.requires_grad(a.id())) {
      Tensor d({n, kk});
      k::gemm_nt(gy.values(), g.value(b.id()).values(), d.values(), n, kk, m);
      accumulate(g, a, d);
    }
    if (g.requires_grad(b.id())) {
      Tensor d({kk, m});
      k::gemm_tn(g.value(a.id()).values(), gy.values(), d.values(), n, kk, m);
      accumulate(g, b, d);
    }
  });
}

Var affine_channels(Var x, Var scale_v, Var shift_v) {
  const Tensor& xv = x.value();
  if (xv.rank() < 2) throw DimensionError("affine_channels: rank < 2 input " + shape_to_string(xv.shape()));
  const std::size_t batch = xv.dim(0), ch = xv.dim(1), inner = xv.size() / (batch * ch);
  if (scale_v.valid() && scale_v.size() != ch) {
    throw DimensionError("affine_channels: scale " + shape_to_string(scale_v.shape()) +
                         " vs input " + shape_to_string(xv.shape()));
  }
  if (shift_v.valid() && shift_v.size() != ch) {
    throw DimensionError("affine_channels: shift " + shape_to_string(shift_v.shape()) +
                         " vs input " + shape_to_string(xv.shape()));
  }
  Tensor y = xv;
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < ch; ++c) {
      const double sc = scale_v.valid() ? scale_v.value()[c] : 1.0;
      const double sh = shift_v.valid() ? shift_v.value()[c] : 0.0;
      double* p = y.data() + (b * ch + c) * inner;
      for (std::size_t s = 0; s < inner; ++s) p[s] = p[s] * sc + sh;
    }
  std::vector<Var> ins{x};
  if (scale_v.valid()) ins.push_back(scale_v);
  if (shift_v.valid()) ins.push_back(shift_v);
  return graph_of(x).record(
      std::move(y), ins, [x, scale_v, shift_v, batch, ch, inner](Graph& g, std::size_t self) {
        const Tensor& gy = g.grad(self);
        if (g.requires_grad(x.id())) {
          Tensor& gx = g.grad_buffer(x.id());
          for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t c = 0; c < ch; ++c) {
              const double sc = scale_v.valid() ? g.value(scale_v.id())[c] : 1.0;
              const std::size_t off = (b * ch + c) * inner;
              for (std::size_t s = 0; s < inner; ++s) gx[off + s] += gy[off + s] * sc;
            }
        }
        if (scale_v.valid() && g.requires_grad(scale_v.id())) {
          const Tensor& xv = g.value(x.id());
          Tensor& gs = g.grad_buffer(scale_v.id());
          for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t c = 0; c < ch; ++c) {
              const std::size_t off = (b * ch + c) * inner;
              for (std::size_t s = 0; s < inner; ++s) gs[c] += gy[off + s] * xv[off + s];
            }
        }
        if (shift_v.valid() && g.requires_grad(shift_v.id())) {
          Tensor& gb = g.grad_buffer(shift_v.id());
          for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t c = 0; c < ch; ++c) {
              const std::size_t off = (b * ch + c) * inner;
              for (std::size_t s = 0; s < inner; ++s) gb[c] += gy[off + s];
            }
        }
      });
}

Var tanh(Var a) {
  return unary(a, [](double x) { return std::tanh(x); },
               [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var a) {
  return unary(a, sigmoid_scalar, [](double, double y) { return y * (1.0 - y); });
}

Var relu(Var a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var leaky_relu(Var a, double slope) {
  return unary(a, [slope](double x) { return x > 0.0 ? x : slope * x; },
               [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

Var softplus(Var a) {
  return unary(a, softplus_scalar, [](double x, double) { return sigmoid_scalar(x); });
}

Var log_sigmoid(Var a) {
  return unary(a, [](double x) { return -softplus_scalar(-x); },
               [](double x, double) { return sigmoid_scalar(-x); });
}

Var exp(Var a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var square(Var a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var clamp(Var a, double lo, double hi) {
  return unary(a, [lo, hi](double x) { return x < lo ? lo : (x > hi ? hi : x); },
               [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Var sum(Var a) {
  double acc = 0.0;
  for (double v : a.value().values()) acc += v;
  return graph_of(a).record(Tensor::scalar(acc), {a}, [a](Graph& g, std::size_t self) {
    const double gy = g.grad(self)[0];
    Tensor& ga = g.grad_buffer(a.id());
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gy;
  });
}

namespace {

// Area of max(0, p) over one segment of width h, p linear from a to b, and
// its partial derivatives.
struct SegmentArea {
  double area = 0.0, da = 0.0, db = 0.0;
};

SegmentArea positive_segment(double a, double b, double h) {
  if (a >= 0.0 && b >= 0.0) return {0.5 * h * (a + b), 0.5 * h, 0.5 * h};
  if (a <= 0.0 && b <= 0.0) return {};
  if (a > 0.0) {
    const double d = a - b;
    return {0.5 * h * a * a / d, 0.5 * h * (a * a - 2.0 * a * b) / (d * d),
            0.5 * h * a * a / (d * d)};
  }
  const double d = b - a;
  return {0.5 * h * b * b / d, 0.5 * h * b * b / (d * d),
          0.5 * h * (b * b - 2.0 * a * b) / (d * d)};
}

}  // namespace

Var positive_part_integral(Var f, double h) {
  const Tensor& fv = f.value();
  if (fv.size() < 2) throw DimensionError("positive_part_integral: need at least two nodes");
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < fv.size(); ++i) acc += positive_segment(fv[i], fv[i + 1], h).area;
  return graph_of(f).record(Tensor::scalar(acc), {f}, [f, h](Graph& g, std::size_t self) {
    const double gy = g.grad(self)[0];
    const Tensor& v = g.value(f.id());
    Tensor& gf = g.grad_buffer(f.id());
    for (std::size_t i = 0; i + 1 < v.size(); ++i) {
      const SegmentArea s = positive_segment(v[i], v[i + 1], h);
      gf[i] += gy * s.da;
      gf[i + 1] += gy * s.db;
    }
  });
}

Var mean(Var a) {
  if (a.size() == 0) throw DimensionError("mean: empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Var sum_rows(Var a) {
  const Tensor& av = a.value();
  require_rank(av, 2, "sum_rows");
  const std::size_t n = av.rows(), m = av.cols();
  Tensor y({1, m});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) y[j] += av.at(i, j);
  return graph_of(a).record(std::move(y), {a}, [a, n, m](Graph& g, std::size_t self) {
    const Tensor& gy = g.grad(self);
    Tensor& ga = g.grad_buffer(a.id());
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) ga[i * m + j] += gy[j];
  });
}

Var reshape(Var a, Shape shape) {
  Tensor y = a.value().reshaped(std::move(shape));
  return graph_of(a).record(std::move(y), {a}, [a](Graph& g, std::size_t self) {
    const Tensor& gy = g.grad(self);
    Tensor& ga = g.grad_buffer(a.id());
    for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i];
  });
}

Var gather(Var a, std::vector<std::size_t> index, Shape shape) {
  if (shape_size(shape) != index.size()) {
    throw DimensionError("gather: " + std::to_string(index.size()) + " indices for shape " +
                         shape_to_string(shape));
  }
  const Tensor& av = a.value();
  Tensor y(std::move(shape));
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= av.size()) throw DimensionError("gather: index out of range");
    y[i] = av[index[i]];
  }
  return graph_of(a).record(std::move(y), {a},
                            [a, idx = std::move(index)](Graph& g, std::size_t self) {
                              const Tensor& gy = g.grad(self);
                              Tensor& ga = g.grad_buffer(a.id());
                              for (std::size_t i = 0; i < idx.size(); ++i) ga[idx[i]] += gy[i];
                            });
}

Var col(Var a, std::size_t j) {
  const Tensor& av = a.value();
  require_rank(av, 2, "col");
  if (j >= av.cols()) throw DimensionError("col: column out of range");
  std::vector<std::size_t> idx(av.rows());
  for (std::size_t i = 0; i < av.rows(); ++i) idx[i] = i * av.cols() + j;
  return gather(a, std::move(idx), {av.rows(), 1});
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t n = parts.front().value().rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_rank(p.value(), 2, "concat_cols");
    if (p.value().rows() != n) {
      throw DimensionError("concat_cols: row mismatch " + shape_to_string(p.shape()) + " vs " +
                           std::to_string(n) + " rows");
    }
    widths.push_back(p.value().cols());
    total += widths.back();
  }
  Tensor y({n, total});
  std::size_t off = 0;
  for (std::size_t q = 0; q < parts.size(); ++q) {
    const Tensor& pv = parts[q].value();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < widths[q]; ++j) y[i * total + off + j] = pv[i * widths[q] + j];
    off += widths[q];
  }
  return graph_of(parts.front())
      .record(std::move(y), parts, [parts, widths, n, total](Graph& g, std::size_t self) {
        const Tensor& gy = g.grad(self);
        std::size_t off = 0;
        for (std::size_t q = 0; q < parts.size(); ++q) {
          if (g.requires_grad(parts[q].id())) {
            Tensor& gp = g.grad_buffer(parts[q].id());
            for (std::size_t i = 0; i < n; ++i)
              for (std::size_t j = 0; j < widths[q]; ++j)
                gp[i * widths[q] + j] += gy[i * total + off + j];
          }
          off += widths[q];
        }
      });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const std::size_t m = parts.front().value().cols();
  std::size_t rows = 0;
  for (const auto& p : parts) {
    require_rank(p.value(), 2, "concat_rows");
    if (p.value().cols() != m) {
      throw DimensionError("concat_rows: column mismatch " + shape_to_string(p.shape()));
    }
    rows += p.value().rows();
  }
  Tensor y({rows, m});
  std::size_t off = 0;
  for (const auto& p : parts) {
    for (double v : p.value().values()) y[off++] = v;
  }
  return graph_of(parts.front()).record(std::move(y), parts, [parts](Graph& g, std::size_t self) {
    const Tensor& gy = g.grad(self);
    std::size_t off = 0;
    for (const auto& p : parts) {
      const std::size_t len = g.value(p.id()).size();
      if (g.requires_grad(p.id())) {
        Tensor& gp = g.grad_buffer(p.id());
        for (std::size_t i = 0; i < len; ++i) gp[i] += gy[off + i];
      }
      off += len;
    }
  });
}

Var conv2d(Var x, Var w) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  if (xv.rank() != 4 || wv.rank() != 4 || xv.dim(1) != wv.dim(1)) {
    throw DimensionError("conv2d: input " + shape_to_string(xv.shape()) + " incompatible with kernel " +
                         shape_to_string(wv.shape()));
  }
  if (wv.dim(2) > xv.dim(2) || wv.dim(3) > xv.dim(3)) {
    throw DimensionError("conv2d: kernel " + shape_to_string(wv.shape()) +
                         " larger than input " + shape_to_string(xv.shape()));
  }
  const kernels::ConvDims d{xv.dim(0), xv.dim(1), xv.dim(2), xv.dim(3),
                            wv.dim(0), wv.dim(2), wv.dim(3)};
  Tensor y({d.batch, d.ch_out, d.out_h(), d.out_w()});
  k::conv2d_forward(xv.values(), wv.values(), y.values(), d);
  return graph_of(x).record(std::move(y), {x, w}, [x, w, d](Graph& g, std::size_t self) {
    const Tensor& gy = g.grad(self);
    if (g.requires_grad(x.id())) {
      Tensor gx(g.value(x.id()).shape());
      k::conv2d_backward_input(gy.values(), g.value(w.id()).values(), gx.values(), d);
      accumulate(g, x, gx);
    }
    if (g.requires_grad(w.id())) {
      Tensor gw(g.value(w.id()).shape());
      k::conv2d_backward_kernel(g.value(x.id()).values(), gy.values(), gw.values(), d);
      accumulate(g, w, gw);
    }
  });
}

Var batch_norm_train(Var x, Var gamma, Var beta, double eps, BatchStats* stats) {
  const Tensor& xv = x.value();
  if (xv.rank() < 2) throw DimensionError("batch_norm: rank < 2 input " + shape_to_string(xv.shape()));
  const std::size_t batch = xv.dim(0), ch = xv.dim(1), inner = xv.size() / (batch * ch);
  const std::size_t count = batch * inner;
  if (batch < 2) {
    throw DimensionError("batch_norm: degenerate batch of size 1 in train mode");
  }
  if (gamma.size() != ch || beta.size() != ch) {
    throw DimensionError("batch_norm: scale/shift do not match " + std::to_string(ch) + " channels");
  }
  Tensor mu({ch}), var({ch});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < ch; ++c)
      for (std::size_t s = 0; s < inner; ++s) mu[c] += xv[(b * ch + c) * inner + s];
  for (std::size_t c = 0; c < ch; ++c) mu[c] /= static_cast<double>(count);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < ch; ++c)
      for (std::size_t s = 0; s < inner; ++s) {
        const double dlt = xv[(b * ch + c) * inner + s] - mu[c];
        var[c] += dlt * dlt;
      }
  for (std::size_t c = 0; c < ch; ++c) var[c] /= static_cast<double>(count);

  Tensor xhat(xv.shape());
  Tensor inv_std({ch});
  for (std::size_t c = 0; c < ch; ++c) inv_std[c] = 1.0 / std::sqrt(var[c] + eps);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < ch; ++c)
      for (std::size_t s = 0; s < inner; ++s) {
        const std::size_t i = (b * ch + c) * inner + s;
        xhat[i] = (xv[i] - mu[c]) * inv_std[c];
      }
  if (stats) *stats = BatchStats{mu, var};

  Graph& g0 = graph_of(x);
  // x̂ is a node of its own so affine_channels supplies the gamma/beta gradients.
  Var xhat_v = g0.record(
      std::move(xhat), {x}, [x, inv_std, batch, ch, inner, count](Graph& g, std::size_t self) {
        const Tensor& gxh = g.grad(self);
        const Tensor& xh = g.value(self);
        Tensor& gx = g.grad_buffer(x.id());
        const double n = static_cast<double>(count);
        for (std::size_t c = 0; c < ch; ++c) {
          double sum_g = 0.0, sum_gx = 0.0;
          for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t s = 0; s < inner; ++s) {
              const std::size_t i = (b * ch + c) * inner + s;
              sum_g += gxh[i];
              sum_gx += gxh[i] * xh[i];
            }
          for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t s = 0; s < inner; ++s) {
              const std::size_t i = (b * ch + c) * inner + s;
              gx[i] += inv_std[c] / n * (n * gxh[i] - sum_g - xh[i] * sum_gx);
            }
        }
      });
  return affine_channels(xhat_v, gamma, beta);
}

}  // namespace flowuq::ad
