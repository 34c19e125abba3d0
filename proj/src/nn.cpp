#include "flowuq/nn.hpp"

#include <cmath>

namespace flowuq::nn {

std::size_t ParameterStore::add(std::string name, Tensor value, bool trainable) {
  if (find(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  Parameter p{std::move(name), std::move(value), {}, trainable};
  p.zero_grad();
  params_.push_back(std::move(p));
  return params_.size() - 1;
}

Parameter* ParameterStore::find(const std::string& name) {
  for (auto& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

std::vector<Parameter*> ParameterStore::trainable() {
  std::vector<Parameter*> out;
  for (auto& p : params_) {
    if (p.trainable) out.push_back(&p);
  }
  return out;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

TensorMap ParameterStore::export_values() const {
  TensorMap out;
  for (const auto& p : params_) out.emplace(p.name, p.value);
  return out;
}

void ParameterStore::import_values(const TensorMap& values) {
  for (auto& p : params_) {
    auto it = values.find(p.name);
    if (it == values.end()) throw std::invalid_argument("missing tensor: " + p.name);
    if (it->second.shape() != p.value.shape()) {
      throw DimensionError("tensor " + p.name + ": stored shape " +
                           shape_to_string(it->second.shape()) + " vs model " +
                           shape_to_string(p.value.shape()));
    }
    p.value = it->second;
  }
}

Tensor glorot_uniform(Rng& rng, Shape shape, std::size_t fan_in, std::size_t fan_out) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = dist(rng);
  return t;
}

Var dense_forward(Var x, Var w, Var b) {
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  if (xs.size() != 2 || ws.size() != 2 || xs[1] != ws[0]) {
    throw DimensionError("dense: input " + shape_to_string(xs) + " incompatible with weights " +
                         shape_to_string(ws));
  }
  if (b.valid() && b.size() != ws[1]) {
    throw DimensionError("dense: bias " + shape_to_string(b.shape()) + " incompatible with weights " +
                         shape_to_string(ws));
  }
  return ad::dense(Dual(x), w, b).value;
}

Dual activate(const Dual& x, Activation kind, double leaky_slope) {
  switch (kind) {
    case Activation::none: return x;
    case Activation::tanh: return ad::tanh(x);
    case Activation::relu: return ad::relu(x);
    case Activation::leaky_relu: return ad::leaky_relu(x, leaky_slope);
    case Activation::sigmoid: return ad::sigmoid(x);
  }
  return x;
}

Var activate(Var x, Activation kind, double leaky_slope) {
  return activate(Dual(x), kind, leaky_slope).value;
}

Dense Dense::create(ParameterStore& ps, const std::string& name, std::size_t n_in,
                    std::size_t n_out, Rng& rng) {
  Dense d;
  d.n_in = n_in;
  d.n_out = n_out;
  d.weight = ps.add(name + ".weight", glorot_uniform(rng, {n_in, n_out}, n_in, n_out));
  d.bias = ps.add(name + ".bias", Tensor({n_out}));
  return d;
}

Dual Dense::forward(Graph& g, ParameterStore& ps, const Dual& x) const {
  if (x.val().rank() != 2 || x.val().cols() != n_in) {
    throw DimensionError("dense: input " + shape_to_string(x.val().shape()) +
                         " incompatible with weights " + shape_to_string(ps[weight].value.shape()));
  }
  return ad::dense(x, g.parameter(ps[weight]), g.parameter(ps[bias]));
}

BatchNorm BatchNorm::create(ParameterStore& ps, const std::string& name, std::size_t features) {
  BatchNorm bn;
  bn.features = features;
  bn.gamma = ps.add(name + ".gamma", Tensor({features}, 1.0));
  bn.beta = ps.add(name + ".beta", Tensor({features}));
  bn.running_mean = ps.add(name + ".running_mean", Tensor({features}), false);
  bn.running_var = ps.add(name + ".running_var", Tensor({features}, 1.0), false);
  return bn;
}

Dual BatchNorm::forward(Graph& g, ParameterStore& ps, const Dual& x, Mode mode) const {
  Var gamma_v = g.parameter(ps[gamma]);
  Var beta_v = g.parameter(ps[beta]);
  if (mode == Mode::train) {
    if (x.directions() != 0) {
      throw std::logic_error("batch_norm: tangents require eval mode");
    }
    ad::BatchStats stats;
    Var y = ad::batch_norm_train(x.value, gamma_v, beta_v, kBatchNormEps, &stats);
    const double count = static_cast<double>(x.val().size() / features);
    const double unbias = count > 1 ? count / (count - 1.0) : 1.0;
    Tensor& rm = ps[running_mean].value;
    Tensor& rv = ps[running_var].value;
    for (std::size_t c = 0; c < features; ++c) {
      rm[c] = kBatchNormMomentum * rm[c] + (1.0 - kBatchNormMomentum) * stats.mean[c];
      rv[c] = kBatchNormMomentum * rv[c] + (1.0 - kBatchNormMomentum) * stats.var[c] * unbias;
    }
    return Dual(y);
  }
  const Tensor& rm = ps[running_mean].value;
  const Tensor& rv = ps[running_var].value;
  Tensor inv_std({features}), centre({features});
  for (std::size_t c = 0; c < features; ++c) {
    inv_std[c] = 1.0 / std::sqrt(rv[c] + kBatchNormEps);
    centre[c] = -rm[c];
  }
  Var scale_v = ad::mul(g.constant(std::move(inv_std)), gamma_v);
  Dual centred = ad::affine_channels(x, Var{}, g.constant(std::move(centre)));
  return ad::affine_channels(centred, scale_v, beta_v);
}

Conv2d Conv2d::create(ParameterStore& ps, const std::string& name, std::size_t ch_in,
                      std::size_t ch_out, std::size_t k_h, std::size_t k_w, Rng& rng) {
  Conv2d c;
  c.ch_in = ch_in;
  c.ch_out = ch_out;
  c.k_h = k_h;
  c.k_w = k_w;
  const std::size_t area = k_h * k_w;
  c.kernel = ps.add(name + ".kernel",
                    glorot_uniform(rng, {ch_out, ch_in, k_h, k_w}, ch_in * area, ch_out * area));
  return c;
}

Var Conv2d::forward(Graph& g, ParameterStore& ps, Var x) const {
  return ad::conv2d(x, g.parameter(ps[kernel]));
}

Mlp Mlp::create(ParameterStore& ps, const std::string& name, const MlpSpec& spec, Rng& rng) {
  Mlp m;
  m.spec = spec;
  std::size_t n = spec.n_in;
  for (std::size_t i = 0; i < spec.depth; ++i) {
    const std::string layer = name + ".hidden" + std::to_string(i);
    m.hidden.push_back(Dense::create(ps, layer, n, spec.width, rng));
    if (spec.batch_norm) m.norms.push_back(BatchNorm::create(ps, layer + ".bn", spec.width));
    n = spec.width;
  }
  m.output = Dense::create(ps, name + ".out", n, spec.n_out, rng);
  return m;
}

Dual Mlp::forward(Graph& g, ParameterStore& ps, const Dual& x, Mode mode) const {
  Dual h = x;
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    h = hidden[i].forward(g, ps, h);
    if (spec.batch_norm) h = norms[i].forward(g, ps, h, mode);
    h = activate(h, spec.activation);
  }
  return output.forward(g, ps, h);
}

}  // namespace flowuq::nn
