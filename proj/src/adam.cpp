#include "flowuq/adam.hpp"

#include <cmath>

namespace flowuq::nn {

void adam_step(const std::vector<Parameter*>& params, AdamState& state, const AdamConfig& cfg) {
  for (const Parameter* p : params) {
    if (!p->grad.empty() && !p->grad.all_finite()) {
      throw NumericalError("adam: non-finite gradient in tensor '" + p->name + "'");
    }
  }
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (Parameter* p : params) {
    if (!p->trainable) continue;
    auto [mit, m_new] = state.m.try_emplace(p->name, p->value.shape());
    auto [vit, v_new] = state.v.try_emplace(p->name, p->value.shape());
    Tensor& m = mit->second;
    Tensor& v = vit->second;
    if (!m.same_shape(p->value) || !v.same_shape(p->value)) {
      throw DimensionError("adam: moment shape mismatch for '" + p->name + "'");
    }
    const bool has_grad = !p->grad.empty();
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double g = has_grad ? p->grad[i] : 0.0;
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p->value[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

void AdamState::export_to(TensorMap& out, const std::string& prefix) const {
  for (const auto& [name, t] : m) out[prefix + "m/" + name] = t;
  for (const auto& [name, t] : v) out[prefix + "v/" + name] = t;
  out[prefix + "step"] = Tensor::scalar(static_cast<double>(step));
}

void AdamState::import_from(const TensorMap& in, const std::string& prefix) {
  m.clear();
  v.clear();
  step = 0;
  const std::string mp = prefix + "m/", vp = prefix + "v/";
  for (const auto& [key, t] : in) {
    if (key.rfind(mp, 0) == 0) m[key.substr(mp.size())] = t;
    else if (key.rfind(vp, 0) == 0) v[key.substr(vp.size())] = t;
  }
  if (auto it = in.find(prefix + "step"); it != in.end()) {
    step = static_cast<std::uint64_t>(it->second.item());
  }
}

}  // namespace flowuq::nn
