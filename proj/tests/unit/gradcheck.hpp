#pragma once

// Central finite-difference checks of reverse-mode gradients.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "flowuq/autodiff.hpp"
#include "flowuq/rng.hpp"

namespace gradcheck {

using flowuq::Tensor;
using flowuq::ad::Graph;
using flowuq::ad::Parameter;
using flowuq::ad::Var;

struct Result {
  std::size_t probes = 0;
  double worst = 0.0;  // largest relative error
  std::string worst_at;
};

// |analytic - numeric| / max(|analytic|, |numeric|, floor). The floor keeps
// round-off in near-zero derivatives from dominating.
inline double rel_error(double a, double n, double floor = 1e-3) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
}

/// `build` constructs the scalar loss on a fresh graph. `state` lists
/// buffers (disjoint from `params`) restored before every evaluation so side
/// effects such as running statistics do not leak between evaluations.
inline Result check(const std::vector<Parameter*>& params, const std::function<Var(Graph&)>& build,
                    std::size_t probes, std::uint64_t seed, double h = 1e-5,
                    const std::vector<Parameter*>& state = {}) {
  std::vector<Tensor> saved;
  for (auto* p : state) saved.push_back(p->value);
  auto restore = [&] {
    for (std::size_t i = 0; i < state.size(); ++i) state[i]->value = saved[i];
  };
  auto eval = [&] {
    restore();
    Graph g;
    return build(g).value()[0];
  };

  restore();
  for (auto* p : params) p->zero_grad();
  {
    Graph g;
    Var loss = build(g);
    g.backward(loss);
  }
  std::vector<Tensor> grads;
  for (auto* p : params) grads.push_back(p->grad);

  std::size_t total = 0;
  for (auto* p : params) total += p->value.size();
  auto rng = flowuq::make_stream(seed, "gradcheck");
  std::vector<std::pair<std::size_t, std::size_t>> picks;
  if (total <= probes) {
    for (std::size_t i = 0; i < params.size(); ++i)
      for (std::size_t j = 0; j < params[i]->value.size(); ++j) picks.emplace_back(i, j);
  } else {
    std::uniform_int_distribution<std::size_t> pick(0, total - 1);
    for (std::size_t k = 0; k < probes; ++k) {
      std::size_t flat = pick(rng), i = 0;
      while (flat >= params[i]->value.size()) flat -= params[i++]->value.size();
      picks.emplace_back(i, flat);
    }
  }

  Result r;
  for (auto [i, j] : picks) {
    const double orig = params[i]->value[j];
    params[i]->value[j] = orig + h;
    const double up = eval();
    params[i]->value[j] = orig - h;
    const double down = eval();
    params[i]->value[j] = orig;
    const double numeric = (up - down) / (2.0 * h);
    const double e = rel_error(grads[i][j], numeric);
    ++r.probes;
    if (e > r.worst) {
      r.worst = e;
      r.worst_at = params[i]->name + "[" + std::to_string(j) + "] analytic " +
                   std::to_string(grads[i][j]) + " numeric " + std::to_string(numeric);
    }
  }
  restore();
  return r;
}

/// Gradient of a scalar loss with respect to a differentiable input tensor.
inline Result check_input(Tensor x, const std::function<Var(Graph&, Var)>& build,
                          std::size_t probes, std::uint64_t seed, double h = 1e-5) {
  Parameter p{"input", x, Tensor(x.shape()), true};
  return check({&p}, [&](Graph& g) { return build(g, g.parameter(p)); }, probes, seed, h);
}

}  // namespace gradcheck
