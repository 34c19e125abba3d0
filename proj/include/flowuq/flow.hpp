#pragma once

// Conditional normalizing flow over the two-component traffic state.
//
// A prior network maps normalized coordinates (x, t) to a Gaussian N(mu, sigma^2).
// A stack of sigmoid-gated affine couplings maps a state u to the latent z:
//   z_q = u_q * sigmoid(k(u_p; x, t)) + b(u_p; x, t),   z_p = u_p
// where layer l passes coordinate p = l % 2 through unchanged. The log
// density is log N(z; mu, sigma) + sum over layers of log sigmoid(k).

#include <cstdint>
#include <vector>

#include "flowuq/nn.hpp"

namespace flowuq::flow {

using ad::Dual;
using ad::Graph;
using ad::Var;
using nn::Mode;

enum class Gate {
  sigmoid,      // production coupling
  exponential,  // z_q = u_q * exp(k) + b; kept for cross-checks
};

struct FlowConfig {
  std::size_t pnet_width = 256;
  std::size_t pnet_depth = 6;
  std::size_t coupling_layers = 8;
  std::size_t coupling_width = 256;
  std::size_t coupling_depth = 1;
  bool batch_norm = true;
  double k_clamp = 15.0;
  double sigma_floor = 1e-4;
  Gate gate = Gate::sigmoid;

  void validate() const;
};

struct Coupling {
  nn::Mlp k_net;
  nn::Mlp b_net;
  std::size_t pass = 0;  // coordinate left unchanged
};

struct Prior {
  Dual mu;     // [n,2]
  Dual sigma;  // [n,2], strictly positive
};

struct ForwardResult {
  Var z;        // [n,2]
  Var log_det;  // [n,1]
};

class FlowModel {
 public:
  FlowConfig config;
  nn::ParameterStore params;
  nn::Mlp mu_net;
  nn::Mlp sigma_net;
  std::vector<Coupling> layers;

  static FlowModel create(const FlowConfig& config, Rng& rng);

  /// coords: [n,2] normalized (x, t); tangents pass straight through.
  Prior prior(Graph& g, const Dual& coords, Mode mode);
  ForwardResult coupling_forward(Graph& g, Var u, Var coords, Mode mode);
  Dual coupling_inverse(Graph& g, const Dual& z, const Dual& coords, Mode mode);
  /// log p(u | x, t) per row: [n,1].
  Var log_likelihood(Graph& g, Var u, Var coords, Mode mode);
  /// u = inverse(mu + sigma * eps); differentiable in parameters and in
  /// whatever directions `coords` carries.
  Dual sample_path(Graph& g, const Dual& coords, const Tensor& eps, Mode mode);

  // Convenience evaluations on plain tensors (eval-mode normalization, no
  // gradient recording, chunked).
  Tensor log_likelihood_values(const Tensor& u, const Tensor& coords);
  /// Draws n samples at every row of `coords`: [n*k, 2], sample-major.
  Tensor sample(const Tensor& coords, std::size_t n, Rng& rng);
  /// n draws at a single coordinate, deterministic under `seed`.
  Tensor sample(double x, double t, std::size_t n, std::uint64_t seed);
  /// Prior mean and deviation at each coordinate: pair of [k,2].
  std::pair<Tensor, Tensor> prior_values(const Tensor& coords);
};

}  // namespace flowuq::flow
