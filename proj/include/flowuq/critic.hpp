#pragma once

// Convolutional Wasserstein critic over [2, n_loops, t_window] state matrices.
// Three valid convolutions (batch norm + tanh after each, no pooling),
// flatten, two tanh dense layers and a scalar head.

#include <array>
#include <vector>

#include "flowuq/nn.hpp"

namespace flowuq::critic {

using ad::Graph;
using ad::Var;
using nn::Mode;

struct ConvSpec {
  std::size_t k_time = 3;   // kernel extent along time (matrix columns)
  std::size_t k_space = 1;  // kernel extent across loops (matrix rows)
  std::size_t channels = 4;
};

struct CriticArch {
  std::array<ConvSpec, 3> convs;
  std::size_t fc1 = 144;
  std::size_t fc2 = 64;

  /// Reference architecture for a loop count. Counts outside the reference
  /// table use the largest listed count that does not exceed them (3 loops
  /// below that).
  static CriticArch for_loops(std::size_t n_loops);
  std::size_t min_loops() const;
  std::size_t min_window() const;
  /// Flattened width after the convolutions.
  std::size_t flatten_width(std::size_t n_loops, std::size_t t_window) const;
};

enum class Lipschitz { clip, gradient_penalty };

struct CriticConfig {
  std::size_t n_loops = 4;
  std::size_t t_window = 32;
  double clip = 0.01;
  Lipschitz lipschitz = Lipschitz::clip;
  double gp_weight = 10.0;
  std::size_t gp_directions = 4;
  bool batch_norm = true;
};

class CriticModel {
 public:
  CriticConfig config;
  CriticArch arch;
  nn::ParameterStore params;
  std::vector<nn::Conv2d> convs;
  std::vector<nn::BatchNorm> norms;
  nn::Dense fc1, fc2, head;

  static CriticModel create(const CriticConfig& config, Rng& rng);
  static CriticModel create(const CriticConfig& config, const CriticArch& arch, Rng& rng);

  /// Scores a batch [N, 2, n_loops, t_window] -> [N, 1].
  Var score(Graph& g, Var batch, Mode mode);
  /// Scores without recording gradients (eval-mode normalization).
  Tensor score_values(const Tensor& batch);
};

/// -(1/N) sum_i (D(real_i) - D(fake_i)) from score columns of equal length.
Var critic_loss(Var real_scores, Var fake_scores);
/// Clamps every critic weight into [-c, c].
void enforce_lipschitz(CriticModel& model);
double max_abs_weight(const CriticModel& model);

}  // namespace flowuq::critic
