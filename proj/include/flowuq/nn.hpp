#pragma once

// Layers on top of the graph: parameter storage, dense / conv / batch-norm
// layers and a plain multilayer perceptron. Layers hold indices into a
// ParameterStore owned by the model, so copying a model copies its weights.

#include <map>
#include <string>
#include <vector>

#include "flowuq/autodiff.hpp"
#include "flowuq/dual.hpp"
#include "flowuq/rng.hpp"

namespace flowuq::nn {

using ad::Dual;
using ad::Graph;
using ad::Parameter;
using ad::Var;

enum class Mode { train, eval };
enum class Activation { none, tanh, relu, leaky_relu, sigmoid };

inline constexpr double kLeakySlope = 0.01;
inline constexpr double kBatchNormMomentum = 0.9;
inline constexpr double kBatchNormEps = 1e-5;

using TensorMap = std::map<std::string, Tensor>;

class ParameterStore {
 public:
  std::size_t add(std::string name, Tensor value, bool trainable = true);

  Parameter& operator[](std::size_t i) { return params_[i]; }
  const Parameter& operator[](std::size_t i) const { return params_[i]; }
  std::size_t size() const { return params_.size(); }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  Parameter* find(const std::string& name);
  std::vector<Parameter*> trainable();
  void zero_grad();

  TensorMap export_values() const;
  /// Overwrites every stored tensor from `values`; missing names or shape
  /// mismatches throw.
  void import_values(const TensorMap& values);

 private:
  std::vector<Parameter> params_;
};

/// Glorot-uniform: U(-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out))).
Tensor glorot_uniform(Rng& rng, Shape shape, std::size_t fan_in, std::size_t fan_out);

/// x W + b with shape checks naming both operands.
Var dense_forward(Var x, Var w, Var b);

Dual activate(const Dual& x, Activation kind, double leaky_slope = kLeakySlope);
Var activate(Var x, Activation kind, double leaky_slope = kLeakySlope);

struct Dense {
  std::size_t weight = 0, bias = 0;
  std::size_t n_in = 0, n_out = 0;

  static Dense create(ParameterStore& ps, const std::string& name, std::size_t n_in,
                      std::size_t n_out, Rng& rng);
  Dual forward(Graph& g, ParameterStore& ps, const Dual& x) const;
};

struct BatchNorm {
  std::size_t gamma = 0, beta = 0, running_mean = 0, running_var = 0;
  std::size_t features = 0;

  static BatchNorm create(ParameterStore& ps, const std::string& name, std::size_t features);
  /// Train mode normalizes with batch statistics (no tangents allowed) and
  /// folds them into the running statistics; eval mode is a fixed affine map.
  Dual forward(Graph& g, ParameterStore& ps, const Dual& x, Mode mode) const;
};

struct Conv2d {
  std::size_t kernel = 0;
  std::size_t ch_in = 0, ch_out = 0, k_h = 0, k_w = 0;

  static Conv2d create(ParameterStore& ps, const std::string& name, std::size_t ch_in,
                       std::size_t ch_out, std::size_t k_h, std::size_t k_w, Rng& rng);
  Var forward(Graph& g, ParameterStore& ps, Var x) const;
};

struct MlpSpec {
  std::size_t n_in = 1;
  std::size_t width = 32;
  std::size_t depth = 2;  // hidden layers
  std::size_t n_out = 1;
  Activation activation = Activation::tanh;
  bool batch_norm = false;
};

/// dense -> [batch norm] -> activation, repeated `depth` times, then a
/// linear output layer.
struct Mlp {
  MlpSpec spec;
  std::vector<Dense> hidden;
  std::vector<BatchNorm> norms;
  Dense output;

  static Mlp create(ParameterStore& ps, const std::string& name, const MlpSpec& spec, Rng& rng);
  Dual forward(Graph& g, ParameterStore& ps, const Dual& x, Mode mode) const;
};

}  // namespace flowuq::nn
