#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "flowuq/autodiff.hpp"
#include "flowuq/nn.hpp"

namespace flowuq::nn {

struct AdamConfig {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Per-tensor first/second moments plus a shared step counter.
struct AdamState {
  std::map<std::string, Tensor> m;
  std::map<std::string, Tensor> v;
  std::uint64_t step = 0;

  /// Flattened as "<prefix>m/<name>", "<prefix>v/<name>", "<prefix>step".
  void export_to(TensorMap& out, const std::string& prefix) const;
  void import_from(const TensorMap& in, const std::string& prefix);
};

/// One bias-corrected Adam update of every trainable parameter. A parameter
/// without a gradient is treated as having a zero gradient. Throws
/// NumericalError naming the tensor when a gradient is not finite.
void adam_step(const std::vector<Parameter*>& params, AdamState& state, const AdamConfig& cfg);

}  // namespace flowuq::nn
