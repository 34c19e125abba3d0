#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "flowuq/tensor.hpp"

namespace flowuq {

using Rng = std::mt19937_64;

/// Independent generator for a named purpose ("init", "noise", "sample", ...)
/// derived from one master seed. `index` separates repeated uses, e.g. the
/// training iteration, so any stream can be recreated without replaying others.
Rng make_stream(std::uint64_t seed, std::string_view name, std::uint64_t index = 0);

Tensor normal_tensor(Rng& rng, Shape shape, double mean = 0.0, double stddev = 1.0);

}  // namespace flowuq
