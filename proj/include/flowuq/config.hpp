#pragma once

// JSON run configuration. Every object rejects keys it does not know, so a
// typo fails loudly instead of silently falling back to a default.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "flowuq/metrics.hpp"
#include "flowuq/trainer.hpp"

namespace flowuq::config {

using nlohmann::json;

/// Raised for malformed or out-of-range configuration (CLI exit code 2).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct GenerateConfig {
  std::size_t nx = 60;
  std::size_t nt = 240;
  double t_max = 3.0;
  pde::ArzParams arz{};
  pde::BellProfile bell{};
  double noise = 0.02;
  std::uint64_t seed = 1;
};

using metrics::KlEstimator;

struct EvalConfig {
  std::size_t samples = 100;
  double quantile_lo = 0.025;
  double quantile_hi = 0.975;
  KlEstimator kl = KlEstimator::gaussian;
  std::size_t data_samples = 100;  // noise realizations per cell for KL
  std::uint64_t seed = 0;
};

struct RunConfig {
  std::filesystem::path data;  // dataset sidecar
  std::filesystem::path out = "run";
  std::size_t loops = 4;
  std::vector<std::size_t> loop_rows;  // overrides equal spacing when nonempty
  train::TrainConfig train;
  train::ModelConfig model;
  GenerateConfig generate;
  EvalConfig eval;
};

json to_json(const flow::FlowConfig& c);
json to_json(const physics::PhysicsConfig& c);
json to_json(const critic::CriticConfig& c);
json to_json(const train::TrainConfig& c);
json to_json(const train::ModelConfig& c);
json to_json(const RunConfig& c);

void from_json(const json& j, flow::FlowConfig& c);
void from_json(const json& j, physics::PhysicsConfig& c);
void from_json(const json& j, critic::CriticConfig& c);
void from_json(const json& j, train::TrainConfig& c);
void from_json(const json& j, train::ModelConfig& c);
void from_json(const json& j, RunConfig& c);

RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace flowuq::config
