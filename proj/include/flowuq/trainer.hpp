#pragma once

// Alternating training loop: one critic update, one generator update on the
// weighted likelihood / adversarial / physics loss, then one update of the
// physics parameters lambda.

#include <filesystem>
#include <map>
#include <vector>

#include "flowuq/adam.hpp"
#include "flowuq/critic.hpp"
#include "flowuq/dataset.hpp"
#include "flowuq/flow.hpp"
#include "flowuq/physics.hpp"

namespace flowuq::train {

struct TrainConfig {
  double alpha = 1.0;
  double beta = 0.1;
  double gamma = 0.1;
  std::size_t m = 256;
  std::size_t iterations = 3000;
  double lr = 5e-4;
  std::size_t n_omega = 8;
  std::size_t t_window = 32;
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 0;  // 0: only at the end
  /// Draw a fresh observation-noise realization for every data matrix.
  bool renoise = false;
  /// Ring road: the loop on row 0 also sits at x_max (the duplicated end row),
  /// so each of its likelihood draws is placed there with probability 1/2.
  bool ring_images = false;

  void validate() const;
};

struct ModelConfig {
  flow::FlowConfig flow;
  physics::PhysicsConfig physics;
  critic::CriticConfig critic;
};

struct LossRecord {
  std::size_t iter = 0;
  double nll = 0.0, adv = 0.0, phy = 0.0, critic = 0.0;
  bool operator==(const LossRecord&) const = default;
};

/// Observation set in physical units plus the coordinate normalization.
struct TrainData {
  data::ObservationSet set;
  data::CoordTransform transform;
};

TrainData prepare_data(const pde::GridField& observed, std::size_t n_loops, double noise_sigma = 0.0);
TrainData prepare_data(data::ObservationSet set);

struct TrainState {
  std::size_t iteration = 0;
  ModelConfig model;
  data::CoordTransform transform;
  flow::FlowModel flow;
  critic::CriticModel critic;
  physics::PhysicsModel physics;
  nn::AdamState adam_flow, adam_critic, adam_lambda;
  std::vector<LossRecord> history;
};

/// Builds freshly initialized models. The critic input shape follows the
/// data's loop count and cfg.t_window.
TrainState init_state(ModelConfig model, const TrainConfig& cfg, const TrainData& data);

/// Indices of the observed-set rows used at `iteration`: consecutive slices
/// of per-epoch permutations, so every row is used once per epoch.
std::vector<std::size_t> batch_indices(std::size_t population, std::size_t m,
                                       std::size_t iteration, std::uint64_t seed,
                                       std::string_view stream);

/// Builds L_f = alpha L_NLL + beta L_Adv + gamma L_Phy for the state's
/// current iteration, filling the loss values into `rec`. With
/// `update_critic` the critic takes its step between sampling and scoring.
ad::Var generator_objective(ad::Graph& g, TrainState& state, const TrainData& data,
                            const TrainConfig& cfg, LossRecord& rec, bool update_critic);

LossRecord train_step(TrainState& state, const TrainData& data, const TrainConfig& cfg);

struct TrainOutput {
  std::filesystem::path dir;  // empty: nothing written
};

/// Runs until state.iteration == cfg.iterations, writing checkpoints and the
/// loss history under `out.dir` at the configured cadence.
void train(TrainState& state, const TrainData& data, const TrainConfig& cfg,
           const TrainOutput& out = {});

void save_state(const std::filesystem::path& path, const TrainState& state, const TrainConfig& cfg);
/// Restores a state; the training config stored alongside is returned via `cfg` when given.
TrainState load_state(const std::filesystem::path& path, TrainConfig* cfg = nullptr);

void write_history_csv(const std::filesystem::path& path, const std::vector<LossRecord>& history);

/// Two-component mixture: every cell draws c = +-1 with equal odds and
/// (rho, u) = (c, c) + N(0, I).
pde::GridField bimodal_field(std::size_t nx, std::size_t nt, std::uint64_t seed);

struct ModeReport {
  double mass_negative = 0.0;  // fraction of samples with rho + u < 0
  double mass_positive = 0.0;
  std::size_t n_samples = 0;
  bool operator==(const ModeReport&) const = default;
};

ModeReport classify_modes(const Tensor& samples);
/// Samples the trained generator at every observed coordinate.
ModeReport mode_collapse_probe(TrainState& state, const TrainData& data,
                               std::size_t samples_per_coord, std::uint64_t seed);
/// Reference split of the mixture construction itself.
ModeReport mode_probe_ground_truth(std::size_t n_samples, std::uint64_t seed);

}  // namespace flowuq::train
