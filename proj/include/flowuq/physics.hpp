#pragma once

// PDE residuals of the ARZ and LWR traffic models evaluated on generator
// samples, the surrogate equilibrium-speed network (s-net) with its
// monotonicity constraint, and the combined physics loss.

#include <functional>

#include "flowuq/dataset.hpp"
#include "flowuq/flow.hpp"
#include "flowuq/nn.hpp"
#include "flowuq/pde.hpp"

namespace flowuq::physics {

using ad::Dual;
using ad::Graph;
using ad::Var;

enum class Family { arz, lwr };

struct PhysicsConfig {
  Family family = Family::arz;
  double eta = 0.5;
  double xi = 0.5;
  double a = 0.0;  // shape-constraint interval
  double b = 1.13;
  std::size_t n_quad = 64;
  /// Learn U_eq with the s-net; otherwise use the closed form with lambda.
  bool use_surrogate = true;
  bool learn_lambda = true;
  pde::ArzParams lambda_init{};
  std::size_t snet_width = 32;
  std::size_t snet_depth = 2;

  void validate() const;
};

/// Equilibrium speed as a differentiable function of density.
using UeqFn = std::function<Dual(Graph&, const Dual& rho)>;
/// State field (rho, u) as [n,2] at physical coordinates [n,2]; tangents of
/// the result are d/dx and d/dt when the input carries the unit seeds.
using StateField = std::function<Dual(Graph&, const Dual& coords)>;

class PhysicsModel {
 public:
  PhysicsConfig config;
  nn::ParameterStore snet_params;
  nn::ParameterStore lambda;  // log_rho_max, log_u_max, log_tau (each [1])
  nn::Mlp snet;

  static PhysicsModel create(const PhysicsConfig& config, Rng& rng);

  pde::ArzParams lambda_values() const;
  Var rho_max(Graph& g);
  Var u_max(Graph& g);
  Var tau(Graph& g);
  /// s-net or closed form, per configuration.
  UeqFn ueq(Graph& g);
  /// s-net prediction on plain densities.
  std::vector<double> ueq_values(const std::vector<double>& rho);
  /// Parameters updated together with the generator.
  std::vector<ad::Parameter*> generator_parameters();
  /// Parameters updated by the lambda step (tau excluded for LWR).
  std::vector<ad::Parameter*> lambda_parameters();
};

struct ResidualBatch {
  Var r1;  // [1,m], expectation over samples already taken
  Var r2;
};

/// Constant-seed Dual for [n,2] physical coordinates (d/dx, d/dt).
Dual seeded_coords(Graph& g, const Tensor& coords);

/// Evaluates `field` at the m coordinates repeated n_omega times and
/// averages each residual over the repeats before returning.
ResidualBatch arz_residuals(Graph& g, const StateField& field, const Tensor& coords,
                            std::size_t n_omega, const UeqFn& ueq, Var tau);
ResidualBatch lwr_residuals(Graph& g, const StateField& field, const Tensor& coords,
                            std::size_t n_omega, const UeqFn& ueq);

/// Integral over [a,b] of max(0, dU/drho) from the slope at n_quad nodes,
/// linearly interpolated in between.
Var shape_constraint(Graph& g, const UeqFn& ueq, double a, double b, std::size_t n_quad);

Var physics_loss(const ResidualBatch& res, Var shape, double eta, double xi);

double ueq_closed_form(double rho, const pde::ArzParams& lambda);
Dual ueq_closed_form(Graph& g, const Dual& rho, Var rho_max, Var u_max);

/// Flow samples as a state field: physical coords are normalized with
/// `transform`, and each row gets fresh standard-normal noise from `rng`.
StateField flow_field(flow::FlowModel& model, const data::CoordTransform& transform, Rng& rng,
                      nn::Mode mode = nn::Mode::eval);

/// Total physics loss for the configured family.
Var compute_physics_loss(Graph& g, PhysicsModel& phys, const StateField& field,
                         const Tensor& coords, std::size_t n_omega);

}  // namespace flowuq::physics
