#include "flowuq/physics.hpp"

#include <cmath>
#include <stdexcept>

namespace flowuq::physics {

void PhysicsConfig::validate() const {
  if (!(eta > 0.0 && eta <= 1.0)) throw std::invalid_argument("physics: eta must lie in (0,1]");
  if (!(xi >= 0.0)) throw std::invalid_argument("physics: xi must be non-negative");
  if (!(a < b)) throw std::invalid_argument("physics: shape interval needs a < b");
  if (n_quad < 16) throw std::invalid_argument("physics: n_quad must be at least 16");
  lambda_init.validate();
}

PhysicsModel PhysicsModel::create(const PhysicsConfig& config, Rng& rng) {
  config.validate();
  PhysicsModel m;
  m.config = config;
  m.snet = nn::Mlp::create(m.snet_params, "snet",
                           {1, config.snet_width, config.snet_depth, 1, nn::Activation::tanh, false},
                           rng);
  m.lambda.add("log_rho_max", Tensor::scalar(std::log(config.lambda_init.rho_max)));
  m.lambda.add("log_u_max", Tensor::scalar(std::log(config.lambda_init.u_max)));
  m.lambda.add("log_tau", Tensor::scalar(std::log(config.lambda_init.tau)));
  return m;
}

pde::ArzParams PhysicsModel::lambda_values() const {
  return {std::exp(lambda[0].value[0]), std::exp(lambda[1].value[0]), std::exp(lambda[2].value[0])};
}

Var PhysicsModel::rho_max(Graph& g) { return ad::exp(g.parameter(lambda[0])); }
Var PhysicsModel::u_max(Graph& g) { return ad::exp(g.parameter(lambda[1])); }
Var PhysicsModel::tau(Graph& g) { return ad::exp(g.parameter(lambda[2])); }

UeqFn PhysicsModel::ueq(Graph& g) {
  if (config.use_surrogate) {
    return [this](Graph& gg, const Dual& rho) {
      return snet.forward(gg, snet_params, rho, nn::Mode::eval);
    };
  }
  Var rm = rho_max(g), um = u_max(g);
  return [rm, um](Graph& gg, const Dual& rho) { return ueq_closed_form(gg, rho, rm, um); };
}

std::vector<double> PhysicsModel::ueq_values(const std::vector<double>& rho) {
  Graph g;
  g.set_grad_enabled(false);
  Dual out = ueq(g)(g, g.constant(Tensor({rho.size(), 1}, rho)));
  return out.val().storage();
}

std::vector<ad::Parameter*> PhysicsModel::generator_parameters() {
  return config.use_surrogate ? snet_params.trainable() : std::vector<ad::Parameter*>{};
}

std::vector<ad::Parameter*> PhysicsModel::lambda_parameters() {
  if (!config.learn_lambda) return {};
  std::vector<ad::Parameter*> out;
  for (std::size_t i = 0; i < lambda.size(); ++i) {
    if (i == 2 && config.family == Family::lwr) continue;
    out.push_back(&lambda[i]);
  }
  return out;
}

Dual seeded_coords(Graph& g, const Tensor& coords) {
  require_rank(coords, 2, "seeded_coords");
  Tensor dx(coords.shape()), dt(coords.shape());
  for (std::size_t i = 0; i < coords.rows(); ++i) {
    dx.at(i, 0) = 1.0;
    dt.at(i, 1) = 1.0;
  }
  return Dual(g.constant(coords), {g.constant(std::move(dx)), g.constant(std::move(dt))});
}

namespace {

Tensor repeat_rows(const Tensor& coords, std::size_t times) {
  Tensor out({coords.rows() * times, coords.cols()});
  for (std::size_t r = 0; r < times; ++r) {
    std::copy(coords.data(), coords.data() + coords.size(), out.data() + r * coords.size());
  }
  return out;
}

// [n_omega*m, 1] -> [1, m] average over the repeats.
Var expectation(Var r, std::size_t n_omega) {
  const std::size_t m = r.size() / n_omega;
  return ad::scale(ad::sum_rows(ad::reshape(r, {n_omega, m})), 1.0 / static_cast<double>(n_omega));
}

struct FieldParts {
  Dual rho, u;
};

FieldParts evaluate(Graph& g, const StateField& field, const Tensor& coords, std::size_t n_omega) {
  if (n_omega == 0) throw std::invalid_argument("residuals: need at least one sample");
  Dual s = field(g, seeded_coords(g, repeat_rows(coords, n_omega)));
  if (s.directions() != 2) throw DimensionError("residuals: state field lost its (x,t) tangents");
  for (std::size_t d = 0; d < 2; ++d) {
    const Tensor& t = s.tangents[d].value();
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (!std::isfinite(t[i])) {
        const std::size_t row = (i / 2) % coords.rows();
        throw NumericalError("residuals: non-finite derivative at (x,t) = (" +
                             std::to_string(coords.at(row, 0)) + ", " +
                             std::to_string(coords.at(row, 1)) + ")");
      }
    }
  }
  return {ad::col(s, 0), ad::col(s, 1)};
}

// rho_t + rho_x u + rho u_x
Var continuity(const FieldParts& f) {
  Var rho_x = f.rho.tangents[0], rho_t = f.rho.tangents[1];
  Var u_x = f.u.tangents[0];
  return ad::add(rho_t, ad::add(ad::mul(rho_x, f.u.value), ad::mul(f.rho.value, u_x)));
}

}  // namespace

ResidualBatch arz_residuals(Graph& g, const StateField& field, const Tensor& coords,
                            std::size_t n_omega, const UeqFn& ueq, Var tau) {
  FieldParts f = evaluate(g, field, coords, n_omega);
  Dual ue = ueq(g, f.rho);
  // w = u + h(rho) with h = U(0) - U(rho); U(0) is constant in (x,t) so
  // only -U(rho) contributes to the derivatives of w.
  Var w_x = ad::sub(f.u.tangents[0], ue.tangents[0]);
  Var w_t = ad::sub(f.u.tangents[1], ue.tangents[1]);
  Var relax = ad::div_scalar(ad::sub(ue.value, f.u.value), tau);
  Var r2 = ad::sub(ad::add(w_t, ad::mul(f.u.value, w_x)), relax);
  return {expectation(continuity(f), n_omega), expectation(r2, n_omega)};
}

ResidualBatch lwr_residuals(Graph& g, const StateField& field, const Tensor& coords,
                            std::size_t n_omega, const UeqFn& ueq) {
  FieldParts f = evaluate(g, field, coords, n_omega);
  Var r2 = ad::sub(ueq(g, Dual(f.rho.value)).value, f.u.value);
  return {expectation(continuity(f), n_omega), expectation(r2, n_omega)};
}

Var shape_constraint(Graph& g, const UeqFn& ueq, double a, double b, std::size_t n_quad) {
  if (n_quad < 2) throw std::invalid_argument("shape_constraint: need at least two nodes");
  const double h = (b - a) / static_cast<double>(n_quad - 1);
  Tensor nodes({n_quad, 1});
  for (std::size_t i = 0; i < n_quad; ++i) nodes[i] = a + h * static_cast<double>(i);
  Dual rho(g.constant(std::move(nodes)), {g.constant(Tensor({n_quad, 1}, 1.0))});
  Dual u = ueq(g, rho);
  if (u.directions() != 1) throw DimensionError("shape_constraint: surrogate dropped the tangent");
  // Trapezoid rule on the positive part of the piecewise-linear slope.
  return ad::positive_part_integral(u.tangents[0], h);
}

Var physics_loss(const ResidualBatch& res, Var shape, double eta, double xi) {
  Var loss = ad::add(ad::scale(ad::mean(ad::square(res.r1)), eta),
                     ad::scale(ad::mean(ad::square(res.r2)), 1.0 - eta));
  if (shape.valid() && xi != 0.0) loss = ad::add(loss, ad::scale(shape, xi));
  return loss;
}

double ueq_closed_form(double rho, const pde::ArzParams& lambda) { return lambda.ueq(rho); }

Dual ueq_closed_form(Graph&, const Dual& rho, Var rho_max, Var u_max) {
  return ad::mul_scalar(ad::shift(ad::scale(ad::div_scalar(rho, rho_max), -1.0), 1.0), u_max);
}

StateField flow_field(flow::FlowModel& model, const data::CoordTransform& transform, Rng& rng,
                      nn::Mode mode) {
  return [&model, transform, &rng, mode](Graph& g, const Dual& coords) {
    Var sc = g.constant(Tensor({2}, {transform.x_scale(), transform.t_scale()}));
    Var sh = g.constant(Tensor({2}, {-transform.x_lo * transform.x_scale() - 1.0,
                                     -transform.t_lo * transform.t_scale() - 1.0}));
    Dual normalized = ad::affine_channels(coords, sc, sh);
    Tensor eps = normal_tensor(rng, coords.val().shape());
    return model.sample_path(g, normalized, eps, mode);
  };
}

Var compute_physics_loss(Graph& g, PhysicsModel& phys, const StateField& field,
                         const Tensor& coords, std::size_t n_omega) {
  const auto& c = phys.config;
  UeqFn ueq = phys.ueq(g);
  ResidualBatch res = c.family == Family::arz
                          ? arz_residuals(g, field, coords, n_omega, ueq, phys.tau(g))
                          : lwr_residuals(g, field, coords, n_omega, ueq);
  Var shape = c.xi > 0.0 ? shape_constraint(g, ueq, c.a, c.b, c.n_quad) : Var{};
  return physics_loss(res, shape, c.eta, c.xi);
}

}  // namespace flowuq::physics
