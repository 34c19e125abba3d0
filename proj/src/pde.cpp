#include "flowuq/pde.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "flowuq/rng.hpp"

namespace flowuq::pde {

void ArzParams::validate() const {
  if (!(rho_max > 0.0) || !(u_max > 0.0) || !(tau > 0.0)) {
    throw std::invalid_argument("ARZ parameters must be strictly positive");
  }
}

GridField::GridField(std::size_t nx_, std::size_t nt_, double x_lo, double x_hi, double t_lo,
                     double t_hi)
    : x_min(x_lo), x_max(x_hi), t_min(t_lo), t_max(t_hi), nx(nx_), nt(nt_),
      rho({nx_, nt_}), u({nx_, nt_}) {
  if (nx < 2 || nt < 2) throw DimensionError("grid needs at least 2 nodes per axis");
  if (!(x_max > x_min) || !(t_max > t_min)) throw std::invalid_argument("degenerate grid bounds");
}

void GridField::validate_physical() const {
  for (std::size_t i = 0; i < rho.size(); ++i) {
    if (!std::isfinite(rho[i]) || !std::isfinite(u[i])) {
      throw NumericalError("grid field contains non-finite values");
    }
    if (rho[i] < 0.0 || u[i] < 0.0) {
      throw NumericalError("grid field contains negative density or velocity");
    }
  }
}

InitialState initial_condition_bell(std::size_t nx, const BellProfile& p) {
  if (nx < 8) throw std::invalid_argument("initial_condition_bell: nx must be >= 8");
  InitialState s;
  s.rho.resize(nx);
  s.u.resize(nx);
  for (std::size_t i = 0; i < nx; ++i) {
    const double x = static_cast<double>(i) / static_cast<double>(nx - 1);
    const double bump = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * x));
    s.rho[i] = p.rho_base + (p.rho_peak - p.rho_base) * bump;
    s.u[i] = p.u_base + (p.u_peak - p.u_base) * bump;
  }
  // Exact periodic closure.
  s.rho[nx - 1] = s.rho[0];
  s.u[nx - 1] = s.u[0];
  return s;
}

GridField solve_arz_lax_friedrichs(const ArzParams& params, const InitialState& initial,
                                   std::size_t nt, double t_max, SolveReport* report) {
  params.validate();
  const std::size_t nx = initial.rho.size();
  if (nx < 3 || initial.u.size() != nx) {
    throw DimensionError("solve_arz: initial state sizes must match and be >= 3");
  }
  GridField field(nx, nt, 0.0, 1.0, 0.0, t_max);
  const std::size_t n = nx - 1;  // unique ring nodes
  const double dx = field.dx();
  const double dt = field.dt();
  const double ratio = dt / dx;
  const double decay = std::exp(-dt / params.tau);

  std::vector<double> rho(initial.rho.begin(), initial.rho.begin() + static_cast<long>(n));
  std::vector<double> vel(initial.u.begin(), initial.u.begin() + static_cast<long>(n));
  std::vector<double> y(n), f_rho(n), f_y(n), rho_next(n), y_next(n);

  auto store = [&](std::size_t j) {
    for (std::size_t i = 0; i < n; ++i) {
      field.rho.at(i, j) = rho[i];
      field.u.at(i, j) = vel[i];
    }
    field.rho.at(n, j) = rho[0];
    field.u.at(n, j) = vel[0];
  };
  auto mass = [&]() {
    double m = 0.0;
    for (double r : rho) m += r;
    return m * dx;
  };

  SolveReport local;
  local.mass.push_back(mass());
  store(0);
  for (std::size_t step = 1; step < nt; ++step) {
    double max_speed = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double h = params.hesitation(rho[i]);
      y[i] = rho[i] * (vel[i] + h);
      f_rho[i] = rho[i] * vel[i];
      f_y[i] = y[i] * vel[i];
      const double lambda1 = vel[i] - rho[i] * params.u_max / params.rho_max;
      max_speed = std::max({max_speed, std::abs(vel[i]), std::abs(lambda1)});
    }
    const double courant = ratio * max_speed;
    local.max_courant = std::max(local.max_courant, courant);
    if (courant > 1.0) {
      std::ostringstream os;
      os << "CFL violated at step " << step << ": wave speed " << max_speed << ", dt/dx "
         << ratio << ", Courant number " << courant;
      throw NumericalError(os.str());
    }
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t l = (i + n - 1) % n, r = (i + 1) % n;
      rho_next[i] = 0.5 * (rho[l] + rho[r]) - 0.5 * ratio * (f_rho[r] - f_rho[l]);
      y_next[i] = 0.5 * (y[l] + y[r]) - 0.5 * ratio * (f_y[r] - f_y[l]);
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (!(rho_next[i] >= 0.0)) {
        std::ostringstream os;
        os << "negative or non-finite density " << rho_next[i] << " at step " << step
           << ", node " << i;
        throw NumericalError(os.str());
      }
      rho[i] = rho_next[i];
      const double ueq = params.ueq(rho[i]);
      const double u_star = rho[i] > 0.0 ? y_next[i] / rho[i] - params.hesitation(rho[i]) : ueq;
      vel[i] = ueq + (u_star - ueq) * decay;
    }
    local.mass.push_back(mass());
    local.max_mass_drift =
        std::max(local.max_mass_drift, std::abs(local.mass.back() - local.mass[local.mass.size() - 2]));
    store(step);
  }
  if (!field.rho.all_finite() || !field.u.all_finite()) {
    throw NumericalError("solve_arz: non-finite solution");
  }
  if (report) *report = std::move(local);
  return field;
}

GridField add_observation_noise(const GridField& field, double sigma, std::uint64_t seed) {
  if (sigma < 0.0) throw std::invalid_argument("noise sigma must be >= 0");
  GridField out = field;
  if (sigma == 0.0) return out;
  Rng rng = make_stream(seed, "observation-noise");
  std::normal_distribution<double> noise(0.0, sigma);
  for (std::size_t i = 0; i < out.rho.size(); ++i) {
    out.rho[i] = std::max(0.0, out.rho[i] + noise(rng));
    out.u[i] = std::max(0.0, out.u[i] + noise(rng));
  }
  return out;
}

}  // namespace flowuq::pde
