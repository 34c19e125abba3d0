#pragma once

// ARZ traffic model on a ring road, advanced with the Lax-Friedrichs scheme.
//
//   rho_t + (rho u)_x = 0
//   (u + h(rho))_t + u (u + h(rho))_x = (U_eq(rho) - u) / tau
//
// with U_eq(rho) = u_max (1 - rho/rho_max) and h(rho) = U_eq(0) - U_eq(rho).
// The system is stepped in conservative variables (rho, y = rho (u + h)),
// followed by an exact integration of the relaxation term over dt.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "flowuq/tensor.hpp"

namespace flowuq::pde {

struct ArzParams {
  double rho_max = 1.13;
  double u_max = 1.02;
  double tau = 0.02;

  void validate() const;
  double ueq(double rho) const { return u_max * (1.0 - rho / rho_max); }
  double hesitation(double rho) const { return u_max * rho / rho_max; }
};

/// Node-based space-time lattice. Column j is time t_min + j*dt, row i is
/// position x_min + i*dx; on the ring the last row duplicates the first.
struct GridField {
  double x_min = 0.0, x_max = 1.0;
  double t_min = 0.0, t_max = 3.0;
  std::size_t nx = 0, nt = 0;
  Tensor rho;  // [nx, nt]
  Tensor u;    // [nx, nt]

  GridField() = default;
  GridField(std::size_t nx, std::size_t nt, double x_min = 0.0, double x_max = 1.0,
            double t_min = 0.0, double t_max = 3.0);

  double dx() const { return (x_max - x_min) / static_cast<double>(nx - 1); }
  double dt() const { return (t_max - t_min) / static_cast<double>(nt - 1); }
  double x(std::size_t i) const { return x_min + static_cast<double>(i) * dx(); }
  double t(std::size_t j) const { return t_min + static_cast<double>(j) * dt(); }

  /// Throws NumericalError on non-finite or negative states.
  void validate_physical() const;
};

struct InitialState {
  std::vector<double> rho;
  std::vector<double> u;
};

/// Raised-cosine bumps b(x) = (1 - cos 2 pi x)/2 lifted between base and
/// peak values; peak at the road midpoint, periodic in value and slope.
struct BellProfile {
  double rho_base = 0.1;
  double rho_peak = 0.7;
  double u_base = 0.4;
  double u_peak = 0.6;
};

InitialState initial_condition_bell(std::size_t nx, const BellProfile& profile = {});

struct SolveReport {
  std::vector<double> mass;  // sum(rho) * dx over unique ring nodes, per time column
  double max_courant = 0.0;
  double max_mass_drift = 0.0;  // max |mass[j+1] - mass[j]|
};

/// Solves over [t_min, t_max] with nt time columns. Aborts with NumericalError
/// on a CFL violation or negative density.
GridField solve_arz_lax_friedrichs(const ArzParams& params, const InitialState& initial,
                                   std::size_t nt, double t_max = 3.0,
                                   SolveReport* report = nullptr);

/// Adds independent N(0, sigma^2) noise to every cell of both channels and
/// clips at zero from below.
GridField add_observation_noise(const GridField& field, double sigma, std::uint64_t seed);

}  // namespace flowuq::pde
