#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "flowuq/dataset_io.hpp"
#include "flowuq/pde.hpp"

using namespace flowuq;
using namespace flowuq::pde;

namespace {

// L2 distance at final time between a solution on n unique nodes and a
// finer one sampled at the same positions.
double final_l2(const GridField& coarse, const GridField& fine) {
  const std::size_t n = coarse.nx - 1, factor = (fine.nx - 1) / n;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = coarse.rho.at(i, coarse.nt - 1) - fine.rho.at(i * factor, fine.nt - 1);
    s += d * d;
  }
  return std::sqrt(s / static_cast<double>(n));
}

GridField solve_ring(std::size_t n, double t_end) {
  const std::size_t nt = 4 * n * static_cast<std::size_t>(std::lround(t_end * 3)) / 9 + 1;
  return solve_arz_lax_friedrichs({}, initial_condition_bell(n + 1), nt, t_end);
}

}  // namespace

TEST_CASE("bell initial condition") {
  const auto ic = initial_condition_bell(61);
  CHECK(std::abs(ic.rho.front() - ic.rho.back()) < 1e-12);
  CHECK(std::abs(ic.u.front() - ic.u.back()) < 1e-12);
  const auto max_it = std::max_element(ic.rho.begin(), ic.rho.end());
  CHECK(std::distance(ic.rho.begin(), max_it) == 30);
  CHECK(*std::min_element(ic.rho.begin(), ic.rho.end()) == doctest::Approx(ic.rho.front()));
  // Central difference across the seam: the periodic slope vanishes at the ends.
  CHECK(std::abs(ic.rho[1] - ic.rho[59]) < 1e-12);
  CHECK(std::abs(ic.u[1] - ic.u[59]) < 1e-12);
  CHECK_THROWS(initial_condition_bell(7));
}

TEST_CASE("constant equilibrium is a fixed point") {
  const ArzParams p;
  const double rho_star = 0.4;
  InitialState s{std::vector<double>(41, rho_star), std::vector<double>(41, p.ueq(rho_star))};
  const GridField f = solve_arz_lax_friedrichs(p, s, 161, 3.0);
  for (std::size_t i = 0; i < f.rho.size(); ++i) {
    CHECK(std::abs(f.rho[i] - rho_star) < 1e-10);
    CHECK(std::abs(f.u[i] - p.ueq(rho_star)) < 1e-10);
  }
}

TEST_CASE("mass is conserved on the ring") {
  SolveReport rep;
  const GridField f = solve_arz_lax_friedrichs({}, initial_condition_bell(61), 240, 3.0, &rep);
  CHECK(rep.mass.size() == 240);
  CHECK(rep.max_mass_drift < 1e-10);
  CHECK(rep.max_courant <= 1.0);
  f.validate_physical();
  for (std::size_t j = 0; j < f.nt; ++j) {
    CHECK(f.rho.at(0, j) == f.rho.at(f.nx - 1, j));
    CHECK(f.u.at(0, j) == f.u.at(f.nx - 1, j));
  }
}

TEST_CASE("first-order convergence under grid halving") {
  const std::size_t n = 60;
  const GridField c = solve_ring(n, 1.0), m = solve_ring(2 * n, 1.0), ref = solve_ring(8 * n, 1.0);
  const double ratio = final_l2(c, ref) / final_l2(m, ref);
  MESSAGE("convergence factor " << ratio);
  CHECK(ratio >= 1.5);
}

TEST_CASE("CFL violation aborts with the step and wave speed") {
  try {
    solve_arz_lax_friedrichs({}, initial_condition_bell(241), 60, 3.0);
    FAIL("expected a CFL abort");
  } catch (const NumericalError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("step 1") != std::string::npos);
    CHECK(msg.find("wave speed") != std::string::npos);
  }
}

TEST_CASE("invalid parameters are rejected") {
  CHECK_THROWS(solve_arz_lax_friedrichs({1.0, 0.0, 0.1}, initial_condition_bell(20), 100));
  CHECK_THROWS(solve_arz_lax_friedrichs({1.0, 1.0, -0.1}, initial_condition_bell(20), 100));
}

TEST_CASE("observation noise") {
  const GridField f = solve_arz_lax_friedrichs({}, initial_condition_bell(16), 80, 3.0);
  SUBCASE("zero sigma leaves the field untouched") {
    const GridField g = add_observation_noise(f, 0.0, 3);
    CHECK(g.rho == f.rho);
    CHECK(g.u == f.u);
  }
  SUBCASE("per-cell spread over re-seeds matches sigma") {
    const std::size_t reps = 10000;
    GridField small(8, 2);
    small.rho.fill(0.5);
    small.u.fill(0.5);
    std::vector<double> sum(16, 0.0), sq(16, 0.0);
    for (std::size_t s = 0; s < reps; ++s) {
      const GridField g = add_observation_noise(small, 0.02, s);
      for (std::size_t i = 0; i < 16; ++i) {
        const double d = g.rho[i] - 0.5;
        sum[i] += d;
        sq[i] += d * d;
      }
    }
    for (std::size_t i = 0; i < 16; ++i) {
      const double mean = sum[i] / reps;
      const double sd = std::sqrt(sq[i] / reps - mean * mean);
      CHECK(std::abs(sd - 0.02) / 0.02 < 0.02);
    }
  }
  SUBCASE("noise mean is centred") {
    GridField big(200, 200);
    big.rho.fill(1.0);
    big.u.fill(1.0);
    const GridField g = add_observation_noise(big, 0.02, 11);
    double s = 0.0;
    for (std::size_t i = 0; i < g.rho.size(); ++i) s += (g.rho[i] - 1.0) + (g.u[i] - 1.0);
    const double n = 2.0 * static_cast<double>(g.rho.size());
    CHECK(std::abs(s / n) < 3.0 * 0.02 / std::sqrt(n));
  }
  SUBCASE("values are clipped at zero") {
    GridField z(8, 2);
    const GridField g = add_observation_noise(z, 0.5, 4);
    for (double v : g.rho.values()) CHECK(v >= 0.0);
  }
}

TEST_CASE("full 240x960 ring road run") {
  SolveReport rep;
  const GridField f = solve_arz_lax_friedrichs({}, initial_condition_bell(240), 960, 3.0, &rep);
  double max_rho = 0.0;
  for (double v : f.rho.values()) max_rho = std::max(max_rho, v);
  CHECK(max_rho < 0.9);
  CHECK(rep.max_mass_drift < 1e-10);
  // The density peak travels: its position at t = 1 differs from t = 0.
  auto argmax_at = [&](std::size_t j) {
    std::size_t best = 0;
    for (std::size_t i = 0; i < f.nx; ++i)
      if (f.rho.at(i, j) > f.rho.at(best, j)) best = i;
    return best;
  };
  CHECK(argmax_at(0) != argmax_at(320));
}

TEST_CASE("dataset files round trip") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "flowuq_test_dataset";
  fs::remove_all(dir);
  const GridField clean = solve_arz_lax_friedrichs({}, initial_condition_bell(12), 48, 3.0);
  io::Dataset ds;
  ds.observed = add_observation_noise(clean, 0.02, 5);
  ds.clean = clean;
  ds.meta.arz = ArzParams{};
  ds.meta.noise_sigma = 0.02;
  ds.meta.seed = 5;
  io::write_dataset(dir / "d.json", ds);
  const io::Dataset back = io::read_dataset(dir / "d.json");
  CHECK(back.observed.rho == ds.observed.rho);
  CHECK(back.observed.u == ds.observed.u);
  REQUIRE(back.clean.has_value());
  CHECK(back.clean->rho == clean.rho);
  CHECK(back.meta.noise_sigma == 0.02);
  CHECK(back.meta.arz->rho_max == 1.13);
  std::ifstream csv(dir / "d.csv");
  std::string header;
  std::getline(csv, header);
  CHECK(header == "x,t,rho,u");
  fs::remove_all(dir);
}
