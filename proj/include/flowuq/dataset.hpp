#pragma once

// Observed/unobserved coordinate sets from loop-detector layouts, coordinate
// normalization, and the observation/prediction matrices fed to the critic.

#include <cstddef>
#include <functional>
#include <vector>

#include "flowuq/pde.hpp"
#include "flowuq/rng.hpp"

namespace flowuq::data {

struct Observation {
  double x = 0.0, t = 0.0;
  double rho = 0.0, u = 0.0;
  std::size_t ix = 0, it = 0;  // grid indices
};

struct Coord {
  double x = 0.0, t = 0.0;
  std::size_t ix = 0, it = 0;
};

/// Observed region O (every time step at each loop row) and collocation
/// region C (every other cell). `observed` is ordered by loop, then time.
struct ObservationSet {
  std::vector<Observation> observed;
  std::vector<Coord> collocation;
  std::vector<double> loop_positions;  // sorted
  std::vector<std::size_t> loop_rows;  // grid row of each loop
  std::size_t nx = 0, nt = 0;
  double x_min = 0.0, x_max = 1.0, t_min = 0.0, t_max = 1.0;
  /// When > 0, data matrices add a fresh N(0, sigma^2) realization per draw.
  double noise_sigma = 0.0;

  std::size_t n_loops() const { return loop_rows.size(); }
  const Observation& at(std::size_t loop, std::size_t it) const { return observed[loop * nt + it]; }
};

/// Equally spaced loops on the ring (the duplicated end row is never used
/// as a separate loop unless every row is observed).
ObservationSet place_loops(const pde::GridField& grid, std::size_t n_loops);
/// Loops at explicit grid rows (sorted and de-duplicated).
ObservationSet place_loops_at(const pde::GridField& grid, std::vector<std::size_t> rows);

/// Affine map of x and t onto [-1, 1].
struct CoordTransform {
  double x_lo = 0.0, x_hi = 1.0, t_lo = 0.0, t_hi = 1.0;

  double x_scale() const { return 2.0 / (x_hi - x_lo); }
  double t_scale() const { return 2.0 / (t_hi - t_lo); }
  double norm_x(double x) const { return (x - x_lo) * x_scale() - 1.0; }
  double norm_t(double t) const { return (t - t_lo) * t_scale() - 1.0; }
  double denorm_x(double v) const { return (v + 1.0) / x_scale() + x_lo; }
  double denorm_t(double v) const { return (v + 1.0) / t_scale() + t_lo; }
  /// [n,2] physical (x,t) -> [n,2] normalized.
  Tensor apply(const Tensor& coords) const;
};

struct NormalizedSet {
  ObservationSet set;  // coordinates in [-1, 1]
  CoordTransform transform;
};

/// Throws std::invalid_argument on an empty set or a degenerate domain.
NormalizedSet normalize_coords(const ObservationSet& set);
ObservationSet denormalize_coords(const NormalizedSet& normalized);

enum class MatrixSource { data, generator };

/// Channels-first [2, n_loops, t_window]; channel 0 = rho, channel 1 = u.
struct StateMatrix {
  Tensor values;
  MatrixSource kind = MatrixSource::data;
  std::size_t sample_index = 0;
  std::size_t t_start = 0;
};

/// Draws a state for every (x,t) row of an [n,2] physical coordinate tensor.
using StateSampler = std::function<Tensor(const Tensor& coords, Rng& rng)>;

std::vector<std::size_t> draw_windows(Rng& rng, std::size_t nt, std::size_t t_window,
                                      std::size_t count);
/// Physical coordinates of one window, ordered loop-major: [n_loops*t_window, 2].
Tensor window_coords(const ObservationSet& set, std::size_t t_start, std::size_t t_window);
/// Rearranges [n_loops*t_window, 2] rows into a [2, n_loops, t_window] matrix.
Tensor rows_to_matrix(const Tensor& rows, std::size_t n_loops, std::size_t t_window);

std::vector<StateMatrix> assemble_matrices(const ObservationSet& set, MatrixSource source,
                                           std::size_t n_samples, std::size_t t_window, Rng& rng,
                                           const StateSampler& sampler = {});
/// Data matrix at a fixed window. With `add_noise`, a fresh N(0, sigma^2)
/// realization (sigma = set.noise_sigma) is added on top of the stored values.
StateMatrix data_matrix(const ObservationSet& set, std::size_t t_start, std::size_t t_window,
                        Rng& rng, bool add_noise = true);

/// Stacks matrices into a critic batch [N, 2, n_loops, t_window].
Tensor stack_matrices(const std::vector<StateMatrix>& matrices);

}  // namespace flowuq::data
