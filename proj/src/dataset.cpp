#include "flowuq/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace flowuq::data {

ObservationSet place_loops(const pde::GridField& grid, std::size_t n_loops) {
  if (n_loops > grid.nx) {
    throw std::invalid_argument("place_loops: " + std::to_string(n_loops) + " loops exceed " +
                                std::to_string(grid.nx) + " grid rows");
  }
  if (n_loops < 2) throw std::invalid_argument("place_loops: need at least 2 loops");
  std::vector<std::size_t> rows;
  if (n_loops == grid.nx) {
    for (std::size_t i = 0; i < grid.nx; ++i) rows.push_back(i);
  } else {
    const double ring = static_cast<double>(grid.nx - 1);
    for (std::size_t k = 0; k < n_loops; ++k) {
      rows.push_back(static_cast<std::size_t>(
          std::llround(static_cast<double>(k) * ring / static_cast<double>(n_loops))));
    }
  }
  return place_loops_at(grid, std::move(rows));
}

ObservationSet place_loops_at(const pde::GridField& grid, std::vector<std::size_t> rows) {
  std::sort(rows.begin(), rows.end());
  rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
  if (rows.empty()) throw std::invalid_argument("place_loops: no loop rows");
  if (rows.back() >= grid.nx) throw std::invalid_argument("place_loops: loop row outside grid");
  ObservationSet s;
  s.nx = grid.nx;
  s.nt = grid.nt;
  s.x_min = grid.x_min;
  s.x_max = grid.x_max;
  s.t_min = grid.t_min;
  s.t_max = grid.t_max;
  s.loop_rows = rows;
  std::vector<bool> is_loop(grid.nx, false);
  for (auto r : rows) {
    is_loop[r] = true;
    s.loop_positions.push_back(grid.x(r));
    for (std::size_t j = 0; j < grid.nt; ++j) {
      s.observed.push_back({grid.x(r), grid.t(j), grid.rho.at(r, j), grid.u.at(r, j), r, j});
    }
  }
  for (std::size_t i = 0; i < grid.nx; ++i) {
    if (is_loop[i]) continue;
    for (std::size_t j = 0; j < grid.nt; ++j) s.collocation.push_back({grid.x(i), grid.t(j), i, j});
  }
  return s;
}

Tensor CoordTransform::apply(const Tensor& coords) const {
  require_rank(coords, 2, "CoordTransform::apply");
  Tensor out(coords.shape());
  for (std::size_t i = 0; i < coords.rows(); ++i) {
    out.at(i, 0) = norm_x(coords.at(i, 0));
    out.at(i, 1) = norm_t(coords.at(i, 1));
  }
  return out;
}

NormalizedSet normalize_coords(const ObservationSet& set) {
  if (set.observed.empty() && set.collocation.empty()) {
    throw std::invalid_argument("normalize_coords: empty observation set");
  }
  double xl = INFINITY, xh = -INFINITY, tl = INFINITY, th = -INFINITY;
  auto visit = [&](double x, double t) {
    xl = std::min(xl, x);
    xh = std::max(xh, x);
    tl = std::min(tl, t);
    th = std::max(th, t);
  };
  for (const auto& o : set.observed) visit(o.x, o.t);
  for (const auto& c : set.collocation) visit(c.x, c.t);
  if (!(xh > xl)) throw std::invalid_argument("normalize_coords: degenerate x domain");
  if (!(th > tl)) throw std::invalid_argument("normalize_coords: degenerate t domain");
  NormalizedSet out{set, CoordTransform{xl, xh, tl, th}};
  const auto& tr = out.transform;
  for (auto& o : out.set.observed) {
    o.x = tr.norm_x(o.x);
    o.t = tr.norm_t(o.t);
  }
  for (auto& c : out.set.collocation) {
    c.x = tr.norm_x(c.x);
    c.t = tr.norm_t(c.t);
  }
  for (auto& p : out.set.loop_positions) p = tr.norm_x(p);
  return out;
}

ObservationSet denormalize_coords(const NormalizedSet& n) {
  ObservationSet s = n.set;
  const auto& tr = n.transform;
  for (auto& o : s.observed) {
    o.x = tr.denorm_x(o.x);
    o.t = tr.denorm_t(o.t);
  }
  for (auto& c : s.collocation) {
    c.x = tr.denorm_x(c.x);
    c.t = tr.denorm_t(c.t);
  }
  for (auto& p : s.loop_positions) p = tr.denorm_x(p);
  return s;
}

std::vector<std::size_t> draw_windows(Rng& rng, std::size_t nt, std::size_t t_window,
                                      std::size_t count) {
  if (t_window == 0 || t_window > nt) {
    throw std::invalid_argument("time window of " + std::to_string(t_window) +
                                " columns does not fit " + std::to_string(nt) + " time steps");
  }
  std::uniform_int_distribution<std::size_t> start(0, nt - t_window);
  std::vector<std::size_t> out(count);
  for (auto& s : out) s = start(rng);
  return out;
}

Tensor window_coords(const ObservationSet& set, std::size_t t_start, std::size_t t_window) {
  const std::size_t loops = set.n_loops();
  Tensor out({loops * t_window, 2});
  for (std::size_t l = 0; l < loops; ++l) {
    for (std::size_t j = 0; j < t_window; ++j) {
      const auto& o = set.at(l, t_start + j);
      out.at(l * t_window + j, 0) = o.x;
      out.at(l * t_window + j, 1) = o.t;
    }
  }
  return out;
}

Tensor rows_to_matrix(const Tensor& rows, std::size_t n_loops, std::size_t t_window) {
  if (rows.rank() != 2 || rows.rows() != n_loops * t_window || rows.cols() != 2) {
    throw DimensionError("rows_to_matrix: expected [" + std::to_string(n_loops * t_window) +
                         ",2], got " + shape_to_string(rows.shape()));
  }
  Tensor m({2, n_loops, t_window});
  for (std::size_t r = 0; r < rows.rows(); ++r) {
    m[r] = rows.at(r, 0);
    m[n_loops * t_window + r] = rows.at(r, 1);
  }
  return m;
}

StateMatrix data_matrix(const ObservationSet& set, std::size_t t_start, std::size_t t_window,
                        Rng& rng, bool add_noise) {
  if (t_start + t_window > set.nt) throw std::invalid_argument("data_matrix: window out of range");
  const std::size_t loops = set.n_loops();
  Tensor rows({loops * t_window, 2});
  const bool noisy = add_noise && set.noise_sigma > 0.0;
  std::normal_distribution<double> noise(0.0, noisy ? set.noise_sigma : 1.0);
  for (std::size_t l = 0; l < loops; ++l) {
    for (std::size_t j = 0; j < t_window; ++j) {
      const auto& o = set.at(l, t_start + j);
      double rho = o.rho, u = o.u;
      if (noisy) {
        rho += noise(rng);
        u += noise(rng);
      }
      rows.at(l * t_window + j, 0) = rho;
      rows.at(l * t_window + j, 1) = u;
    }
  }
  return {rows_to_matrix(rows, loops, t_window), MatrixSource::data, 0, t_start};
}

std::vector<StateMatrix> assemble_matrices(const ObservationSet& set, MatrixSource source,
                                           std::size_t n_samples, std::size_t t_window, Rng& rng,
                                           const StateSampler& sampler) {
  if (n_samples == 0) throw std::invalid_argument("assemble_matrices: need at least one sample");
  if (source == MatrixSource::generator && !sampler) {
    throw std::invalid_argument("assemble_matrices: generator source needs a sampler");
  }
  const auto starts = draw_windows(rng, set.nt, t_window, n_samples);
  std::vector<StateMatrix> out;
  out.reserve(n_samples);
  for (std::size_t w = 0; w < n_samples; ++w) {
    if (source == MatrixSource::data) {
      out.push_back(data_matrix(set, starts[w], t_window, rng));
    } else {
      Tensor rows = sampler(window_coords(set, starts[w], t_window), rng);
      out.push_back({rows_to_matrix(rows, set.n_loops(), t_window), MatrixSource::generator, w,
                     starts[w]});
    }
    out.back().sample_index = w;
  }
  return out;
}

Tensor stack_matrices(const std::vector<StateMatrix>& matrices) {
  if (matrices.empty()) throw std::invalid_argument("stack_matrices: empty list");
  const Shape& s = matrices.front().values.shape();
  Tensor out({matrices.size(), s[0], s[1], s[2]});
  std::size_t off = 0;
  for (const auto& m : matrices) {
    if (m.values.shape() != s) throw DimensionError("stack_matrices: mixed matrix shapes");
    for (double v : m.values.values()) out[off++] = v;
  }
  return out;
}

}  // namespace flowuq::data
