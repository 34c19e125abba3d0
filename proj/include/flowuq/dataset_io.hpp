#pragma once

// Dataset files: a CSV with header `x,t,rho,u` (one row per grid cell,
// position-major) plus a JSON sidecar carrying grid metadata, ARZ
// parameters, noise sigma and seed. Real-world data uses the same layout;
// the clean (noise-free) companion file is optional.

#include <cstdint>
#include <filesystem>
#include <optional>

#include "json.hpp"
#include "flowuq/pde.hpp"

namespace flowuq::io {

struct DatasetMeta {
  std::optional<pde::ArzParams> arz;
  std::optional<pde::BellProfile> bell;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
};

struct Dataset {
  pde::GridField observed;              // what sensors would report (noisy)
  std::optional<pde::GridField> clean;  // ground-truth mean, when known
  DatasetMeta meta;
};

void write_field_csv(const std::filesystem::path& path, const pde::GridField& field);
pde::GridField read_field_csv(const std::filesystem::path& path, std::size_t nx, std::size_t nt,
                              double x_min, double x_max, double t_min, double t_max);

/// Writes `<dir>/<stem>.json`, `<stem>.csv` and, if present, `<stem>_clean.csv`.
void write_dataset(const std::filesystem::path& sidecar, const Dataset& ds);
Dataset read_dataset(const std::filesystem::path& sidecar);

/// Shortest round-trip decimal form of a double.
std::string format_double(double v);

}  // namespace flowuq::io
