#pragma once

// Evaluation metrics: relative error of the predicted mean, reverse KL
// between prediction and data distributions, and empirical prediction bands.

#include <filesystem>
#include <span>
#include <vector>

#include "json.hpp"
#include "flowuq/dataset.hpp"
#include "flowuq/flow.hpp"
#include "flowuq/pde.hpp"

namespace flowuq::metrics {

/// 100 * ||pred - truth||_2 / ||truth||_2. Throws on a zero-norm truth.
double relative_error(std::span<const double> pred, std::span<const double> truth);

struct GaussianFit {
  double mean = 0.0;
  double var = 1.0;
};

inline constexpr double kVarianceFloor = 1e-8;

/// Moment-matched Gaussian (unbiased variance). A variance below the floor
/// is raised to it and `floored` is set.
GaussianFit fit_gaussian(std::span<const double> samples, bool* floored = nullptr);
/// Closed-form KL(p || q) between univariate Gaussians.
double gaussian_kl(const GaussianFit& p, const GaussianFit& q);

enum class KlEstimator { gaussian, histogram };

/// KL(pred || data) for one coordinate, clamped at zero. Both sides need at
/// least 30 samples. `warnings` counts variance-floor events.
double reverse_kl(std::span<const double> pred, std::span<const double> data,
                  KlEstimator estimator = KlEstimator::gaussian, std::size_t* warnings = nullptr);

struct Band {
  double lo = 0.0;
  double hi = 0.0;
};

/// Quantile of sorted data with linear interpolation between order statistics.
double quantile_sorted(std::span<const double> sorted, double q);
Band prediction_band(std::span<const double> samples, double q_lo = 0.025, double q_hi = 0.975);

struct CoordRecord {
  double x = 0.0, t = 0.0;
  int channel = 0;  // 0 = rho, 1 = u
  double mean = 0.0, std = 0.0, lo = 0.0, hi = 0.0, kl = 0.0;
};

struct EvalOptions {
  std::size_t samples = 100;       // generator draws per coordinate
  std::size_t data_samples = 100;  // noise realizations per coordinate
  double q_lo = 0.025;
  double q_hi = 0.975;
  KlEstimator estimator = KlEstimator::gaussian;
  std::uint64_t seed = 0;
};

struct EvalReport {
  double re_rho = 0.0, re_u = 0.0;
  double kl_rho = 0.0, kl_u = 0.0;
  double coverage_rho = 0.0, coverage_u = 0.0, coverage = 0.0;
  std::size_t n_samples = 0;
  std::size_t n_coords = 0;
  std::size_t variance_warnings = 0;
  std::vector<CoordRecord> records;

  nlohmann::json summary_json() const;
};

/// Evaluates the generator over every cell of `truth`, whose values are the
/// noise-free mean field. Data samples are truth + N(0, noise_sigma^2); band
/// coverage is measured on one further held-out noise realization.
EvalReport evaluate(flow::FlowModel& model, const data::CoordTransform& transform,
                    const pde::GridField& truth, double noise_sigma, const EvalOptions& options);

void write_report_json(const std::filesystem::path& path, const EvalReport& report);
/// CSV `x,t,channel,mean,std,lo,hi,kl`.
void write_records_csv(const std::filesystem::path& path, const EvalReport& report);

}  // namespace flowuq::metrics
