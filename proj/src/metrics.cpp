#include "flowuq/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <stdexcept>

#include "flowuq/dataset_io.hpp"

namespace flowuq::metrics {

double relative_error(std::span<const double> pred, std::span<const double> truth) {
  if (pred.size() != truth.size()) {
    throw DimensionError("relative_error: " + std::to_string(pred.size()) + " vs " +
                         std::to_string(truth.size()) + " values");
  }
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    num += (pred[i] - truth[i]) * (pred[i] - truth[i]);
    den += truth[i] * truth[i];
  }
  if (den == 0.0) throw std::invalid_argument("relative_error: truth has zero norm");
  return 100.0 * std::sqrt(num / den);
}

GaussianFit fit_gaussian(std::span<const double> samples, bool* floored) {
  if (samples.size() < 2) throw std::invalid_argument("fit_gaussian: need at least two samples");
  const double n = static_cast<double>(samples.size());
  double mean = 0.0;
  for (double v : samples) mean += v;
  mean /= n;
  double ss = 0.0;
  for (double v : samples) ss += (v - mean) * (v - mean);
  double var = ss / (n - 1.0);
  if (floored) *floored = false;
  if (var < kVarianceFloor) {
    var = kVarianceFloor;
    if (floored) *floored = true;
  }
  return {mean, var};
}

double gaussian_kl(const GaussianFit& p, const GaussianFit& q) {
  const double d = p.mean - q.mean;
  return 0.5 * (std::log(q.var / p.var) + (p.var + d * d) / q.var - 1.0);
}

namespace {

double histogram_kl(std::span<const double> pred, std::span<const double> data) {
  double lo = INFINITY, hi = -INFINITY;
  for (double v : pred) lo = std::min(lo, v), hi = std::max(hi, v);
  for (double v : data) lo = std::min(lo, v), hi = std::max(hi, v);
  if (!(hi > lo)) return 0.0;
  const std::size_t bins = std::max<std::size_t>(
      4, static_cast<std::size_t>(std::sqrt(static_cast<double>(std::min(pred.size(), data.size())))));
  std::vector<double> p(bins, 0.0), q(bins, 0.0);
  auto bin = [&](double v) {
    return std::min(bins - 1, static_cast<std::size_t>((v - lo) / (hi - lo) * static_cast<double>(bins)));
  };
  for (double v : pred) p[bin(v)] += 1.0;
  for (double v : data) q[bin(v)] += 1.0;
  // Additive smoothing keeps empty data bins finite.
  const double a = 0.5;
  const double np = static_cast<double>(pred.size()) + a * static_cast<double>(bins);
  const double nq = static_cast<double>(data.size()) + a * static_cast<double>(bins);
  double kl = 0.0;
  for (std::size_t b = 0; b < bins; ++b) {
    const double pb = (p[b] + a) / np, qb = (q[b] + a) / nq;
    kl += pb * std::log(pb / qb);
  }
  return kl;
}

}  // namespace

double reverse_kl(std::span<const double> pred, std::span<const double> data,
                  KlEstimator estimator, std::size_t* warnings) {
  if (pred.size() < 30 || data.size() < 30) {
    throw std::invalid_argument("reverse_kl: need at least 30 samples per side");
  }
  double kl = 0.0;
  if (estimator == KlEstimator::gaussian) {
    bool fp = false, fq = false;
    const GaussianFit p = fit_gaussian(pred, &fp);
    const GaussianFit q = fit_gaussian(data, &fq);
    if ((fp || fq) && warnings) ++*warnings;
    kl = gaussian_kl(p, q);
  } else {
    kl = histogram_kl(pred, data);
  }
  return std::max(0.0, kl);
}

double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw std::invalid_argument("quantile: no samples");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const std::size_t i = static_cast<std::size_t>(std::floor(pos));
  if (i + 1 >= sorted.size()) return sorted.back();
  const double f = pos - static_cast<double>(i);
  return sorted[i] + f * (sorted[i + 1] - sorted[i]);
}

Band prediction_band(std::span<const double> samples, double q_lo, double q_hi) {
  if (!(q_lo > 0.0 && q_hi < 1.0 && q_lo < q_hi)) {
    throw std::invalid_argument("prediction_band: need 0 < q_lo < q_hi < 1");
  }
  std::vector<double> s(samples.begin(), samples.end());
  std::sort(s.begin(), s.end());
  return {quantile_sorted(s, q_lo), quantile_sorted(s, q_hi)};
}

nlohmann::json EvalReport::summary_json() const {
  return {{"re_rho", re_rho},
          {"re_u", re_u},
          {"kl_rho", kl_rho},
          {"kl_u", kl_u},
          {"coverage_rho", coverage_rho},
          {"coverage_u", coverage_u},
          {"coverage", coverage},
          {"n_samples", n_samples},
          {"n_coords", n_coords},
          {"variance_warnings", variance_warnings}};
}

EvalReport evaluate(flow::FlowModel& model, const data::CoordTransform& transform,
                    const pde::GridField& truth, double noise_sigma, const EvalOptions& options) {
  if (options.samples < 2) throw std::invalid_argument("evaluate: need at least two samples");
  const std::size_t k = truth.nx * truth.nt;
  Tensor coords({k, 2});
  for (std::size_t i = 0; i < truth.nx; ++i) {
    for (std::size_t j = 0; j < truth.nt; ++j) {
      coords.at(i * truth.nt + j, 0) = transform.norm_x(truth.x(i));
      coords.at(i * truth.nt + j, 1) = transform.norm_t(truth.t(j));
    }
  }
  Rng sample_rng = make_stream(options.seed, "eval-samples");
  const Tensor samples = model.sample(coords, options.samples, sample_rng);
  Rng data_rng = make_stream(options.seed, "eval-data");
  Rng holdout_rng = make_stream(options.seed, "eval-holdout");
  std::normal_distribution<double> noise(0.0, 1.0);
  const bool want_kl = options.data_samples >= 30 && options.samples >= 30;

  EvalReport rep;
  rep.n_samples = options.samples;
  rep.n_coords = k;
  rep.records.reserve(2 * k);
  std::vector<double> mean_field[2] = {std::vector<double>(k), std::vector<double>(k)};
  std::vector<double> truth_field[2] = {truth.rho.storage(), truth.u.storage()};
  double kl_sum[2] = {0.0, 0.0};
  std::size_t covered[2] = {0, 0};
  std::vector<double> s(options.samples), d(options.data_samples);
  for (std::size_t c = 0; c < k; ++c) {
    for (int ch = 0; ch < 2; ++ch) {
      for (std::size_t n = 0; n < options.samples; ++n) s[n] = samples[2 * (n * k + c) + ch];
      const double tv = truth_field[ch][c];
      CoordRecord r;
      r.x = truth.x(c / truth.nt);
      r.t = truth.t(c % truth.nt);
      r.channel = ch;
      const GaussianFit fit = fit_gaussian(s);
      r.mean = fit.mean;
      r.std = std::sqrt(fit.var);
      const Band b = prediction_band(s, options.q_lo, options.q_hi);
      r.lo = b.lo;
      r.hi = b.hi;
      if (want_kl) {
        for (double& v : d) v = tv + noise_sigma * noise(data_rng);
        r.kl = reverse_kl(s, d, options.estimator, &rep.variance_warnings);
        kl_sum[ch] += r.kl;
      }
      const double held = tv + noise_sigma * noise(holdout_rng);
      if (held >= b.lo && held <= b.hi) ++covered[ch];
      mean_field[ch][c] = fit.mean;
      rep.records.push_back(r);
    }
  }
  if (rep.variance_warnings > 0) {
    std::cerr << "warning: variance floored at " << kVarianceFloor << " for "
              << rep.variance_warnings << " coordinate fits\n";
  }
  rep.re_rho = relative_error(mean_field[0], truth_field[0]);
  rep.re_u = relative_error(mean_field[1], truth_field[1]);
  const double kd = static_cast<double>(k);
  rep.kl_rho = kl_sum[0] / kd;
  rep.kl_u = kl_sum[1] / kd;
  rep.coverage_rho = static_cast<double>(covered[0]) / kd;
  rep.coverage_u = static_cast<double>(covered[1]) / kd;
  rep.coverage = 0.5 * (rep.coverage_rho + rep.coverage_u);
  return rep;
}

void write_report_json(const std::filesystem::path& path, const EvalReport& report) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << report.summary_json().dump(2) << '\n';
}

void write_records_csv(const std::filesystem::path& path, const EvalReport& report) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "x,t,channel,mean,std,lo,hi,kl\n";
  for (const auto& r : report.records) {
    out << io::format_double(r.x) << ',' << io::format_double(r.t) << ','
        << (r.channel == 0 ? "rho" : "u") << ',' << io::format_double(r.mean) << ','
        << io::format_double(r.std) << ',' << io::format_double(r.lo) << ','
        << io::format_double(r.hi) << ',' << io::format_double(r.kl) << '\n';
  }
}

}  // namespace flowuq::metrics
