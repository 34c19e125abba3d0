#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "flowuq/metrics.hpp"

using namespace flowuq;
using namespace flowuq::metrics;

namespace {

std::vector<double> normal_draws(std::uint64_t seed, std::size_t n, double mean, double sd) {
  Rng rng = make_stream(seed, "metrics");
  std::normal_distribution<double> d(mean, sd);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

// Flow with identity couplings and a constant prior N(mean, sd^2) per channel.
flow::FlowModel constant_flow(double m0, double m1, double sd) {
  flow::FlowConfig cfg;
  cfg.pnet_width = 4;
  cfg.pnet_depth = 1;
  cfg.coupling_layers = 2;
  cfg.coupling_width = 4;
  Rng rng = make_stream(1, "const-flow");
  flow::FlowModel m = flow::FlowModel::create(cfg, rng);
  for (auto& p : m.params)
    if (p.trainable && p.name.find(".gamma") == std::string::npos) p.value.fill(0.0);
  for (auto& l : m.layers) m.params[l.k_net.output.bias].value.fill(1e3);
  m.params[m.mu_net.output.bias].value = Tensor({2}, {m0, m1});
  m.params[m.sigma_net.output.bias].value.fill(std::log(std::expm1(sd - cfg.sigma_floor)));
  return m;
}

}  // namespace

TEST_CASE("relative error") {
  const std::vector<double> truth = normal_draws(1, 200, 0.5, 0.2);
  CHECK(relative_error(truth, truth) == 0.0);
  std::vector<double> scaled(truth);
  for (double& v : scaled) v *= 1.1;
  CHECK(relative_error(scaled, truth) == doctest::Approx(10.0));
  SUBCASE("two-pass norm oracle") {
    const std::vector<double> pred = normal_draws(2, 200, 0.5, 0.2);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) num += (pred[i] - truth[i]) * (pred[i] - truth[i]);
    for (double v : truth) den += v * v;
    CHECK(std::abs(relative_error(pred, truth) - 100.0 * std::sqrt(num) / std::sqrt(den)) < 1e-12);
    std::vector<double> cp(pred), ct(truth);
    for (double& v : cp) v *= -3.0;
    for (double& v : ct) v *= -3.0;
    CHECK(relative_error(cp, ct) == doctest::Approx(relative_error(pred, truth)).epsilon(1e-12));
  }
  CHECK_THROWS(relative_error(truth, std::vector<double>(200, 0.0)));
  CHECK_THROWS(relative_error(truth, std::vector<double>(10, 1.0)));
}

TEST_CASE("reverse KL") {
  const auto a = normal_draws(3, 10000, 0.0, 1.0);
  CHECK(reverse_kl(a, a) == 0.0);
  SUBCASE("unit shift has KL one half") {
    const auto b = normal_draws(4, 10000, 1.0, 1.0);
    CHECK(std::abs(reverse_kl(a, b) - 0.5) / 0.5 < 0.05);
  }
  SUBCASE("closed form and asymmetry") {
    const GaussianFit p{0.0, 1.0}, q{0.0, 4.0};
    // log(2) + 1/8 - 1/2
    CHECK(gaussian_kl(p, q) == doctest::Approx(std::log(2.0) + 0.125 - 0.5));
    CHECK(gaussian_kl(p, q) != doctest::Approx(gaussian_kl(q, p)));
    const auto w = normal_draws(5, 10000, 0.0, 2.0);
    CHECK(reverse_kl(a, w) != doctest::Approx(reverse_kl(w, a)));
  }
  SUBCASE("zero variance is floored with a warning") {
    std::size_t warnings = 0;
    const std::vector<double> flat(50, 0.3);
    const double kl = reverse_kl(flat, std::vector<double>(a.begin(), a.begin() + 50),
                                 KlEstimator::gaussian, &warnings);
    CHECK(std::isfinite(kl));
    CHECK(warnings == 1);
    bool floored = false;
    CHECK(fit_gaussian(flat, &floored).var == kVarianceFloor);
    CHECK(floored);
  }
  SUBCASE("too few samples") {
    CHECK_THROWS(reverse_kl(std::vector<double>(a.begin(), a.begin() + 29), a));
  }
  SUBCASE("histogram estimator agrees roughly") {
    const auto b = normal_draws(6, 10000, 1.0, 1.0);
    const double h = reverse_kl(a, b, KlEstimator::histogram);
    CHECK(h >= 0.0);
    CHECK(std::abs(h - 0.5) < 0.1);
  }
}

TEST_CASE("prediction band") {
  SUBCASE("constant samples") {
    const Band b = prediction_band(std::vector<double>(40, 2.5));
    CHECK(b.lo == 2.5);
    CHECK(b.hi == 2.5);
  }
  SUBCASE("standard normal quantiles") {
    const Band b = prediction_band(normal_draws(7, 100000, 0.0, 1.0));
    CHECK(std::abs(b.lo + 1.96) < 0.03);
    CHECK(std::abs(b.hi - 1.96) < 0.03);
  }
  SUBCASE("band contains the median") {
    for (std::uint64_t s = 0; s < 20; ++s) {
      auto v = normal_draws(100 + s, 31, 0.0, 1.0);
      const Band b = prediction_band(v);
      std::sort(v.begin(), v.end());
      CHECK(b.lo <= v[15]);
      CHECK(b.hi >= v[15]);
    }
  }
  SUBCASE("interpolation between order statistics") {
    const std::vector<double> s{0.0, 1.0, 2.0, 3.0, 4.0};
    CHECK(quantile_sorted(s, 0.5) == 2.0);
    CHECK(quantile_sorted(s, 0.125) == doctest::Approx(0.5));
    CHECK(quantile_sorted(s, 1.0) == 4.0);
  }
  SUBCASE("invalid quantiles") {
    const std::vector<double> s{0.0, 1.0};
    CHECK_THROWS(prediction_band(s, 0.9, 0.1));
    CHECK_THROWS(prediction_band(s, 0.0, 0.5));
  }
}

TEST_CASE("evaluation of a matched generator") {
  const double sigma = 0.05;
  pde::GridField truth(20, 20, 0.0, 1.0, 0.0, 3.0);
  truth.rho.fill(0.4);
  truth.u.fill(0.6);
  flow::FlowModel model = constant_flow(0.4, 0.6, sigma);
  const data::CoordTransform tr{0.0, 1.0, 0.0, 3.0};
  EvalOptions opt;
  opt.samples = 2000;
  opt.seed = 3;
  const EvalReport rep = evaluate(model, tr, truth, sigma, opt);
  CHECK(rep.n_coords == 400);
  CHECK(rep.records.size() == 800);
  CHECK(rep.re_rho < 1.0);
  CHECK(rep.re_u < 1.0);
  CHECK(rep.kl_rho < 0.05);
  CHECK(rep.kl_u < 0.05);
  MESSAGE("coverage " << rep.coverage);
  CHECK(std::abs(rep.coverage - 0.95) < 0.03);
  CHECK(rep.summary_json().contains("re_rho"));

  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "flowuq_test_metrics";
  fs::create_directories(dir);
  write_records_csv(dir / "r.csv", rep);
  std::ifstream in(dir / "r.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "x,t,channel,mean,std,lo,hi,kl");
  std::size_t lines = 0;
  for (std::string l; std::getline(in, l);) ++lines;
  CHECK(lines == 800);
  fs::remove_all(dir);
}

TEST_CASE("a biased generator is penalized") {
  pde::GridField truth(8, 8, 0.0, 1.0, 0.0, 3.0);
  truth.rho.fill(0.4);
  truth.u.fill(0.6);
  flow::FlowModel model = constant_flow(0.44, 0.6, 0.05);
  EvalOptions opt;
  opt.samples = 500;
  const EvalReport rep = evaluate(model, {0.0, 1.0, 0.0, 3.0}, truth, 0.05, opt);
  CHECK(rep.re_rho == doctest::Approx(10.0).epsilon(0.05));
  CHECK(rep.kl_rho > 0.2);
}
