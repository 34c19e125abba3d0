#include "flowuq/commands.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "flowuq/config.hpp"
#include "flowuq/dataset_io.hpp"
#include "flowuq/metrics.hpp"
#include "flowuq/trainer.hpp"

namespace flowuq::cli {

namespace fs = std::filesystem;
using config::ConfigError;
using config::RunConfig;

namespace {

// Optional flag bound to a config field: applied only when given.
template <class T>
struct Override {
  T value{};
  CLI::Option* opt = nullptr;
  void apply(T& target) const {
    if (opt && opt->count() > 0) target = value;
  }
};

template <class T>
Override<T>& add(CLI::App* app, std::vector<std::shared_ptr<void>>& keep, const std::string& name,
                 const std::string& help) {
  auto o = std::make_shared<Override<T>>();
  keep.push_back(o);
  o->opt = app->add_option(name, o->value, help);
  return *o;
}

void require_file(const fs::path& p, const char* what) {
  if (p.empty()) throw ConfigError(std::string(what) + " path is required");
  if (!fs::is_regular_file(p)) throw ConfigError(std::string(what) + " not found: " + p.string());
}

physics::Family parse_family(const std::string& s) {
  if (s == "arz") return physics::Family::arz;
  if (s == "lwr") return physics::Family::lwr;
  throw ConfigError("--physics must be arz or lwr");
}

int cmd_generate(const RunConfig& rc) {
  const auto& g = rc.generate;
  g.arz.validate();
  if (g.noise < 0.0) throw ConfigError("noise sigma must be non-negative");
  if (g.nx < 8) throw ConfigError("generate: nx must be at least 8");
  pde::SolveReport report;
  const auto initial = pde::initial_condition_bell(g.nx, g.bell);
  pde::GridField clean = pde::solve_arz_lax_friedrichs(g.arz, initial, g.nt, g.t_max, &report);
  io::Dataset ds;
  ds.observed = pde::add_observation_noise(clean, g.noise, g.seed);
  ds.clean = clean;
  ds.meta.arz = g.arz;
  ds.meta.bell = g.bell;
  ds.meta.noise_sigma = g.noise;
  ds.meta.seed = g.seed;
  const fs::path sidecar = rc.out / "dataset.json";
  io::write_dataset(sidecar, ds);
  double rho_max = 0.0;
  for (double v : clean.rho.values()) rho_max = std::max(rho_max, v);
  std::cout << "grid " << g.nx << "x" << g.nt << ", dt/dx courant max " << report.max_courant
            << "\n"
            << "mass " << report.mass.front() << " -> " << report.mass.back()
            << ", max per-step drift " << report.max_mass_drift << "\n"
            << "max density " << rho_max << "\n"
            << "wrote " << sidecar.string() << "\n";
  return kExitOk;
}

train::TrainData load_train_data(const RunConfig& rc, const io::Dataset& ds) {
  data::ObservationSet set = rc.loop_rows.empty()
                                 ? data::place_loops(ds.observed, rc.loops)
                                 : data::place_loops_at(ds.observed, rc.loop_rows);
  set.noise_sigma = ds.meta.noise_sigma;
  return train::prepare_data(std::move(set));
}

int cmd_train(const RunConfig& rc, const fs::path& resume) {
  require_file(rc.data, "dataset");
  if (!resume.empty()) require_file(resume, "checkpoint");
  rc.train.validate();
  rc.model.physics.validate();
  rc.model.flow.validate();
  const io::Dataset ds = io::read_dataset(rc.data);
  const train::TrainData data = load_train_data(rc, ds);
  train::TrainState state = resume.empty() ? train::init_state(rc.model, rc.train, data)
                                           : train::load_state(resume);
  std::cout << "training " << rc.train.iterations << " iterations on " << data.set.n_loops()
            << " loops (" << data.set.observed.size() << " observed, "
            << data.set.collocation.size() << " collocation cells)\n";
  train::train(state, data, rc.train, {rc.out});
  const auto& last = state.history.empty() ? train::LossRecord{} : state.history.back();
  std::cout << "final L_NLL " << last.nll << " L_Adv " << last.adv << " L_Phy " << last.phy
            << " L_D " << last.critic << "\n"
            << "wrote " << (rc.out / "checkpoint.json").string() << "\n";
  return kExitOk;
}

int cmd_eval(const RunConfig& rc, const fs::path& checkpoint) {
  require_file(checkpoint, "checkpoint");
  require_file(rc.data, "dataset");
  const auto& e = rc.eval;
  if (!(e.quantile_lo > 0.0 && e.quantile_hi < 1.0 && e.quantile_lo < e.quantile_hi)) {
    throw ConfigError("eval quantiles must satisfy 0 < lo < hi < 1");
  }
  train::TrainState state = train::load_state(checkpoint);
  const io::Dataset ds = io::read_dataset(rc.data);
  const pde::GridField& truth = ds.clean ? *ds.clean : ds.observed;
  const double sigma = ds.clean ? ds.meta.noise_sigma : 0.0;
  metrics::EvalOptions opt{e.samples, e.data_samples, e.quantile_lo, e.quantile_hi, e.kl, e.seed};
  const metrics::EvalReport rep = metrics::evaluate(state.flow, state.transform, truth, sigma, opt);
  metrics::write_report_json(rc.out / "eval_report.json", rep);
  metrics::write_records_csv(rc.out / "eval_records.csv", rep);
  std::cout << rep.summary_json().dump(2) << "\n";
  return kExitOk;
}

std::vector<std::pair<double, double>> read_coords_csv(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  if (!std::getline(in, line) || line != "x,t") throw ConfigError(p.string() + ": expected header x,t");
  std::vector<std::pair<double, double>> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    double x = 0.0, t = 0.0;
    char comma = 0;
    if (!(ss >> x >> comma >> t) || comma != ',') throw ConfigError(p.string() + ": bad row " + line);
    out.emplace_back(x, t);
  }
  return out;
}

int cmd_sample(const RunConfig& rc, const fs::path& checkpoint, std::vector<double> xs,
               std::vector<double> ts, const fs::path& coords_file, std::size_t n,
               std::uint64_t seed, const fs::path& out_path) {
  require_file(checkpoint, "checkpoint");
  std::vector<std::pair<double, double>> coords;
  if (!coords_file.empty()) {
    require_file(coords_file, "coordinate file");
    coords = read_coords_csv(coords_file);
  }
  if (xs.size() != ts.size()) throw ConfigError("--x and --t need the same number of values");
  for (std::size_t i = 0; i < xs.size(); ++i) coords.emplace_back(xs[i], ts[i]);
  train::TrainState state = train::load_state(checkpoint);
  const auto& tr = state.transform;
  Tensor c({coords.size(), 2});
  for (std::size_t i = 0; i < coords.size(); ++i) {
    const auto [x, t] = coords[i];
    if (x < tr.x_lo || x > tr.x_hi || t < tr.t_lo || t > tr.t_hi) {
      std::cerr << "warning: (" << x << ", " << t << ") lies outside the trained domain\n";
    }
    c.at(i, 0) = tr.norm_x(x);
    c.at(i, 1) = tr.norm_t(t);
  }
  Rng rng = make_stream(seed, "sample");
  const Tensor s = coords.empty() ? Tensor({0, 2}) : state.flow.sample(c, n, rng);
  const fs::path path = out_path.empty() ? rc.out / "samples.csv" : out_path;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "x,t,sample_idx,rho,u\n";
  const std::size_t k = coords.size();
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t r = j * k + i;
      out << io::format_double(coords[i].first) << ',' << io::format_double(coords[i].second)
          << ',' << j << ',' << io::format_double(s.at(r, 0)) << ','
          << io::format_double(s.at(r, 1)) << '\n';
    }
  }
  std::cout << "wrote " << n * k << " samples to " << path.string() << "\n";
  return kExitOk;
}

int cmd_fd_curve(const RunConfig& rc, const fs::path& checkpoint, double lo, double hi,
                 std::size_t points, const fs::path& out_path) {
  require_file(checkpoint, "checkpoint");
  if (points < 2 || !(hi > lo)) throw ConfigError("fd-curve: need --points >= 2 and rho-hi > rho-lo");
  train::TrainState state = train::load_state(checkpoint);
  pde::ArzParams truth = state.model.physics.lambda_init;
  if (!rc.data.empty()) {
    require_file(rc.data, "dataset");
    const io::Dataset ds = io::read_dataset(rc.data);
    if (ds.meta.arz) truth = *ds.meta.arz;
  }
  std::vector<double> rho(points);
  for (std::size_t i = 0; i < points; ++i) {
    rho[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1);
  }
  const std::vector<double> hat = state.physics.ueq_values(rho);
  const fs::path path = out_path.empty() ? rc.out / "fd_curve.csv" : out_path;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "rho,u_eq_hat,u_eq_true\n";
  double worst = 0.0;
  for (std::size_t i = 0; i < points; ++i) {
    const double u = physics::ueq_closed_form(rho[i], truth);
    worst = std::max(worst, std::abs(hat[i] - u));
    out << io::format_double(rho[i]) << ',' << io::format_double(hat[i]) << ','
        << io::format_double(u) << '\n';
  }
  std::cout << "max |U_eq_hat - U_eq| on [" << lo << ", " << hi << "]: " << worst << "\n"
            << "wrote " << path.string() << "\n";
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Physics-informed flow model for traffic state uncertainty"};
  app.require_subcommand(1);
  app.fallthrough();
  std::vector<std::shared_ptr<void>> keep;

  std::string config_path;
  app.add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
  auto& out_dir = add<std::string>(&app, keep, "--out", "output directory");
  auto& data_path = add<std::string>(&app, keep, "--data", "dataset sidecar JSON");
  auto& seed = add<std::uint64_t>(&app, keep, "--seed", "master seed");

  auto* gen = app.add_subcommand("generate", "solve the ARZ ring road and write a noisy dataset");
  auto& nx = add<std::size_t>(gen, keep, "--nx", "space nodes");
  auto& nt = add<std::size_t>(gen, keep, "--nt", "time nodes");
  auto& t_max = add<double>(gen, keep, "--t-max", "final time");
  auto& rho_max = add<double>(gen, keep, "--rho-max", "maximum density");
  auto& u_max = add<double>(gen, keep, "--u-max", "maximum velocity");
  auto& tau = add<double>(gen, keep, "--tau", "relaxation time");
  auto& noise = add<double>(gen, keep, "--noise", "observation noise sigma");

  auto* tr = app.add_subcommand("train", "train the generator");
  auto& family = add<std::string>(tr, keep, "--physics", "arz or lwr");
  auto& loops = add<std::size_t>(tr, keep, "--loops", "number of loop detectors");
  auto& iters = add<std::size_t>(tr, keep, "--iters", "training iterations");
  auto& alpha = add<double>(tr, keep, "--alpha", "likelihood weight");
  auto& beta = add<double>(tr, keep, "--beta", "adversarial weight");
  auto& gamma = add<double>(tr, keep, "--gamma", "physics weight");
  auto& batch = add<std::size_t>(tr, keep, "--m", "batch size");
  auto& n_omega = add<std::size_t>(tr, keep, "--n-omega", "samples per coordinate");
  auto& t_window = add<std::size_t>(tr, keep, "--t-window", "critic time window");
  auto& lr = add<double>(tr, keep, "--lr", "learning rate");
  auto& every = add<std::size_t>(tr, keep, "--checkpoint-every", "checkpoint cadence");
  std::string resume;
  tr->add_option("--resume", resume, "continue from a checkpoint");

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint against ground truth");
  std::string checkpoint;
  ev->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  auto& samples = add<std::size_t>(ev, keep, "--samples", "generator samples per cell");
  auto& kl = add<std::string>(ev, keep, "--kl", "gaussian or histogram");

  auto* sa = app.add_subcommand("sample", "draw generator samples at coordinates");
  sa->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  std::vector<double> xs, ts;
  std::string coords_file, sample_out;
  std::size_t n_samples = 10;
  sa->add_option("--x", xs, "positions");
  sa->add_option("--t", ts, "times");
  sa->add_option("--coords", coords_file, "CSV with header x,t");
  sa->add_option("-n,--samples", n_samples, "samples per coordinate");
  sa->add_option("--output", sample_out, "CSV path (default <out>/samples.csv)");

  auto* fd = app.add_subcommand("fd-curve", "export the learned equilibrium speed curve");
  fd->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  double fd_lo = 0.0, fd_hi = 0.9;
  std::size_t fd_points = 91;
  std::string fd_out;
  fd->add_option("--rho-lo", fd_lo, "sweep start");
  fd->add_option("--rho-hi", fd_hi, "sweep end");
  fd->add_option("--points", fd_points, "sweep points");
  fd->add_option("--output", fd_out, "CSV path (default <out>/fd_curve.csv)");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    RunConfig rc = config_path.empty() ? RunConfig{} : config::load_run_config(config_path);
    if (out_dir.opt->count()) rc.out = out_dir.value;
    if (data_path.opt->count()) rc.data = data_path.value;
    seed.apply(rc.train.seed);
    seed.apply(rc.generate.seed);
    seed.apply(rc.eval.seed);
    nx.apply(rc.generate.nx);
    nt.apply(rc.generate.nt);
    t_max.apply(rc.generate.t_max);
    rho_max.apply(rc.generate.arz.rho_max);
    u_max.apply(rc.generate.arz.u_max);
    tau.apply(rc.generate.arz.tau);
    noise.apply(rc.generate.noise);
    if (family.opt->count()) rc.model.physics.family = parse_family(family.value);
    loops.apply(rc.loops);
    iters.apply(rc.train.iterations);
    alpha.apply(rc.train.alpha);
    beta.apply(rc.train.beta);
    gamma.apply(rc.train.gamma);
    batch.apply(rc.train.m);
    n_omega.apply(rc.train.n_omega);
    t_window.apply(rc.train.t_window);
    lr.apply(rc.train.lr);
    every.apply(rc.train.checkpoint_every);
    samples.apply(rc.eval.samples);
    if (kl.opt->count()) {
      if (kl.value == "gaussian") rc.eval.kl = metrics::KlEstimator::gaussian;
      else if (kl.value == "histogram") rc.eval.kl = metrics::KlEstimator::histogram;
      else throw ConfigError("--kl must be gaussian or histogram");
    }

    if (*gen) return cmd_generate(rc);
    if (*tr) return cmd_train(rc, resume);
    if (*ev) return cmd_eval(rc, checkpoint);
    if (*sa) {
      return cmd_sample(rc, checkpoint, xs, ts, coords_file, n_samples, rc.eval.seed, sample_out);
    }
    if (*fd) return cmd_fd_curve(rc, checkpoint, fd_lo, fd_hi, fd_points, fd_out);
  } catch (const NumericalError& e) {
    std::cerr << "numerical abort: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::invalid_argument& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitConfig;
}

int main(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args);
}

}  // namespace flowuq::cli
