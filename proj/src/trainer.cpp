#include "flowuq/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "flowuq/checkpoint.hpp"
#include "flowuq/config.hpp"
#include "flowuq/dataset_io.hpp"

namespace flowuq::train {

using ad::Graph;
using ad::Var;

void TrainConfig::validate() const {
  auto weight = [](double w, const char* n) {
    if (!(w >= 0.0 && w <= 1.0)) {
      throw std::invalid_argument(std::string("loss weight ") + n + " must lie in [0,1]");
    }
  };
  weight(alpha, "alpha");
  weight(beta, "beta");
  weight(gamma, "gamma");
  if (alpha == 0.0 && beta == 0.0 && gamma == 0.0) {
    throw std::invalid_argument("at least one loss weight must be positive");
  }
  if (m < 2) throw std::invalid_argument("batch size m must be at least 2");
  if (n_omega == 0) throw std::invalid_argument("n_omega must be at least 1");
  if (!(lr > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (t_window == 0) throw std::invalid_argument("t_window must be positive");
}

TrainData prepare_data(const pde::GridField& observed, std::size_t n_loops, double noise_sigma) {
  data::ObservationSet set = data::place_loops(observed, n_loops);
  set.noise_sigma = noise_sigma;
  return prepare_data(std::move(set));
}

TrainData prepare_data(data::ObservationSet set) {
  TrainData d;
  d.transform = data::normalize_coords(set).transform;
  d.set = std::move(set);
  return d;
}

TrainState init_state(ModelConfig model, const TrainConfig& cfg, const TrainData& data) {
  cfg.validate();
  if (model.critic.lipschitz != critic::Lipschitz::clip) {
    throw std::invalid_argument("critic lipschitz: only weight clipping is implemented");
  }
  model.critic.n_loops = data.set.n_loops();
  model.critic.t_window = cfg.t_window;
  if (cfg.t_window > data.set.nt) {
    throw std::invalid_argument("t_window " + std::to_string(cfg.t_window) + " exceeds the " +
                                std::to_string(data.set.nt) + " available time steps");
  }
  Rng flow_rng = make_stream(cfg.seed, "init-flow");
  Rng critic_rng = make_stream(cfg.seed, "init-critic");
  Rng phys_rng = make_stream(cfg.seed, "init-physics");
  TrainState s{0,
               model,
               data.transform,
               flow::FlowModel::create(model.flow, flow_rng),
               critic::CriticModel::create(model.critic, critic_rng),
               physics::PhysicsModel::create(model.physics, phys_rng),
               {},
               {},
               {},
               {}};
  critic::enforce_lipschitz(s.critic);
  return s;
}

std::vector<std::size_t> batch_indices(std::size_t population, std::size_t m,
                                       std::size_t iteration, std::uint64_t seed,
                                       std::string_view stream) {
  if (population == 0) throw std::invalid_argument("batch_indices: empty population");
  std::vector<std::size_t> out;
  out.reserve(m);
  std::size_t pos = iteration * m;
  std::size_t epoch = static_cast<std::size_t>(-1);
  std::vector<std::size_t> perm(population);
  for (std::size_t k = 0; k < m; ++k, ++pos) {
    if (pos / population != epoch) {
      epoch = pos / population;
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      Rng rng = make_stream(seed, stream, epoch);
      std::shuffle(perm.begin(), perm.end(), rng);
    }
    out.push_back(perm[pos % population]);
  }
  return out;
}

namespace {

void zero_grads(nn::ParameterStore& ps) { ps.zero_grad(); }

void require_finite(double v, std::size_t iter, const char* what) {
  if (!std::isfinite(v)) {
    throw NumericalError("iteration " + std::to_string(iter) + ": " + what + " is not finite");
  }
}

// Matrix rows in the generator sample tensor: window w, loop l, step j of
// channel c lives at flat index ((w*L + l)*T + j)*2 + c.
std::vector<std::size_t> matrix_gather_index(std::size_t windows, std::size_t loops,
                                             std::size_t steps) {
  std::vector<std::size_t> idx;
  idx.reserve(windows * 2 * loops * steps);
  for (std::size_t w = 0; w < windows; ++w)
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t l = 0; l < loops; ++l)
        for (std::size_t j = 0; j < steps; ++j) idx.push_back(((w * loops + l) * steps + j) * 2 + c);
  return idx;
}

Var stacked_scores(Graph& g, critic::CriticModel& critic, Var real_flat, Var fake_flat,
                   std::size_t n, std::size_t loops, std::size_t steps) {
  Var both = ad::concat_rows({real_flat, fake_flat});
  return critic.score(g, ad::reshape(both, {2 * n, 2, loops, steps}), nn::Mode::train);
}

Var rows_of(Var scores, std::size_t begin, std::size_t count) {
  std::vector<std::size_t> idx(count);
  std::iota(idx.begin(), idx.end(), begin);
  return ad::gather(scores, std::move(idx), {count, 1});
}

}  // namespace

Var generator_objective(Graph& g, TrainState& state, const TrainData& data,
                        const TrainConfig& cfg, LossRecord& rec, bool update_critic) {
  const std::size_t it = state.iteration;
  const auto& set = data.set;
  const auto& tr = data.transform;
  const std::uint64_t seed = cfg.seed;
  rec.iter = it;
  Var total;
  auto accumulate = [&total](Var term) { total = total.valid() ? ad::add(total, term) : term; };

  // Numerical failures are reported with the iteration and the loss being built.
  const char* stage = "L_Phy";
  try {
    // Physics residuals on collocation cells. Evaluated first: it uses the
    // running normalization statistics, which the train-mode passes below
    // update as a side effect.
    if (cfg.gamma > 0.0) {
      const bool have_c = !set.collocation.empty();
      const std::size_t pop = have_c ? set.collocation.size() : set.observed.size();
      const auto idx = batch_indices(pop, cfg.m, it, seed, "batch-collocation");
      Tensor coords({cfg.m, 2});
      for (std::size_t i = 0; i < cfg.m; ++i) {
        coords.at(i, 0) = have_c ? set.collocation[idx[i]].x : set.observed[idx[i]].x;
        coords.at(i, 1) = have_c ? set.collocation[idx[i]].t : set.observed[idx[i]].t;
      }
      Rng phys_rng = make_stream(seed, "physics-noise", it);
      auto field = physics::flow_field(state.flow, tr, phys_rng, nn::Mode::eval);
      Var phy = physics::compute_physics_loss(g, state.physics, field, coords, cfg.n_omega);
      rec.phy = phy.value()[0];
      require_finite(rec.phy, it, "L_Phy");
      accumulate(ad::scale(phy, cfg.gamma));
    }

    // Likelihood on observed cells.
    stage = "L_NLL";
    const auto obs_idx = batch_indices(set.observed.size(), cfg.m, it, seed, "batch-observed");
    Tensor u_obs({cfg.m, 2}), c_obs({cfg.m, 2});
    Rng image_rng = make_stream(seed, "batch-image", it);
    std::bernoulli_distribution flip(0.5);
    for (std::size_t i = 0; i < cfg.m; ++i) {
      const auto& o = set.observed[obs_idx[i]];
      u_obs.at(i, 0) = o.rho;
      u_obs.at(i, 1) = o.u;
      const bool image = cfg.ring_images && o.ix == 0 && set.nx > 1 && flip(image_rng);
      c_obs.at(i, 0) = tr.norm_x(image ? set.x_max : o.x);
      c_obs.at(i, 1) = tr.norm_t(o.t);
    }
    Var nll = ad::neg(ad::mean(
        state.flow.log_likelihood(g, g.constant(std::move(u_obs)), g.constant(std::move(c_obs)),
                                  nn::Mode::train)));
    rec.nll = nll.value()[0];
    require_finite(rec.nll, it, "L_NLL");
    if (cfg.alpha > 0.0) accumulate(ad::scale(nll, cfg.alpha));

    // Adversarial part: optionally one critic update, then the generator's score.
    if (cfg.beta > 0.0) {
      stage = "L_Adv";
      const std::size_t n = cfg.n_omega, loops = set.n_loops(), steps = cfg.t_window;
      Rng win_rng = make_stream(seed, "windows", it);
      const auto starts = data::draw_windows(win_rng, set.nt, steps, n);
      Rng noise_rng = make_stream(seed, "data-noise", it);
      Tensor real({n, 2 * loops * steps});
      Tensor fake_coords({n * loops * steps, 2});
      for (std::size_t w = 0; w < n; ++w) {
        data::StateMatrix mtx = data::data_matrix(set, starts[w], steps, noise_rng, cfg.renoise);
        std::copy(mtx.values.data(), mtx.values.data() + mtx.values.size(),
                  real.data() + w * real.cols());
        Tensor wc = data::window_coords(set, starts[w], steps);
        for (std::size_t r = 0; r < wc.rows(); ++r) {
          fake_coords.at(w * loops * steps + r, 0) = tr.norm_x(wc.at(r, 0));
          fake_coords.at(w * loops * steps + r, 1) = tr.norm_t(wc.at(r, 1));
        }
      }
      Rng fake_rng = make_stream(seed, "fake-noise", it);
      Tensor eps = normal_tensor(fake_rng, fake_coords.shape());
      Var fake_rows = state.flow.sample_path(g, g.constant(fake_coords), eps, nn::Mode::train).value;
      Var fake_flat = ad::gather(fake_rows, matrix_gather_index(n, loops, steps),
                                 {n, 2 * loops * steps});
      if (!fake_flat.value().all_finite()) {
        throw NumericalError("iteration " + std::to_string(it) + ": generator sample is not finite");
      }

      if (update_critic) {
        stage = "L_D";
        Graph gc;
        zero_grads(state.critic.params);
        Var scores = stacked_scores(gc, state.critic, gc.constant(real),
                                    gc.constant(fake_flat.value()), n, loops, steps);
        Var loss_d = critic::critic_loss(rows_of(scores, 0, n), rows_of(scores, n, n));
        rec.critic = loss_d.value()[0];
        require_finite(rec.critic, it, "L_D");
        gc.backward(loss_d);
        nn::adam_step(state.critic.params.trainable(), state.adam_critic,
                      {cfg.lr, 0.9, 0.999, 1e-8});
        critic::enforce_lipschitz(state.critic);
        stage = "L_Adv";
      }

      Var scores = stacked_scores(g, state.critic, g.constant(std::move(real)), fake_flat, n, loops,
                                  steps);
      Var adv = ad::neg(ad::mean(rows_of(scores, n, n)));
      rec.adv = adv.value()[0];
      require_finite(rec.adv, it, "L_Adv");
      accumulate(ad::scale(adv, cfg.beta));
    }
  } catch (const NumericalError& e) {
    const std::string msg = e.what();
    if (msg.rfind("iteration ", 0) == 0) throw;
    throw NumericalError("iteration " + std::to_string(it) + ": " + stage + ": " + msg);
  }
  return total;
}

LossRecord train_step(TrainState& state, const TrainData& data, const TrainConfig& cfg) {
  LossRecord rec;
  Graph g;
  Var total = generator_objective(g, state, data, cfg, rec, true);

  std::vector<ad::Parameter*> theta = state.flow.params.trainable();
  for (auto* p : state.physics.generator_parameters()) theta.push_back(p);
  std::vector<ad::Parameter*> lambda = state.physics.lambda_parameters();
  for (auto* p : theta) p->zero_grad();
  for (auto& p : state.physics.lambda) p.zero_grad();

  if (total.valid()) {
    g.backward(total);
    const nn::AdamConfig adam{cfg.lr, 0.9, 0.999, 1e-8};
    nn::adam_step(theta, state.adam_flow, adam);
    if (cfg.gamma > 0.0 && !lambda.empty()) {
      // The lambda step descends L_Phy alone; undo the gamma weighting.
      for (auto* p : lambda) p->grad *= 1.0 / cfg.gamma;
      nn::adam_step(lambda, state.adam_lambda, adam);
    }
  }

  state.history.push_back(rec);
  ++state.iteration;
  return rec;
}

void write_history_csv(const std::filesystem::path& path, const std::vector<LossRecord>& history) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "iter,L_NLL,L_Adv,L_Phy,L_D\n";
  for (const auto& r : history) {
    out << r.iter << ',' << io::format_double(r.nll) << ',' << io::format_double(r.adv) << ','
        << io::format_double(r.phy) << ',' << io::format_double(r.critic) << '\n';
  }
}

void train(TrainState& state, const TrainData& data, const TrainConfig& cfg,
           const TrainOutput& out) {
  cfg.validate();
  const bool write = !out.dir.empty();
  while (state.iteration < cfg.iterations) {
    train_step(state, data, cfg);
    if (write && cfg.checkpoint_every > 0 && state.iteration % cfg.checkpoint_every == 0) {
      save_state(out.dir / ("checkpoint_" + std::to_string(state.iteration) + ".json"), state, cfg);
      write_history_csv(out.dir / "loss_history.csv", state.history);
    }
  }
  if (write) {
    save_state(out.dir / "checkpoint.json", state, cfg);
    write_history_csv(out.dir / "loss_history.csv", state.history);
  }
}

namespace {

void put(nn::TensorMap& out, const std::string& prefix, const nn::TensorMap& in) {
  for (const auto& [k, v] : in) out[prefix + k] = v;
}

nn::TensorMap take(const nn::TensorMap& in, const std::string& prefix) {
  nn::TensorMap out;
  for (const auto& [k, v] : in) {
    if (k.rfind(prefix, 0) == 0) out[k.substr(prefix.size())] = v;
  }
  return out;
}

}  // namespace

void save_state(const std::filesystem::path& path, const TrainState& state, const TrainConfig& cfg) {
  TensorFile f;
  put(f.tensors, "flow/", state.flow.params.export_values());
  put(f.tensors, "critic/", state.critic.params.export_values());
  put(f.tensors, "snet/", state.physics.snet_params.export_values());
  put(f.tensors, "lambda/", state.physics.lambda.export_values());
  state.adam_flow.export_to(f.tensors, "adam.flow/");
  state.adam_critic.export_to(f.tensors, "adam.critic/");
  state.adam_lambda.export_to(f.tensors, "adam.lambda/");
  nlohmann::json hist = nlohmann::json::array();
  for (const auto& r : state.history) hist.push_back({r.iter, r.nll, r.adv, r.phy, r.critic});
  f.meta = {{"iteration", state.iteration},
            {"model", config::to_json(state.model)},
            {"transform",
             {state.transform.x_lo, state.transform.x_hi, state.transform.t_lo,
              state.transform.t_hi}},
            {"train", config::to_json(cfg)},
            {"history", hist}};
  save_tensor_file(path, f);
}

TrainState load_state(const std::filesystem::path& path, TrainConfig* cfg) {
  TensorFile f = load_tensor_file(path);
  ModelConfig model;
  TrainConfig tc;
  try {
    config::from_json(f.meta.at("model"), model);
    config::from_json(f.meta.at("train"), tc);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("checkpoint " + path.string() + ": " + e.what());
  }
  Rng scratch = make_stream(0, "load");
  const auto& tj = f.meta.at("transform");
  TrainState s{f.meta.at("iteration").get<std::size_t>(),
               model,
               {tj.at(0).get<double>(), tj.at(1).get<double>(), tj.at(2).get<double>(),
                tj.at(3).get<double>()},
               flow::FlowModel::create(model.flow, scratch),
               critic::CriticModel::create(model.critic, scratch),
               physics::PhysicsModel::create(model.physics, scratch),
               {},
               {},
               {},
               {}};
  s.flow.params.import_values(take(f.tensors, "flow/"));
  s.critic.params.import_values(take(f.tensors, "critic/"));
  s.physics.snet_params.import_values(take(f.tensors, "snet/"));
  s.physics.lambda.import_values(take(f.tensors, "lambda/"));
  s.adam_flow.import_from(f.tensors, "adam.flow/");
  s.adam_critic.import_from(f.tensors, "adam.critic/");
  s.adam_lambda.import_from(f.tensors, "adam.lambda/");
  for (const auto& r : f.meta.at("history")) {
    s.history.push_back({r.at(0).get<std::size_t>(), r.at(1).get<double>(), r.at(2).get<double>(),
                         r.at(3).get<double>(), r.at(4).get<double>()});
  }
  if (cfg) *cfg = tc;
  return s;
}

pde::GridField bimodal_field(std::size_t nx, std::size_t nt, std::uint64_t seed) {
  pde::GridField f(nx, nt, 0.0, 1.0, 0.0, 1.0);
  Rng rng = make_stream(seed, "bimodal");
  std::bernoulli_distribution coin(0.5);
  std::normal_distribution<double> normal;
  for (std::size_t i = 0; i < f.rho.size(); ++i) {
    const double c = coin(rng) ? 1.0 : -1.0;
    f.rho[i] = c + normal(rng);
    f.u[i] = c + normal(rng);
  }
  return f;
}

ModeReport classify_modes(const Tensor& samples) {
  ModeReport r;
  r.n_samples = samples.rows();
  if (r.n_samples == 0) return r;
  std::size_t neg = 0;
  for (std::size_t i = 0; i < samples.rows(); ++i) {
    if (samples.at(i, 0) + samples.at(i, 1) < 0.0) ++neg;
  }
  r.mass_negative = static_cast<double>(neg) / static_cast<double>(r.n_samples);
  r.mass_positive = 1.0 - r.mass_negative;
  return r;
}

ModeReport mode_collapse_probe(TrainState& state, const TrainData& data,
                               std::size_t samples_per_coord, std::uint64_t seed) {
  Tensor coords({data.set.observed.size(), 2});
  for (std::size_t i = 0; i < data.set.observed.size(); ++i) {
    coords.at(i, 0) = data.transform.norm_x(data.set.observed[i].x);
    coords.at(i, 1) = data.transform.norm_t(data.set.observed[i].t);
  }
  Rng rng = make_stream(seed, "mode-probe");
  return classify_modes(state.flow.sample(coords, samples_per_coord, rng));
}

ModeReport mode_probe_ground_truth(std::size_t n_samples, std::uint64_t seed) {
  pde::GridField f = bimodal_field(2, std::max<std::size_t>(2, (n_samples + 1) / 2), seed);
  Tensor s({n_samples, 2});
  for (std::size_t i = 0; i < n_samples; ++i) {
    s.at(i, 0) = f.rho[i];
    s.at(i, 1) = f.u[i];
  }
  return classify_modes(s);
}

}  // namespace flowuq::train
