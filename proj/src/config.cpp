#include "flowuq/config.hpp"

#include <fstream>
#include <set>

namespace flowuq::config {

namespace {

class ObjectReader {
 public:
  ObjectReader(const json& j, std::string context) : j_(j), ctx_(std::move(context)) {
    if (!j_.is_object()) throw ConfigError(ctx_ + ": expected a JSON object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const json& v = j_.at(key);
    if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
      if (!v.is_number_unsigned()) {
        throw ConfigError(ctx_ + "." + key + ": expected a non-negative integer");
      }
    }
    try {
      out = v.get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(ctx_ + "." + key + ": " + e.what());
    }
  }

  template <class E>
  void get_enum(const char* key, E& out, std::initializer_list<std::pair<const char*, E>> names) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const json& v = j_.at(key);
    if (v.is_string()) {
      for (const auto& [n, e] : names) {
        if (v.get<std::string>() == n) {
          out = e;
          return;
        }
      }
    }
    std::string allowed;
    for (const auto& [n, e] : names) allowed += std::string(allowed.empty() ? "" : ", ") + n;
    throw ConfigError(ctx_ + "." + key + ": expected one of " + allowed);
  }

  const json* sub(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw ConfigError(ctx_ + ": unknown key '" + k + "'");
    }
  }

 private:
  const json& j_;
  std::string ctx_;
  std::set<std::string> seen_;
};

const char* name(physics::Family f) { return f == physics::Family::arz ? "arz" : "lwr"; }
const char* name(flow::Gate g) { return g == flow::Gate::sigmoid ? "sigmoid" : "exponential"; }
const char* name(critic::Lipschitz l) {
  return l == critic::Lipschitz::clip ? "clip" : "gradient_penalty";
}
const char* name(KlEstimator k) { return k == KlEstimator::gaussian ? "gaussian" : "histogram"; }

void read_arz(const json& j, pde::ArzParams& p, const std::string& ctx) {
  ObjectReader r(j, ctx);
  r.get("rho_max", p.rho_max);
  r.get("u_max", p.u_max);
  r.get("tau", p.tau);
  r.finish();
}

json arz_json(const pde::ArzParams& p) {
  return {{"rho_max", p.rho_max}, {"u_max", p.u_max}, {"tau", p.tau}};
}

void read_flow(const json& j, flow::FlowConfig& c, const std::string& ctx) {
  ObjectReader r(j, ctx);
  r.get("pnet_width", c.pnet_width);
  r.get("pnet_depth", c.pnet_depth);
  r.get("coupling_layers", c.coupling_layers);
  r.get("coupling_width", c.coupling_width);
  r.get("coupling_depth", c.coupling_depth);
  r.get("batch_norm", c.batch_norm);
  r.get("k_clamp", c.k_clamp);
  r.get("sigma_floor", c.sigma_floor);
  r.get_enum("gate", c.gate, {{"sigmoid", flow::Gate::sigmoid}, {"exponential", flow::Gate::exponential}});
  r.finish();
}

void read_physics(const json& j, physics::PhysicsConfig& c, const std::string& ctx) {
  ObjectReader r(j, ctx);
  r.get_enum("family", c.family, {{"arz", physics::Family::arz}, {"lwr", physics::Family::lwr}});
  r.get("eta", c.eta);
  r.get("xi", c.xi);
  r.get("a", c.a);
  r.get("b", c.b);
  r.get("n_quad", c.n_quad);
  r.get("use_surrogate", c.use_surrogate);
  r.get("learn_lambda", c.learn_lambda);
  if (const json* l = r.sub("lambda_init")) read_arz(*l, c.lambda_init, ctx + ".lambda_init");
  r.get("snet_width", c.snet_width);
  r.get("snet_depth", c.snet_depth);
  r.finish();
}

void read_critic(const json& j, critic::CriticConfig& c, const std::string& ctx) {
  ObjectReader r(j, ctx);
  r.get("n_loops", c.n_loops);
  r.get("t_window", c.t_window);
  r.get("clip", c.clip);
  r.get_enum("lipschitz", c.lipschitz,
             {{"clip", critic::Lipschitz::clip},
              {"gradient_penalty", critic::Lipschitz::gradient_penalty}});
  r.get("gp_weight", c.gp_weight);
  r.get("gp_directions", c.gp_directions);
  r.get("batch_norm", c.batch_norm);
  r.finish();
}

void read_train(const json& j, train::TrainConfig& c, const std::string& ctx) {
  ObjectReader r(j, ctx);
  r.get("alpha", c.alpha);
  r.get("beta", c.beta);
  r.get("gamma", c.gamma);
  r.get("m", c.m);
  r.get("iterations", c.iterations);
  r.get("lr", c.lr);
  r.get("n_omega", c.n_omega);
  r.get("t_window", c.t_window);
  r.get("seed", c.seed);
  r.get("checkpoint_every", c.checkpoint_every);
  r.get("renoise", c.renoise);
  r.get("ring_images", c.ring_images);
  r.finish();
}

void read_model(const json& j, train::ModelConfig& c, const std::string& ctx) {
  ObjectReader r(j, ctx);
  if (const json* s = r.sub("flow")) read_flow(*s, c.flow, ctx + ".flow");
  if (const json* s = r.sub("physics")) read_physics(*s, c.physics, ctx + ".physics");
  if (const json* s = r.sub("critic")) read_critic(*s, c.critic, ctx + ".critic");
  r.finish();
}

}  // namespace

json to_json(const flow::FlowConfig& c) {
  return {{"pnet_width", c.pnet_width},         {"pnet_depth", c.pnet_depth},
          {"coupling_layers", c.coupling_layers}, {"coupling_width", c.coupling_width},
          {"coupling_depth", c.coupling_depth}, {"batch_norm", c.batch_norm},
          {"k_clamp", c.k_clamp},               {"sigma_floor", c.sigma_floor},
          {"gate", name(c.gate)}};
}

json to_json(const physics::PhysicsConfig& c) {
  return {{"family", name(c.family)},
          {"eta", c.eta},
          {"xi", c.xi},
          {"a", c.a},
          {"b", c.b},
          {"n_quad", c.n_quad},
          {"use_surrogate", c.use_surrogate},
          {"learn_lambda", c.learn_lambda},
          {"lambda_init", arz_json(c.lambda_init)},
          {"snet_width", c.snet_width},
          {"snet_depth", c.snet_depth}};
}

json to_json(const critic::CriticConfig& c) {
  return {{"n_loops", c.n_loops},   {"t_window", c.t_window},
          {"clip", c.clip},         {"lipschitz", name(c.lipschitz)},
          {"gp_weight", c.gp_weight}, {"gp_directions", c.gp_directions},
          {"batch_norm", c.batch_norm}};
}

json to_json(const train::TrainConfig& c) {
  return {{"alpha", c.alpha},   {"beta", c.beta},         {"gamma", c.gamma},
          {"m", c.m},           {"iterations", c.iterations}, {"lr", c.lr},
          {"n_omega", c.n_omega}, {"t_window", c.t_window}, {"seed", c.seed},
          {"checkpoint_every", c.checkpoint_every}, {"renoise", c.renoise},
          {"ring_images", c.ring_images}};
}

json to_json(const train::ModelConfig& c) {
  return {{"flow", to_json(c.flow)}, {"physics", to_json(c.physics)}, {"critic", to_json(c.critic)}};
}

json to_json(const RunConfig& c) {
  const auto& g = c.generate;
  const auto& e = c.eval;
  return {{"data", c.data.string()},
          {"out", c.out.string()},
          {"loops", c.loops},
          {"loop_rows", c.loop_rows},
          {"train", to_json(c.train)},
          {"model", to_json(c.model)},
          {"generate",
           {{"nx", g.nx},
            {"nt", g.nt},
            {"t_max", g.t_max},
            {"arz", arz_json(g.arz)},
            {"bell",
             {{"rho_base", g.bell.rho_base},
              {"rho_peak", g.bell.rho_peak},
              {"u_base", g.bell.u_base},
              {"u_peak", g.bell.u_peak}}},
            {"noise", g.noise},
            {"seed", g.seed}}},
          {"eval",
           {{"samples", e.samples},
            {"quantile_lo", e.quantile_lo},
            {"quantile_hi", e.quantile_hi},
            {"kl", name(e.kl)},
            {"data_samples", e.data_samples},
            {"seed", e.seed}}}};
}

void from_json(const json& j, flow::FlowConfig& c) { read_flow(j, c, "flow"); }
void from_json(const json& j, physics::PhysicsConfig& c) { read_physics(j, c, "physics"); }
void from_json(const json& j, critic::CriticConfig& c) { read_critic(j, c, "critic"); }
void from_json(const json& j, train::TrainConfig& c) { read_train(j, c, "train"); }
void from_json(const json& j, train::ModelConfig& c) { read_model(j, c, "model"); }

void from_json(const json& j, RunConfig& c) {
  ObjectReader r(j, "config");
  std::string data, out;
  r.get("data", data);
  if (!data.empty()) c.data = data;
  r.get("out", out);
  if (!out.empty()) c.out = out;
  r.get("loops", c.loops);
  r.get("loop_rows", c.loop_rows);
  if (const json* s = r.sub("train")) read_train(*s, c.train, "config.train");
  if (const json* s = r.sub("model")) read_model(*s, c.model, "config.model");
  if (const json* s = r.sub("generate")) {
    ObjectReader g(*s, "config.generate");
    auto& gc = c.generate;
    g.get("nx", gc.nx);
    g.get("nt", gc.nt);
    g.get("t_max", gc.t_max);
    if (const json* a = g.sub("arz")) read_arz(*a, gc.arz, "config.generate.arz");
    if (const json* b = g.sub("bell")) {
      ObjectReader br(*b, "config.generate.bell");
      br.get("rho_base", gc.bell.rho_base);
      br.get("rho_peak", gc.bell.rho_peak);
      br.get("u_base", gc.bell.u_base);
      br.get("u_peak", gc.bell.u_peak);
      br.finish();
    }
    g.get("noise", gc.noise);
    g.get("seed", gc.seed);
    g.finish();
  }
  if (const json* s = r.sub("eval")) {
    ObjectReader e(*s, "config.eval");
    auto& ec = c.eval;
    e.get("samples", ec.samples);
    e.get("quantile_lo", ec.quantile_lo);
    e.get("quantile_hi", ec.quantile_hi);
    e.get_enum("kl", ec.kl, {{"gaussian", KlEstimator::gaussian}, {"histogram", KlEstimator::histogram}});
    e.get("data_samples", ec.data_samples);
    e.get("seed", ec.seed);
    e.finish();
  }
  r.finish();
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file " + path.string() + ": " + e.what());
  }
  RunConfig c;
  from_json(j, c);
  return c;
}

}  // namespace flowuq::config
