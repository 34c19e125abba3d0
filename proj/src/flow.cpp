#include "flowuq/flow.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace flowuq::flow {

namespace {

constexpr std::size_t kChunk = 4096;

void check_finite(const Tensor& t, const std::string& what) {
  if (!t.all_finite()) throw NumericalError(what + " produced non-finite values");
}

Tensor rows_slice(const Tensor& t, std::size_t begin, std::size_t end) {
  const std::size_t c = t.cols();
  std::vector<double> v(t.data() + begin * c, t.data() + end * c);
  return Tensor({end - begin, c}, std::move(v));
}

}  // namespace

void FlowConfig::validate() const {
  if (pnet_width == 0 || coupling_width == 0) throw std::invalid_argument("flow: zero layer width");
  if (coupling_layers == 0) throw std::invalid_argument("flow: need at least one coupling layer");
  if (!(k_clamp > 0.0)) throw std::invalid_argument("flow: k_clamp must be positive");
  if (!(sigma_floor > 0.0)) throw std::invalid_argument("flow: sigma_floor must be positive");
}

FlowModel FlowModel::create(const FlowConfig& config, Rng& rng) {
  config.validate();
  FlowModel m;
  m.config = config;
  const nn::MlpSpec pnet{2, config.pnet_width, config.pnet_depth, 2, nn::Activation::leaky_relu,
                         false};
  m.mu_net = nn::Mlp::create(m.params, "pnet.mu", pnet, rng);
  m.sigma_net = nn::Mlp::create(m.params, "pnet.sigma", pnet, rng);
  const nn::MlpSpec cnet{3, config.coupling_width, config.coupling_depth, 1, nn::Activation::relu,
                         config.batch_norm};
  for (std::size_t l = 0; l < config.coupling_layers; ++l) {
    const std::string name = "coupling" + std::to_string(l);
    Coupling c;
    c.k_net = nn::Mlp::create(m.params, name + ".k", cnet, rng);
    c.b_net = nn::Mlp::create(m.params, name + ".b", cnet, rng);
    c.pass = l % 2;
    m.layers.push_back(std::move(c));
  }
  return m;
}

Prior FlowModel::prior(Graph& g, const Dual& coords, Mode mode) {
  Dual mu = mu_net.forward(g, params, coords, mode);
  Dual sigma = ad::shift(ad::softplus(sigma_net.forward(g, params, coords, mode)),
                         config.sigma_floor);
  return {mu, sigma};
}

ForwardResult FlowModel::coupling_forward(Graph& g, Var u, Var coords, Mode mode) {
  if (u.value().rank() != 2 || u.value().cols() != 2) {
    throw DimensionError("coupling_forward: state must be [n,2], got " +
                         shape_to_string(u.shape()));
  }
  Var h = u;
  Var log_det;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& c = layers[l];
    const std::size_t q = 1 - c.pass;
    Var up = ad::col(h, c.pass);
    Var in = ad::concat_cols(std::vector<Var>{up, coords});
    Var k = ad::clamp(c.k_net.forward(g, params, in, mode).value, -config.k_clamp, config.k_clamp);
    Var b = c.b_net.forward(g, params, in, mode).value;
    Var gate = config.gate == Gate::sigmoid ? ad::sigmoid(k) : ad::exp(k);
    Var zq = ad::add(ad::mul(ad::col(h, q), gate), b);
    Var term = config.gate == Gate::sigmoid ? ad::log_sigmoid(k) : k;
    log_det = log_det.valid() ? ad::add(log_det, term) : term;
    h = c.pass == 0 ? ad::concat_cols(std::vector<Var>{up, zq})
                    : ad::concat_cols(std::vector<Var>{zq, up});
    check_finite(h.value(), "coupling layer " + std::to_string(l));
  }
  return {h, log_det};
}

Dual FlowModel::coupling_inverse(Graph& g, const Dual& z, const Dual& coords, Mode mode) {
  Dual h = z;
  for (std::size_t l = layers.size(); l-- > 0;) {
    const auto& c = layers[l];
    const std::size_t q = 1 - c.pass;
    Dual zp = ad::col(h, c.pass);
    Dual in = ad::concat_cols(std::vector<Dual>{zp, coords});
    Dual k = ad::clamp(c.k_net.forward(g, params, in, mode), -config.k_clamp, config.k_clamp);
    Dual b = c.b_net.forward(g, params, in, mode);
    Dual gate = config.gate == Gate::sigmoid ? ad::sigmoid(k) : Dual(ad::exp(k.value));
    if (config.gate == Gate::exponential) {
      for (const auto& t : k.tangents) gate.tangents.push_back(ad::mul(gate.value, t));
    }
    Dual uq = ad::div(ad::sub(ad::col(h, q), b), gate);
    h = c.pass == 0 ? ad::concat_cols(std::vector<Dual>{zp, uq})
                    : ad::concat_cols(std::vector<Dual>{uq, zp});
    check_finite(h.val(), "inverse coupling layer " + std::to_string(l));
  }
  return h;
}

Var FlowModel::log_likelihood(Graph& g, Var u, Var coords, Mode mode) {
  auto [z, log_det] = coupling_forward(g, u, coords, mode);
  Prior p = prior(g, coords, mode);
  Var std_z = ad::div(ad::sub(z, p.mu.value), p.sigma.value);
  // log N per component: -0.5 log(2 pi) - log sigma - 0.5 std_z^2
  Var per = ad::add(ad::scale(ad::square(std_z), -0.5), ad::neg(ad::log(p.sigma.value)));
  per = ad::shift(per, -0.5 * std::log(2.0 * std::numbers::pi));
  Var row = ad::matmul(per, g.constant(Tensor({2, 1}, 1.0)));
  return ad::add(row, log_det);
}

Dual FlowModel::sample_path(Graph& g, const Dual& coords, const Tensor& eps, Mode mode) {
  Prior p = prior(g, coords, mode);
  if (eps.shape() != p.mu.val().shape()) {
    throw DimensionError("sample_path: noise " + shape_to_string(eps.shape()) +
                         " does not match prior " + shape_to_string(p.mu.val().shape()));
  }
  Dual zt = ad::add(p.mu, ad::mul(p.sigma, Dual(g.constant(eps))));
  return coupling_inverse(g, zt, coords, mode);
}

Tensor FlowModel::log_likelihood_values(const Tensor& u, const Tensor& coords) {
  require_same_shape(u, coords, "log_likelihood_values");
  Tensor out({u.rows(), 1});
  for (std::size_t b = 0; b < u.rows(); b += kChunk) {
    const std::size_t e = std::min(u.rows(), b + kChunk);
    Graph g;
    g.set_grad_enabled(false);
    Var lp = log_likelihood(g, g.constant(rows_slice(u, b, e)),
                            g.constant(rows_slice(coords, b, e)), Mode::eval);
    for (std::size_t i = b; i < e; ++i) out[i] = lp.value()[i - b];
  }
  return out;
}

std::pair<Tensor, Tensor> FlowModel::prior_values(const Tensor& coords) {
  Tensor mu(coords.shape()), sigma(coords.shape());
  for (std::size_t b = 0; b < coords.rows(); b += kChunk) {
    const std::size_t e = std::min(coords.rows(), b + kChunk);
    Graph g;
    g.set_grad_enabled(false);
    Prior p = prior(g, g.constant(rows_slice(coords, b, e)), Mode::eval);
    std::copy(p.mu.val().data(), p.mu.val().data() + p.mu.val().size(), mu.data() + 2 * b);
    std::copy(p.sigma.val().data(), p.sigma.val().data() + p.sigma.val().size(),
              sigma.data() + 2 * b);
  }
  return {mu, sigma};
}

Tensor FlowModel::sample(const Tensor& coords, std::size_t n, Rng& rng) {
  require_rank(coords, 2, "sample");
  const std::size_t k = coords.rows();
  Tensor out({n * k, 2});
  if (n == 0 || k == 0) return out;
  auto [mu, sigma] = prior_values(coords);
  std::normal_distribution<double> normal;
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t b = 0; b < k; b += kChunk) {
      const std::size_t e = std::min(k, b + kChunk);
      Tensor zt({e - b, 2});
      for (std::size_t i = 0; i < zt.size(); ++i) {
        zt[i] = mu[2 * b + i] + sigma[2 * b + i] * normal(rng);
      }
      Graph g;
      g.set_grad_enabled(false);
      Dual u = coupling_inverse(g, g.constant(std::move(zt)),
                                g.constant(rows_slice(coords, b, e)), Mode::eval);
      std::copy(u.val().data(), u.val().data() + u.val().size(), out.data() + 2 * (s * k + b));
    }
  }
  return out;
}

Tensor FlowModel::sample(double x, double t, std::size_t n, std::uint64_t seed) {
  Rng rng = make_stream(seed, "sample");
  return sample(Tensor({1, 2}, {x, t}), n, rng);
}

}  // namespace flowuq::flow
