#include "flowuq/critic.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace flowuq::critic {

namespace {

struct TableRow {
  std::size_t loops;
  CriticArch arch;
};

const std::vector<TableRow>& reference_table() {
  // Entries are (time extent, loop extent, output channels).
  static const std::vector<TableRow> table = {
      {3, {{{{3, 1, 4}, {3, 1, 8}, {3, 1, 16}}}, 144, 64}},
      {4, {{{{4, 2, 4}, {4, 2, 8}, {4, 2, 16}}}, 144, 64}},
      {6, {{{{3, 2, 4}, {3, 2, 8}, {3, 2, 16}}}, 240, 64}},
      {10, {{{{3, 2, 4}, {3, 2, 8}, {3, 2, 12}}}, 96, 64}},
      {14, {{{{3, 2, 4}, {3, 2, 8}, {3, 2, 12}}}, 96, 64}},
      {18, {{{{3, 2, 4}, {3, 2, 8}, {3, 2, 12}}}, 144, 64}},
  };
  return table;
}

}  // namespace

CriticArch CriticArch::for_loops(std::size_t n_loops) {
  const auto& table = reference_table();
  CriticArch arch = table.front().arch;
  for (const auto& row : table) {
    if (row.loops <= n_loops) arch = row.arch;
  }
  return arch;
}

std::size_t CriticArch::min_loops() const {
  std::size_t n = 1;
  for (const auto& c : convs) n += c.k_space - 1;
  return n;
}

std::size_t CriticArch::min_window() const {
  std::size_t n = 1;
  for (const auto& c : convs) n += c.k_time - 1;
  return n;
}

std::size_t CriticArch::flatten_width(std::size_t n_loops, std::size_t t_window) const {
  if (n_loops < min_loops() || t_window < min_window()) {
    throw DimensionError("critic: input of " + std::to_string(n_loops) + " loops x " +
                         std::to_string(t_window) + " steps is below the required minimum of " +
                         std::to_string(min_loops()) + " loops x " +
                         std::to_string(min_window()) + " steps");
  }
  return convs.back().channels * (n_loops - min_loops() + 1) * (t_window - min_window() + 1);
}

CriticModel CriticModel::create(const CriticConfig& config, Rng& rng) {
  return create(config, CriticArch::for_loops(config.n_loops), rng);
}

CriticModel CriticModel::create(const CriticConfig& config, const CriticArch& arch, Rng& rng) {
  CriticModel m;
  m.config = config;
  m.arch = arch;
  const std::size_t flat = arch.flatten_width(config.n_loops, config.t_window);
  std::size_t ch = 2;
  for (std::size_t i = 0; i < arch.convs.size(); ++i) {
    const auto& c = arch.convs[i];
    const std::string name = "conv" + std::to_string(i);
    m.convs.push_back(nn::Conv2d::create(m.params, name, ch, c.channels, c.k_space, c.k_time, rng));
    if (config.batch_norm) m.norms.push_back(nn::BatchNorm::create(m.params, name + ".bn", c.channels));
    ch = c.channels;
  }
  m.fc1 = nn::Dense::create(m.params, "fc1", flat, arch.fc1, rng);
  m.fc2 = nn::Dense::create(m.params, "fc2", arch.fc1, arch.fc2, rng);
  m.head = nn::Dense::create(m.params, "head", arch.fc2, 1, rng);
  return m;
}

Var CriticModel::score(Graph& g, Var batch, Mode mode) {
  const Shape s = batch.shape();
  if (s.size() != 4 || s[1] != 2 || s[2] != config.n_loops || s[3] != config.t_window) {
    throw DimensionError("critic: expected [N,2," + std::to_string(config.n_loops) + "," +
                         std::to_string(config.t_window) + "], got " + shape_to_string(s));
  }
  arch.flatten_width(s[2], s[3]);
  Var h = batch;
  for (std::size_t i = 0; i < convs.size(); ++i) {
    h = convs[i].forward(g, params, h);
    if (config.batch_norm) h = norms[i].forward(g, params, h, mode).value;
    h = ad::tanh(h);
  }
  const std::size_t n = s[0];
  h = ad::reshape(h, {n, h.size() / n});
  h = ad::tanh(fc1.forward(g, params, h).value);
  h = ad::tanh(fc2.forward(g, params, h).value);
  return head.forward(g, params, h).value;
}

Tensor CriticModel::score_values(const Tensor& batch) {
  Graph g;
  g.set_grad_enabled(false);
  return score(g, g.constant(batch), Mode::eval).value();
}

Var critic_loss(Var real_scores, Var fake_scores) {
  if (real_scores.size() == 0 || fake_scores.size() == 0) {
    throw std::invalid_argument("critic_loss: empty score list");
  }
  if (real_scores.size() != fake_scores.size()) {
    throw DimensionError("critic_loss: " + std::to_string(real_scores.size()) + " real vs " +
                         std::to_string(fake_scores.size()) + " fake matrices");
  }
  return ad::neg(ad::mean(ad::sub(real_scores, fake_scores)));
}

void enforce_lipschitz(CriticModel& model) {
  const double c = model.config.clip;
  for (auto& p : model.params) {
    if (!p.trainable) continue;
    for (double& v : p.value.values()) v = std::clamp(v, -c, c);
  }
}

double max_abs_weight(const CriticModel& model) {
  double m = 0.0;
  for (const auto& p : model.params) {
    if (!p.trainable) continue;
    for (double v : p.value.values()) m = std::max(m, std::abs(v));
  }
  return m;
}

}  // namespace flowuq::critic
