#include <cmath>

#include "doctest.h"
#include "flowuq/critic.hpp"
#include "gradcheck.hpp"

using namespace flowuq;
using namespace flowuq::critic;

namespace {

CriticModel make_critic(std::size_t loops, std::size_t window, std::uint64_t seed = 1) {
  CriticConfig cfg;
  cfg.n_loops = loops;
  cfg.t_window = window;
  Rng rng = make_stream(seed, "test-critic");
  return CriticModel::create(cfg, rng);
}

}  // namespace

TEST_CASE("reference architectures per loop count") {
  struct Row {
    std::size_t loops, kt, ks;
    std::array<std::size_t, 3> ch;
    std::size_t fc1, fc2;
  };
  const Row rows[] = {
      {3, 3, 1, {4, 8, 16}, 144, 64},  {4, 4, 2, {4, 8, 16}, 144, 64},
      {6, 3, 2, {4, 8, 16}, 240, 64},  {10, 3, 2, {4, 8, 12}, 96, 64},
      {14, 3, 2, {4, 8, 12}, 96, 64},  {18, 3, 2, {4, 8, 12}, 144, 64},
  };
  for (const auto& r : rows) {
    CAPTURE(r.loops);
    const CriticArch a = CriticArch::for_loops(r.loops);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(a.convs[i].k_time == r.kt);
      CHECK(a.convs[i].k_space == r.ks);
      CHECK(a.convs[i].channels == r.ch[i]);
    }
    CHECK(a.fc1 == r.fc1);
    CHECK(a.fc2 == r.fc2);
    CriticModel m = make_critic(r.loops, 32);
    Rng rng = make_stream(r.loops, "batch");
    const Tensor out = m.score_values(normal_tensor(rng, {5, 2, r.loops, 32}));
    CHECK(out.shape() == Shape{5, 1});
    CHECK(out.all_finite());
  }
}

TEST_CASE("four loop architecture dimensions") {
  const CriticArch a = CriticArch::for_loops(4);
  CHECK(a.min_loops() == 4);
  CHECK(a.min_window() == 10);
  // A window of 18 steps reproduces the 144 wide flatten exactly.
  CHECK(a.flatten_width(4, 18) == 144);
  CHECK(a.flatten_width(4, 32) == 16 * 23);
}

TEST_CASE("unlisted loop counts fall back to the nearest smaller entry") {
  CHECK(CriticArch::for_loops(5).convs[0].k_time == 4);
  CHECK(CriticArch::for_loops(8).convs[2].channels == 16);
  CHECK(CriticArch::for_loops(30).fc1 == 144);
  CHECK(CriticArch::for_loops(2).convs[0].k_space == 1);
}

TEST_CASE("undersized inputs name the minimum") {
  try {
    make_critic(4, 9);
    FAIL("expected a dimension error");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("4 loops x 10 steps") != std::string::npos);
  }
  CriticConfig few;
  few.n_loops = 3;
  Rng rng = make_stream(1, "few");
  CHECK_THROWS_AS(CriticModel::create(few, CriticArch::for_loops(4), rng), DimensionError);
  CriticModel m = make_critic(4, 16);
  CHECK_THROWS_AS(m.score_values(Tensor({1, 2, 4, 15})), DimensionError);
}

TEST_CASE("zero weights score zero") {
  CriticModel m = make_critic(4, 16);
  for (auto& p : m.params)
    if (p.trainable && p.name.find("gamma") == std::string::npos) p.value.fill(0.0);
  Rng rng = make_stream(2, "zero");
  const Tensor out = m.score_values(normal_tensor(rng, {3, 2, 4, 16}));
  for (double v : out.values()) CHECK(v == 0.0);
}

TEST_CASE("one changed cell changes the score") {
  CriticModel m = make_critic(6, 20, 3);
  Rng rng = make_stream(3, "probe");
  Tensor a = normal_tensor(rng, {1, 2, 6, 20});
  Tensor b = a;
  b[2 * 6 * 20 - 7] += 0.1;
  CHECK(m.score_values(a)[0] != m.score_values(b)[0]);
}

TEST_CASE("Wasserstein critic loss") {
  Graph g;
  SUBCASE("equal scores give zero") {
    Var s = g.constant(Tensor({3, 1}, {0.2, -0.4, 1.0}));
    CHECK(critic_loss(s, s).value()[0] == 0.0);
  }
  SUBCASE("constant critic gives zero") {
    CriticModel m = make_critic(4, 16);
    for (auto& p : m.params)
      if (p.trainable && p.name.find("gamma") == std::string::npos) p.value.fill(0.0);
    m.params[m.head.bias].value.fill(0.7);
    Rng rng = make_stream(4, "const");
    const Tensor real = m.score_values(normal_tensor(rng, {4, 2, 4, 16}));
    const Tensor fake = m.score_values(normal_tensor(rng, {4, 2, 4, 16}));
    CHECK(critic_loss(g.constant(real), g.constant(fake)).value()[0] == doctest::Approx(0.0));
  }
  SUBCASE("one parameter critic by hand") {
    // D(M) = w * sum(M) with w = 0.5 on two real and two fake matrices.
    const double w = 0.5;
    const double real_sums[] = {1.0, 3.0}, fake_sums[] = {2.0, -2.0};
    Tensor r({2, 1}), f({2, 1});
    for (int i = 0; i < 2; ++i) {
      r[i] = w * real_sums[i];
      f[i] = w * fake_sums[i];
    }
    // -(1/2) ((0.5 - 1) + (1.5 + 1)) = -1
    CHECK(critic_loss(g.constant(r), g.constant(f)).value()[0] == doctest::Approx(-1.0));
  }
  SUBCASE("empty and mismatched lists are rejected") {
    CHECK_THROWS(critic_loss(g.constant(Tensor({0, 1})), g.constant(Tensor({0, 1}))));
    CHECK_THROWS(critic_loss(g.constant(Tensor({2, 1})), g.constant(Tensor({3, 1}))));
  }
}

TEST_CASE("weight clipping") {
  CriticModel m = make_critic(4, 16);
  m.params[m.fc1.weight].value[0] = 0.5;
  m.params[m.fc1.weight].value[1] = -0.3;
  enforce_lipschitz(m);
  CHECK(m.params[m.fc1.weight].value[0] == 0.01);
  CHECK(m.params[m.fc1.weight].value[1] == -0.01);
  CHECK(max_abs_weight(m) <= 0.01);
  for (auto& p : m.params)
    if (p.trainable)
      for (double& v : p.value.values()) v *= 0.5;
  const auto before = m.params.export_values();
  enforce_lipschitz(m);
  CHECK(m.params.export_values() == before);
}

TEST_CASE("critic loss gradient matches finite differences") {
  CriticModel m = make_critic(4, 12, 5);
  Rng rng = make_stream(5, "grad");
  const Tensor real = normal_tensor(rng, {3, 2, 4, 12}), fake = normal_tensor(rng, {3, 2, 4, 12});
  std::vector<ad::Parameter*> buffers;
  for (auto& p : m.params)
    if (!p.trainable) buffers.push_back(&p);
  for (Mode mode : {Mode::eval, Mode::train}) {
    auto r = gradcheck::check(
        m.params.trainable(),
        [&](Graph& g) {
          return critic_loss(m.score(g, g.constant(real), mode), m.score(g, g.constant(fake), mode));
        },
        300, 5, 1e-5, buffers);
    INFO(r.worst_at);
    CHECK(r.worst < 1e-4);
  }
}
