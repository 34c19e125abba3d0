#include <cmath>

#include "doctest.h"
#include "flowuq/dual.hpp"
#include "gradcheck.hpp"

using namespace flowuq;
using namespace flowuq::ad;

namespace {

Tensor random_tensor(Shape s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  auto rng = make_stream(seed, "test");
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(std::move(s));
  for (double& v : t.values()) v = u(rng);
  return t;
}

}  // namespace

TEST_CASE("sum of an input has an all-ones gradient") {
  Graph g;
  Var x = g.input(random_tensor({3, 4}, 1), true);
  g.backward(sum(x));
  const Tensor gx = x.grad();
  for (double v : gx.values()) CHECK(v == 1.0);
}

TEST_CASE("product of scalars differentiates to the other factor") {
  Graph g;
  Var u = g.input(Tensor::scalar(2.5), true);
  Var v = g.input(Tensor::scalar(-4.0), true);
  g.backward(mul(u, v));
  CHECK(u.grad()[0] == -4.0);
  CHECK(v.grad()[0] == 2.5);
}

TEST_CASE("unused nodes get exactly zero gradient") {
  Graph g;
  Var x = g.input(random_tensor({2, 2}, 2), true);
  Var unused = g.input(random_tensor({2, 2}, 3), true);
  Var dead = tanh(unused);
  g.backward(sum(square(x)));
  const Tensor gu = unused.grad(), gd = dead.grad();
  for (double v : gu.values()) CHECK(v == 0.0);
  for (double v : gd.values()) CHECK(v == 0.0);
}

TEST_CASE("backward rejects non-scalar losses") {
  Graph g;
  Var x = g.input(random_tensor({2, 2}, 4), true);
  CHECK_THROWS_AS(g.backward(tanh(x)), DimensionError);
}

TEST_CASE("activations at reference points") {
  Graph g;
  Var x = g.constant(Tensor({3}, {0.0, -3.0, 3.0}));
  CHECK(sigmoid(x).value()[0] == 0.5);
  CHECK(relu(x).value()[1] == 0.0);
  CHECK(relu(x).value()[2] == 3.0);
  CHECK(leaky_relu(x, 0.01).value()[1] == doctest::Approx(-0.03));
  CHECK(tanh(x).value()[0] == 0.0);
}

TEST_CASE("elementwise ops pass finite-difference checks") {
  const Tensor base = random_tensor({4, 5}, 5, 0.2, 1.5);
  const Tensor other = random_tensor({4, 5}, 6, 0.5, 2.0);
  using Op = std::function<Var(Graph&, Var)>;
  const std::vector<std::pair<const char*, Op>> ops = {
      {"tanh", [](Graph&, Var x) { return tanh(x); }},
      {"sigmoid", [](Graph&, Var x) { return sigmoid(x); }},
      {"softplus", [](Graph&, Var x) { return softplus(x); }},
      {"log_sigmoid", [](Graph&, Var x) { return log_sigmoid(x); }},
      {"exp", [](Graph&, Var x) { return exp(x); }},
      {"log", [](Graph&, Var x) { return log(x); }},
      {"square", [](Graph&, Var x) { return square(x); }},
      {"leaky_relu", [](Graph&, Var x) { return leaky_relu(shift(x, -0.9), 0.01); }},
      {"relu", [](Graph&, Var x) { return relu(shift(x, -0.9)); }},
      {"mul", [&](Graph& g, Var x) { return mul(x, g.constant(other)); }},
      {"div", [&](Graph& g, Var x) { return div(g.constant(other), x); }},
      {"sub", [&](Graph& g, Var x) { return sub(g.constant(other), square(x)); }},
      {"mul_scalar", [](Graph&, Var x) { return mul_scalar(x, sum(col(x, 2))); }},
      {"div_scalar", [](Graph& g, Var x) { return div_scalar(x, sum(g.constant(Tensor::scalar(3.0)))); }},
  };
  for (const auto& [name, op] : ops) {
    CAPTURE(name);
    auto r = gradcheck::check_input(base, [&](Graph& g, Var x) {
      Var y = op(g, x);
      return sum(mul(y, g.constant(random_tensor(y.shape(), 7))));
    }, 100, 8);
    CHECK(r.worst < 1e-4);
  }
}

TEST_CASE("tanh gradient matches central differences at random points") {
  auto r = gradcheck::check_input(random_tensor({10, 12}, 9, -3.0, 3.0),
                                  [](Graph&, Var x) { return sum(tanh(x)); }, 120, 10);
  CHECK(r.probes >= 100);
  CHECK(r.worst < 1e-6);
}

TEST_CASE("structural ops pass finite-difference checks") {
  const Tensor a = random_tensor({6, 4}, 11);
  const Tensor w = random_tensor({4, 3}, 12);
  auto weights = [](Var y) { return y.graph().constant(random_tensor(y.shape(), 13)); };
  auto check = [&](const char* name, std::function<Var(Graph&, Var)> f) {
    CAPTURE(name);
    auto r = gradcheck::check_input(a, [&](Graph& g, Var x) {
      Var y = f(g, x);
      return sum(mul(y, weights(y)));
    }, 100, 14);
    CHECK(r.worst < 1e-4);
  };
  check("matmul", [&](Graph& g, Var x) { return matmul(x, g.constant(w)); });
  check("matmul_rhs", [&](Graph& g, Var x) { return matmul(g.constant(w.reshaped({3, 4})), reshape(x, {4, 6})); });
  check("sum_rows", [](Graph&, Var x) { return sum_rows(square(x)); });
  check("mean", [](Graph&, Var x) { return mean(square(x)); });
  check("gather", [](Graph&, Var x) { return gather(x, {3, 3, 0, 23, 7}, {5}); });
  check("col", [](Graph&, Var x) { return col(square(x), 2); });
  check("concat_cols", [](Graph&, Var x) { return concat_cols(std::vector<Var>{x, square(x)}); });
  check("concat_rows", [](Graph&, Var x) { return concat_rows({x, tanh(x)}); });
  check("clamp", [](Graph&, Var x) { return clamp(x, -0.5, 0.5); });
  check("affine_channels", [](Graph& g, Var x) {
    return affine_channels(reshape(x, {2, 4, 3}), g.constant(Tensor({4}, {1.0, -2.0, 0.5, 3.0})),
                           g.constant(Tensor({4}, {0.1, 0.2, 0.3, 0.4})));
  });
}

TEST_CASE("positive part integral") {
  Graph g;
  // 1, -1 on unit spacing: the positive triangle has area 1/4.
  CHECK(positive_part_integral(g.constant(Tensor({2}, {1.0, -1.0})), 1.0).value()[0] == 0.25);
  CHECK(positive_part_integral(g.constant(Tensor({3}, {1.0, 2.0, 3.0})), 0.5).value()[0] == 2.0);
  CHECK(positive_part_integral(g.constant(Tensor({3}, {-1.0, -2.0, 0.0})), 0.5).value()[0] == 0.0);
  // Values crossing zero in many segments.
  const Tensor a = random_tensor({24, 1}, 21);
  auto r = gradcheck::check_input(a, [](Graph&, Var x) { return positive_part_integral(x, 0.1); },
                                  100, 22);
  CHECK(r.worst < 1e-6);
}

TEST_CASE("conv2d ops") {
  SUBCASE("ones input and kernel sum to nine") {
    Graph g;
    Var y = conv2d(g.constant(Tensor({1, 1, 3, 3}, 1.0)), g.constant(Tensor({1, 1, 3, 3}, 1.0)));
    CHECK(y.shape() == Shape{1, 1, 1, 1});
    CHECK(y.value()[0] == 9.0);
  }
  SUBCASE("impulse response reproduces the flipped kernel") {
    Graph g;
    Tensor x({1, 1, 5, 5});
    x[2 * 5 + 2] = 1.0;
    const Tensor w = random_tensor({1, 1, 3, 3}, 15);
    Var y = conv2d(g.constant(x), g.constant(w));
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j) CHECK(y.value()[i * 3 + j] == w[(2 - i) * 3 + (2 - j)]);
  }
  SUBCASE("kernel larger than input is rejected") {
    Graph g;
    CHECK_THROWS_AS(conv2d(g.constant(Tensor({1, 1, 2, 5})), g.constant(Tensor({1, 1, 3, 1}))),
                    DimensionError);
  }
  SUBCASE("gradients in input and kernel") {
    const Tensor x0 = random_tensor({2, 2, 5, 4}, 16);
    const Tensor w0 = random_tensor({4, 2, 3, 2}, 17);
    Parameter x{"x", x0, {}, true}, w{"w", w0, {}, true};
    auto r = gradcheck::check({&x, &w}, [&](Graph& g) {
      Var y = conv2d(g.parameter(x), g.parameter(w));
      return sum(mul(tanh(y), g.constant(random_tensor(y.shape(), 18))));
    }, 150, 19);
    CHECK(r.worst < 1e-4);
  }
}

TEST_CASE("training-mode batch norm") {
  const Tensor x0 = random_tensor({7, 3}, 20, -2.0, 3.0);
  SUBCASE("normalized output has zero mean and unit variance") {
    Graph g;
    BatchStats stats;
    Var y = batch_norm_train(g.constant(x0), g.constant(Tensor({3}, 1.0)), g.constant(Tensor({3})),
                             0.0, &stats);
    for (std::size_t c = 0; c < 3; ++c) {
      double m = 0.0, v = 0.0;
      for (std::size_t i = 0; i < 7; ++i) m += y.value().at(i, c);
      m /= 7.0;
      for (std::size_t i = 0; i < 7; ++i) v += std::pow(y.value().at(i, c) - m, 2);
      v /= 7.0;
      CHECK(std::abs(m) < 1e-10);
      CHECK(std::abs(v - 1.0) < 1e-8);
    }
  }
  SUBCASE("batch of one is degenerate") {
    Graph g;
    CHECK_THROWS(batch_norm_train(g.constant(Tensor({1, 3})), g.constant(Tensor({3}, 1.0)),
                                  g.constant(Tensor({3})), 1e-5, nullptr));
  }
  SUBCASE("gradients match finite differences") {
    Parameter x{"x", x0, {}, true};
    Parameter gamma{"gamma", Tensor({3}, {1.2, 0.7, -0.4}), {}, true};
    Parameter beta{"beta", Tensor({3}, {0.1, -0.3, 0.2}), {}, true};
    auto r = gradcheck::check({&x, &gamma, &beta}, [&](Graph& g) {
      Var y = batch_norm_train(g.parameter(x), g.parameter(gamma), g.parameter(beta), 1e-5, nullptr);
      return sum(mul(tanh(y), g.constant(random_tensor(y.shape(), 21))));
    }, 100, 22);
    CHECK(r.worst < 1e-5);
  }
  SUBCASE("rank-4 input normalizes per channel") {
    Parameter x{"x", random_tensor({3, 2, 2, 4}, 23), {}, true};
    Parameter gamma{"gamma", Tensor({2}, {1.5, 0.5}), {}, true};
    Parameter beta{"beta", Tensor({2}, {0.0, 1.0}), {}, true};
    auto r = gradcheck::check({&x, &gamma, &beta}, [&](Graph& g) {
      Var y = batch_norm_train(g.parameter(x), g.parameter(gamma), g.parameter(beta), 1e-5, nullptr);
      return sum(mul(square(y), g.constant(random_tensor(y.shape(), 24))));
    }, 100, 25);
    CHECK(r.worst < 1e-5);
  }
}

TEST_CASE("backward of a sum of losses equals the sum of backwards") {
  const Tensor x0 = random_tensor({5, 3}, 26);
  auto loss_a = [](Var x) { return sum(tanh(x)); };
  auto loss_b = [](Var x) { return mean(square(sigmoid(x))); };
  Tensor ga, gb, gs;
  {
    Graph g;
    Var x = g.input(x0, true);
    g.backward(loss_a(x));
    ga = x.grad();
  }
  {
    Graph g;
    Var x = g.input(x0, true);
    g.backward(loss_b(x));
    gb = x.grad();
  }
  {
    Graph g;
    Var x = g.input(x0, true);
    g.backward(add(loss_a(x), loss_b(x)));
    gs = x.grad();
  }
  for (std::size_t i = 0; i < gs.size(); ++i) CHECK(std::abs(gs[i] - ga[i] - gb[i]) < 1e-12);
}

TEST_CASE("identical inputs give bit-identical values and gradients") {
  auto run = [] {
    Graph g;
    Var x = g.input(random_tensor({8, 8}, 27), true);
    Var w = g.input(random_tensor({8, 8}, 28), true);
    Var loss = sum(tanh(matmul(x, w)));
    g.backward(loss);
    return std::tuple{loss.value(), x.grad(), w.grad()};
  };
  CHECK(run() == run());
}

TEST_CASE("no-grad graphs record nothing for backward") {
  Parameter p{"p", Tensor({2}, {1.0, 2.0}), {}, true};
  Graph g;
  g.set_grad_enabled(false);
  Var y = sum(square(g.parameter(p)));
  CHECK(y.value()[0] == 5.0);
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("forward-mode tangents match finite differences") {
  // f(x) = tanh(x W + b) composed with softplus and sigmoid, directional
  // derivative along e_j.
  const Tensor w = random_tensor({2, 3}, 29), b = random_tensor({3}, 30);
  auto f = [&](Graph& g, const Dual& x) {
    Dual h = tanh(dense(x, g.constant(w), g.constant(b)));
    return mul(softplus(h), sigmoid(h));
  };
  const Tensor x0 = random_tensor({4, 2}, 31);
  for (std::size_t j = 0; j < 2; ++j) {
    Tensor seed(x0.shape());
    for (std::size_t i = 0; i < 4; ++i) seed.at(i, j) = 1.0;
    Graph g;
    Dual y = f(g, Dual(g.constant(x0), {g.constant(seed)}));
    const double h = 1e-5;
    Tensor xp = x0, xm = x0;
    for (std::size_t i = 0; i < 4; ++i) {
      xp.at(i, j) += h;
      xm.at(i, j) -= h;
    }
    Graph g2;
    const Tensor yp = f(g2, Dual(g2.constant(xp))).val();
    const Tensor ym = f(g2, Dual(g2.constant(xm))).val();
    for (std::size_t i = 0; i < yp.size(); ++i) {
      CHECK(y.tangents[0].value()[i] == doctest::Approx((yp[i] - ym[i]) / (2 * h)).epsilon(1e-6));
    }
  }
}
