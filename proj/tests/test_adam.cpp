#include <cmath>

#include "doctest.h"
#include "spade/adam.hpp"
#include "spade/errors.hpp"
#include "spade/graph.hpp"
#include "spade/tensor.hpp"

using namespace spade;

TEST_SUITE("adam") {

TEST_CASE("config validation") {
  Parameter p("w", scalar(1.0));
  CHECK_THROWS_AS(AdamOptimizer({&p}, {.learning_rate = 0.0}), ConfigError);
  CHECK_THROWS_AS(AdamOptimizer({&p}, {.beta1 = 1.0}), ConfigError);
  CHECK_THROWS_AS(AdamOptimizer({&p}, {.beta2 = -0.1}), ConfigError);
  CHECK_THROWS_AS(AdamOptimizer({&p}, {.epsilon = 0.0}), ConfigError);
  CHECK_THROWS_AS(AdamOptimizer({nullptr}, {}), ConfigError);
}

TEST_CASE("zero gradient moves nothing") {
  Parameter p("w", matrix(1, 2, {1.0, -2.0}));
  AdamOptimizer opt({&p}, {});
  opt.zero_grad();
  opt.step();
  CHECK(p.tensor.values == std::vector<double>{1.0, -2.0});
  CHECK(opt.step_count() == 1);
}

TEST_CASE("first two steps match the hand derivation") {
  // constant gradient g: bias correction makes m_hat = g and v_hat = g^2,
  // so each update is lr * g / (|g| + eps) ~= lr * sign(g)
  Parameter p("w", scalar(1.0));
  AdamOptimizer opt({&p}, {.learning_rate = 1e-3});

  auto push_grad = [&](double gv) {
    opt.zero_grad();
    p.accumulate_grad({gv});
    opt.step();
  };

  push_grad(0.5);
  const double expected1 = 1.0 - 1e-3 * 0.5 / (0.5 + 1e-8);
  CHECK(std::abs(p.tensor.values[0] - expected1) < 1e-15);

  push_grad(0.5);
  // m2 = .9*.05 + .1*.5 = .095, mhat = .095/(1-.81) = .5
  // v2 = .999*.00025 + .001*.25, vhat = v2/(1-.999^2) = .25
  const double m2 = 0.9 * 0.05 + 0.1 * 0.5;
  const double v2 = 0.999 * 0.00025 + 0.001 * 0.25;
  const double expected2 =
      expected1 - 1e-3 * (m2 / (1 - 0.81)) / (std::sqrt(v2 / (1 - 0.999 * 0.999)) + 1e-8);
  CHECK(std::abs(p.tensor.values[0] - expected2) < 1e-15);
  CHECK(opt.step_count() == 2);
}

TEST_CASE("descends a quadratic") {
  // f(w) = (w - 3)^2 via the graph, so the whole loop is exercised
  Parameter p("w", scalar(0.0));
  AdamOptimizer opt({&p}, {.learning_rate = 0.1});
  double first_loss = 0.0;
  double last_loss = 0.0;
  for (int it = 0; it < 200; ++it) {
    Graph g;
    auto w = g.param(p);
    auto d = g.add(w, g.constant(scalar(-3.0)));
    auto loss = g.sum(g.mul(d, d));
    if (it == 0) first_loss = g.value(loss).values[0];
    last_loss = g.value(loss).values[0];
    opt.zero_grad();
    g.backward(loss);
    opt.step();
  }
  CHECK(last_loss < 0.01 * first_loss);
  CHECK(std::abs(p.tensor.values[0] - 3.0) < 0.2);
}

TEST_CASE("per parameter scale invariance") {
  // Adam normalizes by the gradient magnitude, so two parameters with
  // gradients differing by 1000x move the same distance on step one.
  Parameter a("a", scalar(0.0));
  Parameter b("b", scalar(0.0));
  AdamOptimizer opt({&a, &b}, {.learning_rate = 1e-2});
  opt.zero_grad();
  a.accumulate_grad({1e-3});
  b.accumulate_grad({1.0});
  opt.step();
  CHECK(std::abs(a.tensor.values[0] - b.tensor.values[0]) < 1e-6);
  CHECK(a.tensor.values[0] < 0.0);
}

}  // TEST_SUITE
