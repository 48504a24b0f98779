#include <doctest.h>

#include <cmath>

#include "spinal/optim.hpp"
#include "spinal/rng.hpp"

using namespace spinal;

namespace {

nn::ParamMap small_params(Rng& rng) {
  nn::ParamMap p;
  Tensor a({3, 2});
  for (Index i = 0; i < a.size(); ++i) a[i] = rng.uniform(-1.0, 1.0);
  p["a"] = std::move(a);
  Tensor b({4});
  for (Index i = 0; i < b.size(); ++i) b[i] = rng.uniform(-1.0, 1.0);
  p["b"] = std::move(b);
  return p;
}

}  // namespace

TEST_CASE("adam_init zeroes moments with default hyperparameters") {
  Rng rng(1);
  nn::ParamMap params = small_params(rng);
  AdamState state = adam_init(params);
  CHECK(state.step_count == 0);
  CHECK(state.hyper.lr == 1e-4);
  CHECK(state.hyper.beta1 == 0.9);
  CHECK(state.hyper.beta2 == 0.999);
  for (const auto& [name, m] : state.first_moment)
    CHECK(m.flat().abs().maxCoeff() == 0.0);
  for (const auto& [name, v] : state.second_moment)
    CHECK(v.flat().abs().maxCoeff() == 0.0);

  // init does not look at parameter values
  nn::ParamMap other = small_params(rng);
  AdamState state2 = adam_init(other);
  CHECK(state2.first_moment.at("a").flat().abs().maxCoeff() == 0.0);
}

TEST_CASE("zero gradients leave parameters unchanged") {
  Rng rng(2);
  nn::ParamMap params = small_params(rng);
  nn::ParamMap before = params;
  nn::ParamMap grads;
  for (const auto& [name, t] : params) grads[name] = Tensor(t.shape());
  AdamState state = adam_init(params);
  for (int step = 0; step < 3; ++step) adam_step(params, grads, state);
  for (const auto& [name, t] : params) {
    const Tensor& b = before.at(name);
    for (Index i = 0; i < t.size(); ++i) CHECK(t[i] == b[i]);
  }
  CHECK(state.step_count == 3);
}

TEST_CASE("first step with a large constant gradient moves by about lr") {
  Rng rng(3);
  nn::ParamMap params = small_params(rng);
  nn::ParamMap before = params;
  nn::ParamMap grads;
  for (const auto& [name, t] : params) {
    Tensor g(t.shape());
    g.flat() = 2.5;  // |g| >> eps
    grads[name] = std::move(g);
  }
  AdamState state = adam_init(params);
  adam_step(params, grads, state);
  for (const auto& [name, t] : params) {
    const Tensor& b = before.at(name);
    for (Index i = 0; i < t.size(); ++i)
      CHECK(std::abs((b[i] - t[i]) - 1e-4) < 1e-6 * 1e-4);
  }
}

TEST_CASE("two steps match a scalar hand-rolled oracle") {
  nn::ParamMap params;
  Tensor x({1});
  x[0] = 0.7;
  params["x"] = std::move(x);
  nn::ParamMap grads;
  Tensor g({1});
  g[0] = 0.3;
  grads["x"] = std::move(g);
  AdamState state = adam_init(params);

  // scalar reference
  double px = 0.7, m = 0.0, v = 0.0;
  const double lr = 1e-4, b1 = 0.9, b2 = 0.999, eps = 1e-8, grad = 0.3;
  for (int t = 1; t <= 2; ++t) {
    m = b1 * m + (1 - b1) * grad;
    v = b2 * v + (1 - b2) * grad * grad;
    const double mh = m / (1 - std::pow(b1, t));
    const double vh = v / (1 - std::pow(b2, t));
    px -= lr * mh / (std::sqrt(vh) + eps);
    adam_step(params, grads, state);
  }
  CHECK(std::abs(params.at("x")[0] - px) < 1e-12);
}

TEST_CASE("update magnitude is bounded") {
  Rng rng(4);
  nn::ParamMap params = small_params(rng);
  AdamState state = adam_init(params);
  for (int step = 0; step < 50; ++step) {
    nn::ParamMap before = params;
    nn::ParamMap grads;
    for (const auto& [name, t] : params) {
      Tensor g(t.shape());
      for (Index i = 0; i < g.size(); ++i) g[i] = rng.uniform(-10.0, 10.0);
      grads[name] = std::move(g);
    }
    adam_step(params, grads, state);
    for (const auto& [name, t] : params) {
      const Tensor& b = before.at(name);
      for (Index i = 0; i < t.size(); ++i)
        CHECK(std::abs(t[i] - b[i]) <= 10.0 * state.hyper.lr);
    }
  }
}

TEST_CASE("adam_step is deterministic") {
  Rng rng(5);
  nn::ParamMap params1 = small_params(rng);
  nn::ParamMap params2 = params1;
  nn::ParamMap grads;
  for (const auto& [name, t] : params1) {
    Tensor g(t.shape());
    for (Index i = 0; i < g.size(); ++i) g[i] = rng.uniform(-1.0, 1.0);
    grads[name] = std::move(g);
  }
  AdamState s1 = adam_init(params1);
  AdamState s2 = adam_init(params2);
  adam_step(params1, grads, s1);
  adam_step(params2, grads, s2);
  for (const auto& [name, t] : params1) {
    const Tensor& u = params2.at(name);
    for (Index i = 0; i < t.size(); ++i) CHECK(t[i] == u[i]);
  }
}

TEST_CASE("missing gradient key is a contract violation") {
  Rng rng(6);
  nn::ParamMap params = small_params(rng);
  nn::ParamMap grads;
  grads["a"] = Tensor(params.at("a").shape());
  AdamState state = adam_init(params);
  CHECK_THROWS_AS(adam_step(params, grads, state), ContractError);
}
