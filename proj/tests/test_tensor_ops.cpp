#include <cmath>
#include <stdexcept>

#include "doctest.h"
#include "gradient_cases.hpp"
#include "tokencast/core/ops.hpp"
#include "tokencast/core/random.hpp"
#include "tokencast/core/tensor.hpp"

using namespace tokencast::core;
using tokencast::testing::uniform_tensor;

TEST_CASE("softmax of equal logits is uniform") {
  auto y = softmax(Tensor::from({1, 2}, {0.0, 0.0}));
  CHECK(y.at(0) == doctest::Approx(0.5));
  CHECK(y.at(1) == doctest::Approx(0.5));
}

TEST_CASE("identity causal kernel reproduces input") {
  Rng rng(1);
  auto x = uniform_tensor({6, 1}, rng);
  auto w = Tensor::from({1, 1, 1}, {1.0});
  auto b = Tensor::zeros({1});
  auto y = causal_conv1d(x, w, b, 6, 1);
  for (std::size_t i = 0; i < 6; ++i) CHECK(y.at(i) == x.at(i));
}

TEST_CASE("cross entropy of uniform logits is ln V") {
  for (std::size_t v : {2u, 7u, 328u}) {
    auto logits = Tensor::zeros({3, v});
    const std::vector<int> targets{0, static_cast<int>(v) - 1, 1};
    CHECK(cross_entropy(logits, targets).item() == doctest::Approx(std::log(double(v))));
  }
}

TEST_CASE("product rule") {
  auto x = Tensor::scalar(3.0, true);
  auto y = Tensor::scalar(4.0, true);
  mul(x, y).backward();
  CHECK(x.grad()[0] == 4.0);
  CHECK(y.grad()[0] == 3.0);
}

TEST_CASE("stop-gradient is identity forward and blocks backward") {
  Rng rng(2);
  auto x = uniform_tensor({2, 3}, rng);
  auto sg = stop_gradient(x);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(sg.at(i) == x.at(i));
  auto y = add(sum(square(sg)), Tensor::scalar(0.0, true));
  y.backward();
  CHECK_FALSE(x.has_grad());
}

TEST_CASE("repeated backward accumulates into leaves") {
  auto x = Tensor::scalar(2.0, true);
  auto y = square(x);
  y.backward();
  y.backward();
  CHECK(x.grad()[0] == doctest::Approx(8.0));
}

TEST_CASE("backward rejects non-scalar roots") {
  auto x = Tensor::zeros({2, 2}, true);
  CHECK_THROWS_AS(scale(x, 2.0).backward(), std::invalid_argument);
}

TEST_CASE("shape mismatch names both shapes") {
  auto a = Tensor::zeros({3, 4});
  auto b = Tensor::zeros({5, 2});
  try {
    matmul(a, b);
    FAIL("expected throw");
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[3x4]") != std::string::npos);
    CHECK(msg.find("[5x2]") != std::string::npos);
  }
  CHECK_THROWS_AS(add(a, Tensor::zeros({4, 3})), std::invalid_argument);
}

TEST_CASE("every registered op matches central finite differences") {
  Rng rng(42);
  for (const auto& op : tokencast::testing::gradient_ops()) {
    for (int trial = 0; trial < 5; ++trial) {
      auto c = op.make(rng);
      auto report = grad_check(c.fn, c.inputs);
      INFO(op.name << ": " << report.summary());
      CHECK(report.passed(1e-3));
    }
  }
}

TEST_CASE("layer norm gradient on 4x8 input") {
  Rng rng(7);
  auto r = uniform_tensor({4, 8}, rng).detach();
  auto gamma = Tensor::full({8}, 1.0);
  auto beta = Tensor::zeros({8});
  auto report = grad_check(
      [&](std::span<const Tensor> in) {
        return tokencast::testing::project(layer_norm(in[0], gamma, beta), r);
      },
      {uniform_tensor({4, 8}, rng)});
  CHECK(report.worst() <= 1e-3);
}

TEST_CASE("gradient check reports exact zero through stop-gradient") {
  Rng rng(3);
  auto report = grad_check(
      [](std::span<const Tensor> in) { return sum(square(stop_gradient(in[0]))); },
      {uniform_tensor({3, 3}, rng)});
  CHECK(report.max_abs_analytic[0] == 0.0);
}

TEST_CASE("causal conv is causal") {
  Rng rng(5);
  auto w = uniform_tensor({3, 2, 4}, rng);
  auto b = uniform_tensor({4}, rng);
  for (int trial = 0; trial < 20; ++trial) {
    auto x = uniform_tensor({2 * 9, 2}, rng);
    auto y0 = causal_conv1d(x, w, b, 9, 2);
    const std::size_t t = rng.index(9);
    auto x2 = x.clone();
    for (std::size_t s = t + 1; s < 9; ++s)
      for (std::size_t c = 0; c < 2; ++c) x2.mutable_data()[(9 + s) * 2 + c] += rng.normal();
    auto y1 = causal_conv1d(x2, w, b, 9, 2);
    for (std::size_t s = 0; s <= t; ++s)
      for (std::size_t c = 0; c < 4; ++c) CHECK(y0.at((9 + s) * 4 + c) == y1.at((9 + s) * 4 + c));
    for (std::size_t i = 0; i < 9 * 4; ++i) CHECK(y0.at(i) == y1.at(i));
  }
}

TEST_CASE("masked attention is causal") {
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    auto q = uniform_tensor({10, 4}, rng);
    auto k = uniform_tensor({10, 4}, rng);
    auto v = uniform_tensor({10, 4}, rng);
    auto y0 = causal_attention(q, k, v, 10, 2);
    const std::size_t t = rng.index(10);
    auto q2 = q.clone(), k2 = k.clone(), v2 = v.clone();
    for (std::size_t s = t + 1; s < 10; ++s) {
      for (std::size_t c = 0; c < 4; ++c) {
        q2.mutable_data()[s * 4 + c] = rng.normal();
        k2.mutable_data()[s * 4 + c] = rng.normal();
        v2.mutable_data()[s * 4 + c] = rng.normal();
      }
    }
    auto y1 = causal_attention(q2, k2, v2, 10, 2);
    for (std::size_t i = 0; i < (t + 1) * 4; ++i) CHECK(y0.at(i) == y1.at(i));
  }
}

TEST_CASE("ops are pure") {
  Rng a(11), b(11);
  auto x1 = uniform_tensor({8, 4}, a);
  auto x2 = uniform_tensor({8, 4}, b);
  auto y1 = causal_attention(x1, x1, x1, 8, 2);
  auto y2 = causal_attention(x2, x2, x2, 8, 2);
  for (std::size_t i = 0; i < y1.size(); ++i) CHECK(y1.at(i) == y2.at(i));
}

TEST_CASE("straight-through passes the gradient unchanged") {
  Rng rng(9);
  auto z = uniform_tensor({3, 2}, rng);
  auto q = uniform_tensor({3, 2}, rng).detach();
  auto st = straight_through(z, q);
  for (std::size_t i = 0; i < q.size(); ++i) CHECK(st.at(i) == q.at(i));
  auto r = uniform_tensor({3, 2}, rng).detach();
  tokencast::testing::project(st, r).backward();
  for (std::size_t i = 0; i < z.size(); ++i) CHECK(z.grad()[i] == r.at(i));
}

TEST_CASE("entropy handles zero probabilities") {
  auto p = Tensor::from({3}, {1.0, 0.0, 0.0});
  CHECK(entropy(p).item() == 0.0);
  auto u = Tensor::full({4}, 0.25);
  CHECK(entropy(u).item() == doctest::Approx(std::log(4.0)));
}
