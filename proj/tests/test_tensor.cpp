// Copyright 2026 PhaseForge Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <doctest.h>

#include <cmath>

#include "phaseforge/common.hpp"
#include "phaseforge/tensor.hpp"
#include "test_support.hpp"

using namespace phaseforge;
using pftest::gradcheck;
using pftest::random_tensor;

TEST_CASE("tensor basics") {
  Tensor t = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.numel() == 6);
  CHECK(t.at(1, 2) == 6.0);
  CHECK(Tensor::scalar(2.5).item() == 2.5);
  CHECK_THROWS_AS(Tensor::from({2, 2}, {1, 2, 3}), ShapeError);
  CHECK_THROWS_AS((void)t.item(), ShapeError);
}

TEST_CASE("atan2 principal values") {
  Tensor y = Tensor::from({4}, {0.0, 1.0, 0.0, -1.0});
  Tensor x = Tensor::from({4}, {1.0, 0.0, -1.0, 0.0});
  Tensor p = phaseforge::atan2(y, x);
  CHECK(p.data()[0] == 0.0);
  CHECK(p.data()[1] == doctest::Approx(kPi / 2));
  CHECK(p.data()[2] == doctest::Approx(kPi));
  CHECK(p.data()[3] == doctest::Approx(-kPi / 2));
  // zero vector maps to 0; the -pi edge folds onto +pi
  Tensor z = phaseforge::atan2(Tensor::from({2}, {0.0, -0.0}),
                               Tensor::from({2}, {0.0, -1.0}));
  CHECK(z.data()[0] == 0.0);
  CHECK(z.data()[1] == doctest::Approx(kPi));
}

TEST_CASE("backward contract") {
  Tensor x = Tensor::from({3}, {1, 2, 3}, true);
  SUBCASE("sum gradient is ones") {
    Tensor s = sum(x);
    backward(s);
    for (int i = 0; i < 3; ++i) CHECK(x.grad()[size_t(i)] == 1.0);
    // repeated backward accumulates
    backward(s);
    CHECK(x.grad()[0] == 2.0);
  }
  SUBCASE("non-scalar loss rejected") {
    Tensor y = mul(x, 2.0);
    CHECK_THROWS_AS(backward(y), std::invalid_argument);
  }
  SUBCASE("no-graph loss rejected") {
    Tensor c = Tensor::scalar(1.0);
    CHECK_THROWS_AS(backward(c), StateError);
  }
  SUBCASE("unused leaf keeps zero grad") {
    Tensor u = Tensor::from({2}, {1, 1}, true);
    u.impl()->grad_ptr();
    backward(sum(x));
    CHECK(u.grad()[0] == 0.0);
  }
  SUBCASE("detach blocks gradient flow") {
    Tensor d = detach(mul(x, 3.0));
    CHECK_FALSE(d.requires_grad());
  }
}

TEST_CASE("round_detached is constant in the backward pass") {
  Tensor x = Tensor::from({3}, {0.3, 2.0 * kPi + 0.4, -7.0}, true);
  // f_AW-style composite: |x - 2*pi*round(x/2*pi)| has gradient sign(residual)
  Tensor k = round_detached(mul(x, 1.0 / kTwoPi));
  Tensor res = sub(x, mul(k, kTwoPi));
  Tensor loss = sum(abs(res));
  backward(loss);
  CHECK(x.grad()[0] == 1.0);   // residual +0.3
  CHECK(x.grad()[1] == 1.0);   // residual +0.4
  CHECK(x.grad()[2] == -1.0);  // -7 + 2*pi = -0.717
}

TEST_CASE("gradcheck: elementwise and reductions") {
  Rng rng(42);
  auto check_unary = [&](const std::function<Tensor(const Tensor&)>& op, double scale,
                         double offset) {
    Tensor x = random_tensor({3, 4}, rng, scale);
    if (offset != 0.0)
      for (int64_t i = 0; i < x.numel(); ++i) x.data()[i] = std::abs(x.data()[i]) + offset;
    double err = gradcheck([&]() { return sum(op(x)); }, {x});
    CHECK(err < 1e-4);
  };
  check_unary([](const Tensor& t) { return exp(t); }, 0.5, 0.0);
  check_unary([](const Tensor& t) { return log(t); }, 1.0, 0.5);
  check_unary([](const Tensor& t) { return gelu(t); }, 1.0, 0.0);
  check_unary([](const Tensor& t) { return leaky_relu(t, 0.1); }, 1.0, 0.3);
  check_unary([](const Tensor& t) { return mul(t, -2.5); }, 1.0, 0.0);
  check_unary([](const Tensor& t) { return add(t, 1.5); }, 1.0, 0.0);
  check_unary([](const Tensor& t) { return mean(t); }, 1.0, 0.0);
  check_unary([](const Tensor& t) { return abs(t); }, 1.0, 0.4);

  Tensor a = random_tensor({3, 4}, rng), b = random_tensor({3, 4}, rng);
  CHECK(gradcheck([&]() { return sum(mul(a, b)); }, {a, b}) < 1e-4);
  CHECK(gradcheck([&]() { return sum(sub(a, b)); }, {a, b}) < 1e-4);
  CHECK(gradcheck([&]() { return mean(add(a, b)); }, {a, b}) < 1e-4);
  CHECK(gradcheck([&]() { return l1(add(a, Tensor::full({3, 4}, 3.0))); }, {a}) < 1e-4);
  CHECK(gradcheck([&]() { return sum(l2_norm(a, 0)); }, {a}) < 1e-4);
  CHECK(gradcheck([&]() { return sum(l2_norm(a, 1)); }, {a}) < 1e-4);
  CHECK(gradcheck([&]() { return sum(concat(a, b, 1)); }, {a, b}) < 1e-4);
  CHECK(gradcheck([&]() { return sum(shift2d(a, 1, -1)); }, {a}) < 1e-4);
  CHECK(gradcheck([&]() { return sum(reshape(a, {4, 3})); }, {a}) < 1e-4);

  // atan2 away from the origin
  Tensor ay = random_tensor({3, 3}, rng), ax = random_tensor({3, 3}, rng);
  for (int64_t i = 0; i < ay.numel(); ++i) {
    ay.data()[i] += ay.data()[i] >= 0 ? 0.5 : -0.5;
    ax.data()[i] += ax.data()[i] >= 0 ? 0.5 : -0.5;
  }
  CHECK(gradcheck([&]() { return sum(phaseforge::atan2(ay, ax)); }, {ay, ax}) < 1e-4);
}

TEST_CASE("gradcheck: linear algebra and layers") {
  Rng rng(7);
  SUBCASE("matmul") {
    Tensor a = random_tensor({4, 3}, rng), b = random_tensor({3, 5}, rng);
    CHECK(gradcheck([&]() { return sum(matmul(a, b)); }, {a, b}) < 1e-4);
  }
  SUBCASE("linear") {
    Tensor x = random_tensor({5, 3}, rng), w = random_tensor({3, 4}, rng);
    Tensor b = random_tensor({4}, rng);
    CHECK(gradcheck([&]() { return sum(mul(linear(x, w, b), linear(x, w, b))); },
                    {x, w, b}) < 1e-4);
  }
  SUBCASE("conv1d dense") {
    Tensor x = random_tensor({6, 3}, rng), w = random_tensor({4, 3, 5}, rng);
    Tensor b = random_tensor({4}, rng);
    CHECK(gradcheck([&]() { return sum(mul(conv1d(x, w, b), conv1d(x, w, b))); },
                    {x, w, b}) < 1e-4);
  }
  SUBCASE("conv1d depthwise") {
    Tensor x = random_tensor({6, 4}, rng), w = random_tensor({4, 1, 3}, rng);
    Tensor b = random_tensor({4}, rng);
    CHECK(gradcheck([&]() { return sum(mul(conv1d(x, w, b, 4), conv1d(x, w, b, 4))); },
                    {x, w, b}) < 1e-4);
  }
  SUBCASE("conv1d grouped") {
    Tensor x = random_tensor({5, 4}, rng), w = random_tensor({6, 2, 3}, rng);
    Tensor b = random_tensor({6}, rng);
    CHECK(gradcheck([&]() { return sum(mul(conv1d(x, w, b, 2), conv1d(x, w, b, 2))); },
                    {x, w, b}) < 1e-4);
  }
  SUBCASE("conv2d stride 1") {
    Tensor x = random_tensor({2, 5, 6}, rng), w = random_tensor({3, 2, 3, 3}, rng);
    Tensor b = random_tensor({3}, rng);
    CHECK(gradcheck([&]() { return sum(mul(conv2d(x, w, b, 1, 1, 1, 1),
                                           conv2d(x, w, b, 1, 1, 1, 1))); },
                    {x, w, b}) < 1e-4);
  }
  SUBCASE("conv2d strided") {
    Tensor x = random_tensor({1, 7, 9}, rng), w = random_tensor({2, 1, 5, 3}, rng);
    Tensor b = random_tensor({2}, rng);
    CHECK(gradcheck([&]() { return sum(mul(conv2d(x, w, b, 2, 2, 2, 1),
                                           conv2d(x, w, b, 2, 2, 2, 1))); },
                    {x, w, b}) < 1e-4);
  }
  SUBCASE("layer_norm") {
    Tensor x = random_tensor({4, 6}, rng), g = random_tensor({6}, rng);
    Tensor b = random_tensor({6}, rng);
    CHECK(gradcheck([&]() { return sum(mul(layer_norm(x, g, b, 1e-6),
                                           layer_norm(x, g, b, 1e-6))); },
                    {x, g, b}) < 1e-4);
  }
  SUBCASE("grn") {
    Tensor x = random_tensor({5, 4}, rng), g = random_tensor({4}, rng);
    Tensor b = random_tensor({4}, rng);
    CHECK(gradcheck([&]() { return sum(mul(grn(x, g, b, 1e-6), grn(x, g, b, 1e-6))); },
                    {x, g, b}) < 1e-4);
  }
}

TEST_CASE("grn identity cases") {
  // all channels equal -> every per-channel norm equals the mean, n = 1
  Tensor x = Tensor::from({3, 4}, {1, 1, 1, 1, 2, 2, 2, 2, -1, -1, -1, -1});
  Tensor g = Tensor::full({4}, 0.7), b = Tensor::full({4}, 0.2);
  Tensor y = grn(x, g, b, 0.0);
  for (int64_t i = 0; i < y.numel(); ++i)
    CHECK(y.data()[i] == doctest::Approx(0.7 * x.data()[i] + 0.2 + x.data()[i]));
  // zero gamma/beta (the init state) is an exact identity
  Tensor y0 = grn(x, Tensor::zeros({4}), Tensor::zeros({4}), 1e-6);
  for (int64_t i = 0; i < y0.numel(); ++i) CHECK(y0.data()[i] == x.data()[i]);
}

TEST_CASE("shape errors") {
  Tensor a = Tensor::zeros({2, 3}), b = Tensor::zeros({3, 2});
  CHECK_THROWS_AS(add(a, b), ShapeError);
  CHECK_THROWS_AS(matmul(a, a), ShapeError);
  CHECK_THROWS_AS(conv1d(a, Tensor::zeros({2, 3, 4}), Tensor::zeros({2})), ShapeError);
  CHECK_THROWS_AS(layer_norm(a, Tensor::zeros({2}), Tensor::zeros({3}), 1e-6), ShapeError);
  CHECK_THROWS_AS(reshape(a, {5}), ShapeError);
  CHECK_THROWS_AS(concat(a, b, 0), ShapeError);
}

TEST_CASE("adamw") {
  SUBCASE("zero gradient and zero weight decay leave params unchanged") {
    std::vector<Param> params{{"p", Tensor::from({2}, {1.0, -2.0}, true)}};
    params[0].tensor.impl()->grad_ptr();
    AdamW opt(0.8, 0.99, 1e-8, 0.0);
    opt.step(params, 0.1);
    CHECK(params[0].tensor.data()[0] == 1.0);
    CHECK(params[0].tensor.data()[1] == -2.0);
  }
  SUBCASE("positive gradient decreases the parameter") {
    std::vector<Param> params{{"p", Tensor::from({1}, {1.0}, true)}};
    params[0].tensor.impl()->grad_ptr()[0] = 1.0;
    AdamW opt(0.8, 0.99, 1e-8, 0.0);
    opt.step(params, 0.1);
    CHECK(params[0].tensor.data()[0] < 1.0);
  }
  SUBCASE("two-step scalar trace matches the hand-computed update") {
    // Constant gradient 1 on p0 = 1 with lr 0.1 and no decay: the
    // bias-corrected ratio is exactly 1 both steps, so each update is
    // lr / (1 + eps).
    double lr = 0.1, b1 = 0.8, b2 = 0.99, eps = 1e-8;
    double p = 1.0, m = 0.0, v = 0.0;
    for (int t = 1; t <= 2; ++t) {
      m = b1 * m + (1 - b1) * 1.0;
      v = b2 * v + (1 - b2) * 1.0;
      double mhat = m / (1 - std::pow(b1, t));
      double vhat = v / (1 - std::pow(b2, t));
      p -= lr * mhat / (std::sqrt(vhat) + eps);
    }
    CHECK(p == doctest::Approx(1.0 - 2.0 * lr / (1.0 + eps)).epsilon(1e-12));

    std::vector<Param> params{{"p", Tensor::from({1}, {1.0}, true)}};
    params[0].tensor.impl()->grad_ptr()[0] = 1.0;
    AdamW opt(b1, b2, eps, 0.0);
    opt.step(params, lr);
    params[0].tensor.zero_grad();
    params[0].tensor.impl()->grad_ptr()[0] = 1.0;
    opt.step(params, lr);
    CHECK(params[0].tensor.data()[0] == doctest::Approx(p).epsilon(1e-14));
  }
  SUBCASE("decoupled weight decay applies before the adaptive step") {
    std::vector<Param> params{{"p", Tensor::from({1}, {2.0}, true)}};
    params[0].tensor.impl()->grad_ptr();  // zero gradient
    AdamW opt(0.8, 0.99, 1e-8, 0.5);
    opt.step(params, 0.1);
    CHECK(params[0].tensor.data()[0] == doctest::Approx(2.0 * (1.0 - 0.1 * 0.5)));
  }
}

TEST_CASE("determinism of graph construction and backward") {
  auto run = [](uint64_t seed) {
    Rng rng(seed);
    Tensor x = random_tensor({4, 4}, rng);
    Tensor w = random_tensor({4, 4}, rng);
    Tensor loss = sum(mul(gelu(matmul(x, w)), gelu(matmul(x, w))));
    backward(loss);
    return std::make_pair(loss.item(), x.grad());
  };
  auto [l1v, g1] = run(3);
  auto [l2v, g2] = run(3);
  CHECK(l1v == l2v);
  CHECK(g1 == g2);
}
