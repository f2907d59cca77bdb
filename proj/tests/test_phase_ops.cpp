// Copyright 2026 PhaseForge Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <doctest.h>

#include <cmath>
#include <functional>

#include "phaseforge/phase_ops.hpp"
#include "test_support.hpp"

using namespace phaseforge;
using pftest::random_tensor;

namespace {

// Naive index-loop oracles, written directly against the shift definitions.
using MatFn = std::function<double(const Tensor&, int64_t, int64_t)>;

Tensor apply_oracle(const Tensor& x, const MatFn& fn) {
  Tensor out = Tensor::zeros(x.shape());
  for (int64_t f = 0; f < x.dim(0); ++f)
    for (int64_t n = 0; n < x.dim(1); ++n) out.at(f, n) = fn(x, f, n);
  return out;
}

double get0(const Tensor& x, int64_t f, int64_t n) {
  if (f < 0 || f >= x.dim(0) || n < 0 || n >= x.dim(1)) return 0.0;
  return x.at(f, n);
}

const MatFn kOracles[7] = {
    /*shift_cl*/ [](const Tensor& x, int64_t f, int64_t n) { return get0(x, f, n + 1); },
    /*shift_cr*/ [](const Tensor& x, int64_t f, int64_t n) { return get0(x, f, n - 1); },
    /*shift_ru*/ [](const Tensor& x, int64_t f, int64_t n) { return get0(x, f + 1, n); },
    /*tfidd*/
    [](const Tensor& x, int64_t f, int64_t n) { return x.at(f, n) - get0(x, f + 1, n + 1); },
    /*tfrdd*/
    [](const Tensor& x, int64_t f, int64_t n) { return x.at(f, n) - get0(x, f + 1, n - 1); },
    /*freq*/
    [](const Tensor& x, int64_t f, int64_t n) { return x.at(f, n) - get0(x, f, n - 1); },
    /*time*/
    [](const Tensor& x, int64_t f, int64_t n) { return x.at(f, n) - get0(x, f - 1, n); },
};

Tensor apply_op(int which, const Tensor& x) {
  switch (which) {
    case 0: return shift_cl(x);
    case 1: return shift_cr(x);
    case 2: return shift_ru(x);
    case 3: return diff_tfidd(x);
    case 4: return diff_tfrdd(x);
    case 5: return diff_freq(x);
    default: return diff_time(x);
  }
}

bool exactly_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  for (int64_t i = 0; i < a.numel(); ++i)
    if (a.data()[i] != b.data()[i]) return false;
  return true;
}

}  // namespace

TEST_CASE("anti_wrap values") {
  CHECK(anti_wrap(0.0) == 0.0);
  CHECK(anti_wrap(kPi) == doctest::Approx(kPi));
  CHECK(anti_wrap(1.5 * kPi) == doctest::Approx(0.5 * kPi));
  CHECK(anti_wrap(kTwoPi) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(anti_wrap(7.5 * kPi) == doctest::Approx(0.5 * kPi));
  CHECK(anti_wrap(-kPi) == doctest::Approx(kPi));
}

TEST_CASE("anti_wrap properties") {
  Rng rng(5);
  for (int i = 0; i < 100000; ++i) {
    double x = rng.uniform(-40.0, 40.0);
    double v = anti_wrap(x);
    // range, exactly
    CHECK(v >= 0.0);
    CHECK(v <= kPi);
    // symmetry, exactly
    CHECK(anti_wrap(-x) == v);
    // |x| <= pi fixed region
    double y = rng.uniform(-kPi, kPi);
    CHECK(anti_wrap(y) == std::abs(y));
    // reduced-value identity: the wrapped residual has the same image, exactly
    double r = x - kTwoPi * std::round(x / kTwoPi);
    CHECK(anti_wrap(r) == v);
    // periodicity up to floating error in x + 2*pi*k
    int k = int(rng.randint(-3, 3));
    CHECK(std::abs(anti_wrap(x + kTwoPi * k) - v) < 1e-12);
  }
}

TEST_CASE("anti_wrap tensor form matches scalar and is differentiable") {
  Rng rng(6);
  Tensor x = random_tensor({4, 5}, rng, 3.0);
  Tensor v = anti_wrap(x);
  for (int64_t i = 0; i < x.numel(); ++i) CHECK(v.data()[i] == anti_wrap(x.data()[i]));
  CHECK(pftest::gradcheck([&]() { return sum(anti_wrap(x)); }, {x}) < 1e-4);
}

TEST_CASE("shift hand values") {
  Tensor x = Tensor::from({2, 2}, {1, 2, 3, 4});
  CHECK(exactly_equal(shift_cl(x), Tensor::from({2, 2}, {2, 0, 4, 0})));
  CHECK(exactly_equal(shift_cr(x), Tensor::from({2, 2}, {0, 1, 0, 3})));
  CHECK(exactly_equal(shift_ru(x), Tensor::from({2, 2}, {3, 4, 0, 0})));
  CHECK(exactly_equal(diff_tfidd(x), Tensor::from({2, 2}, {-3, 2, 3, 4})));
  CHECK(exactly_equal(diff_tfrdd(x), Tensor::from({2, 2}, {1, -1, 3, 4})));

  Tensor col = Tensor::from({3, 1}, {1, 2, 3});
  CHECK(exactly_equal(shift_cl(col), Tensor::zeros({3, 1})));
  CHECK(exactly_equal(shift_cr(col), Tensor::zeros({3, 1})));
  Tensor row = Tensor::from({1, 3}, {1, 2, 3});
  CHECK(exactly_equal(shift_ru(row), Tensor::zeros({1, 3})));

  Tensor one = Tensor::from({1, 1}, {5});
  CHECK(exactly_equal(diff_tfidd(one), one));
  CHECK(exactly_equal(diff_tfidd(Tensor::zeros({3, 4})), Tensor::zeros({3, 4})));
  CHECK(exactly_equal(diff_tfrdd(Tensor::zeros({3, 4})), Tensor::zeros({3, 4})));
}

TEST_CASE("shift composition and adjoint identities") {
  Rng rng(8);
  Tensor x = random_tensor({5, 7}, rng, 1.0, false);
  Tensor y = random_tensor({5, 7}, rng, 1.0, false);

  // shift_cl(shift_cr(X)) = X with the last column zeroed
  Tensor lr = shift_cl(shift_cr(x));
  for (int64_t f = 0; f < 5; ++f)
    for (int64_t n = 0; n < 7; ++n)
      CHECK(lr.at(f, n) == (n == 6 ? 0.0 : x.at(f, n)));

  // <shift_cl X, Y> = <X, shift_cr Y>
  auto dot = [](const Tensor& a, const Tensor& b) {
    double acc = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) acc += a.data()[i] * b.data()[i];
    return acc;
  };
  CHECK(dot(shift_cl(x), y) == doctest::Approx(dot(x, shift_cr(y))).epsilon(1e-12));

  // row shifts commute with column shifts
  CHECK(exactly_equal(shift_ru(shift_cl(x)), shift_cl(shift_ru(x))));
  CHECK(exactly_equal(shift_ru(shift_cr(x)), shift_cr(shift_ru(x))));
}

TEST_CASE("operators equal index-loop oracles exactly") {
  Rng rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    int64_t rows = rng.randint(1, 16), cols = rng.randint(1, 33);
    Tensor x = random_tensor({rows, cols}, rng, 2.0, false);
    for (int op = 0; op < 7; ++op)
      CHECK(exactly_equal(apply_op(op, x), apply_oracle(x, kOracles[size_t(op)])));
  }
}

TEST_CASE("operators are linear (exact on integer inputs)") {
  Rng rng(10);
  Tensor x = Tensor::zeros({4, 6}), y = Tensor::zeros({4, 6});
  for (int64_t i = 0; i < x.numel(); ++i) {
    x.data()[i] = double(rng.randint(-8, 8));
    y.data()[i] = double(rng.randint(-8, 8));
  }
  for (int op = 0; op < 7; ++op) {
    Tensor lhs = apply_op(op, add(mul(x, 3.0), mul(y, -2.0)));
    Tensor rhs = add(mul(apply_op(op, x), 3.0), mul(apply_op(op, y), -2.0));
    CHECK(exactly_equal(lhs, rhs));
  }
}

TEST_CASE("difference boundary conventions") {
  // constant matrix: differences vanish except where the zero-padded shift
  // exposes the raw value
  Tensor c = Tensor::full({3, 4}, 2.5);
  Tensor gd = diff_freq(c);
  Tensor iaf = diff_time(c);
  for (int64_t f = 0; f < 3; ++f)
    for (int64_t n = 0; n < 4; ++n) {
      CHECK(gd.at(f, n) == (n == 0 ? 2.5 : 0.0));
      CHECK(iaf.at(f, n) == (f == 0 ? 2.5 : 0.0));
    }
  // ramp in n with slope s has interior frequency-difference s
  Tensor ramp = Tensor::zeros({2, 5});
  for (int64_t f = 0; f < 2; ++f)
    for (int64_t n = 0; n < 5; ++n) ramp.at(f, n) = 0.75 * double(n);
  Tensor d = diff_freq(ramp);
  for (int64_t f = 0; f < 2; ++f)
    for (int64_t n = 1; n < 5; ++n) CHECK(d.at(f, n) == doctest::Approx(0.75));
}
