// Copyright 2026 PhaseForge Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "phaseforge/tensor.hpp"

namespace pftest {

using phaseforge::Rng;
using phaseforge::Shape;
using phaseforge::Tensor;

inline Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0,
                            bool requires_grad = true) {
  Tensor t = Tensor::zeros(std::move(shape), requires_grad);
  for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = scale * rng.normal();
  return t;
}

/// Central-finite-difference check of d f / d inputs against the tape.
/// Returns the max relative error over all coordinates, with the comparison
/// denominator floored at 1e-8.
inline double gradcheck(const std::function<Tensor()>& f, std::vector<Tensor> inputs,
                        double h = 1e-5) {
  for (auto& t : inputs) {
    t.zero_grad();
    t.impl()->grad_ptr();  // materialize so unused leaves read as zero
  }
  Tensor loss = f();
  phaseforge::backward(loss);
  double max_rel = 0.0;
  for (auto& t : inputs) {
    for (int64_t i = 0; i < t.numel(); ++i) {
      double orig = t.data()[i];
      double fp, fm;
      {
        phaseforge::NoGradGuard ng;
        t.data()[i] = orig + h;
        fp = f().item();
        t.data()[i] = orig - h;
        fm = f().item();
      }
      t.data()[i] = orig;
      double fd = (fp - fm) / (2.0 * h);
      double an = t.grad()[size_t(i)];
      double denom = std::max({std::abs(an), std::abs(fd), 1e-8});
      max_rel = std::max(max_rel, std::abs(an - fd) / denom);
    }
  }
  return max_rel;
}

}  // namespace pftest
