// Copyright 2026 PhaseForge Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "phaseforge/phase_ops.hpp"

#include <cmath>

namespace phaseforge {

double anti_wrap(double x) {
  return std::abs(x - kTwoPi * std::round(x / kTwoPi));
}

Tensor anti_wrap(const Tensor& x) {
  Tensor k = round_detached(mul(x, 1.0 / kTwoPi));
  return abs(sub(x, mul(k, kTwoPi)));
}

Tensor shift_cl(const Tensor& x) { return shift2d(x, 0, 1); }
Tensor shift_cr(const Tensor& x) { return shift2d(x, 0, -1); }
Tensor shift_ru(const Tensor& x) { return shift2d(x, 1, 0); }

Tensor diff_tfidd(const Tensor& x) { return sub(x, shift2d(x, 1, 1)); }
Tensor diff_tfrdd(const Tensor& x) { return sub(x, shift2d(x, 1, -1)); }

Tensor diff_freq(const Tensor& x) { return sub(x, shift_cr(x)); }
Tensor diff_time(const Tensor& x) { return sub(x, shift2d(x, -1, 0)); }

}  // namespace phaseforge
