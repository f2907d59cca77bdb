// Copyright 2026 PhaseForge Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include "phaseforge/tensor.hpp"

namespace phaseforge {

/// Anti-wrapping function f(x) = |x - 2*pi*round(x/(2*pi))|, in [0, pi].
/// 2*pi-periodic and symmetric; equals |x| for |x| <= pi.
double anti_wrap(double x);

/// Tensor form; differentiable (the round term is treated as a constant, so
/// the gradient is the sign of the wrapped residual almost everywhere).
Tensor anti_wrap(const Tensor& x);

// Vector transformation operators on F x N matrices. All shifts fill the
// vacated row/column with zeros.

/// Columns shifted left: out[., n] = x[., n+1], last column zero.
Tensor shift_cl(const Tensor& x);
/// Columns shifted right: out[., n] = x[., n-1], first column zero.
Tensor shift_cr(const Tensor& x);
/// Rows shifted up: out[f, .] = x[f+1, .], last row zero.
Tensor shift_ru(const Tensor& x);

/// In-direction difference: x - shift_cl(shift_ru(x)), i.e.
/// out[f][n] = x[f][n] - x[f+1][n+1] (zero where the neighbor is absent).
Tensor diff_tfidd(const Tensor& x);
/// Reverse-direction difference: x - shift_cr(shift_ru(x)), i.e.
/// out[f][n] = x[f][n] - x[f+1][n-1].
Tensor diff_tfrdd(const Tensor& x);

/// Frequency difference (group delay direction): x - shift_cr(x); the first
/// column passes x through unchanged.
Tensor diff_freq(const Tensor& x);
/// Time difference (instantaneous angular frequency direction):
/// out[f][n] = x[f][n] - x[f-1][n]; the first row passes x through.
Tensor diff_time(const Tensor& x);

}  // namespace phaseforge
