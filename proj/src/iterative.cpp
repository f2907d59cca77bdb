// Copyright 2026 PhaseForge Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "phaseforge/iterative.hpp"

#include <cmath>

namespace phaseforge {

namespace {

void check_target(const Tensor& target) {
  if (!target.defined() || target.rank() != 2)
    throw ShapeError("iterative: amplitude target must be a rank-2 matrix");
}

ComplexMatrix init_estimate(const Tensor& target, const IterConfig& it) {
  ComplexMatrix c = ComplexMatrix::zeros(target.dim(0), target.dim(1));
  const double* a = target.data();
  if (it.init == IterInit::zero_phase) {
    for (size_t i = 0; i < c.v.size(); ++i) c.v[i] = a[i];
  } else {
    Rng rng(it.seed);
    for (size_t i = 0; i < c.v.size(); ++i) {
      double p = wrap_phase(rng.uniform(-kPi, kPi));
      c.v[i] = std::polar(a[i], p);
    }
  }
  return c;
}

double residual_norm(const ComplexMatrix& a, const ComplexMatrix& b) {
  double acc = 0.0;
  for (size_t i = 0; i < a.v.size(); ++i) acc += std::norm(a.v[i] - b.v[i]);
  return std::sqrt(acc);
}

}  // namespace

void IterConfig::validate() const {
  if (iterations < 0) throw ConfigError("iterations must be >= 0");
  if (raar_beta <= 0.0 || raar_beta > 1.0) throw ConfigError("raar_beta must be in (0, 1]");
}

ComplexMatrix project_consistency(const ComplexMatrix& c, const AnalysisConfig& cfg) {
  Waveform x = istft_complex(c, cfg);
  return stft_complex(x, cfg);
}

ComplexMatrix project_amplitude(const ComplexMatrix& c, const Tensor& target) {
  check_target(target);
  if (c.frames != target.dim(0) || c.bins != target.dim(1))
    throw ShapeError("project_amplitude: shape mismatch");
  ComplexMatrix out = ComplexMatrix::zeros(c.frames, c.bins);
  const double* a = target.data();
  for (size_t i = 0; i < c.v.size(); ++i) {
    double mag = std::abs(c.v[i]);
    out.v[i] = mag > 0.0 ? c.v[i] * (a[i] / mag) : std::complex<double>(a[i], 0.0);
  }
  return out;
}

Spectrum run_gla(const Tensor& target, const AnalysisConfig& cfg, const IterConfig& it,
                 std::vector<double>* residuals) {
  check_target(target);
  it.validate();
  if (residuals) residuals->clear();
  ComplexMatrix c = init_estimate(target, it);
  for (int k = 0; k < it.iterations; ++k) {
    ComplexMatrix pc = project_consistency(c, cfg);
    if (residuals) residuals->push_back(residual_norm(pc, c));
    c = project_amplitude(pc, target);
  }
  return spectrum_from(c, cfg);
}

Spectrum run_raar(const Tensor& target, const AnalysisConfig& cfg, const IterConfig& it) {
  check_target(target);
  it.validate();
  double beta = it.raar_beta;
  ComplexMatrix c = init_estimate(target, it);
  for (int k = 0; k < it.iterations; ++k) {
    ComplexMatrix pa = project_amplitude(c, target);
    // R_A c = 2 P_A c - c
    ComplexMatrix ra = ComplexMatrix::zeros(c.frames, c.bins);
    for (size_t i = 0; i < c.v.size(); ++i) ra.v[i] = 2.0 * pa.v[i] - c.v[i];
    ComplexMatrix pcra = project_consistency(ra, cfg);
    for (size_t i = 0; i < c.v.size(); ++i) {
      std::complex<double> rcra = 2.0 * pcra.v[i] - ra.v[i];
      c.v[i] = 0.5 * beta * (rcra + c.v[i]) + (1.0 - beta) * pa.v[i];
    }
  }
  ComplexMatrix readout = project_amplitude(project_consistency(c, cfg), target);
  return spectrum_from(readout, cfg);
}

}  // namespace phaseforge
