// Copyright 2026 PhaseForge Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <vector>

#include "phaseforge/spectral.hpp"

namespace phaseforge {

enum class IterAlgorithm { gla, raar };
enum class IterInit { zero_phase, random_phase };

struct IterConfig {
  IterAlgorithm algorithm = IterAlgorithm::gla;
  int iterations = 100;
  double raar_beta = 0.9;
  IterInit init = IterInit::zero_phase;
  uint64_t seed = 0;  // used only for random_phase

  void validate() const;
};

/// Consistency projection P_C = STFT of the least-squares ISTFT. Idempotent;
/// maps any complex matrix onto the set of spectrograms realizable by some
/// waveform.
ComplexMatrix project_consistency(const ComplexMatrix& c, const AnalysisConfig& cfg);

/// Magnitude replacement keeping arg(c); zero bins come out real positive.
/// `target` holds linear amplitudes, shape [F, N].
ComplexMatrix project_amplitude(const ComplexMatrix& c, const Tensor& target);

/// Griffin-Lim: c_{k+1} = P_A(P_C(c_k)). `target` is a linear amplitude
/// matrix. If `residuals` is given it receives ||P_C(c_k) - c_k||_F for each
/// iteration (a non-increasing sequence).
Spectrum run_gla(const Tensor& target, const AnalysisConfig& cfg, const IterConfig& it,
                 std::vector<double>* residuals = nullptr);

/// Relaxed averaged alternating reflections with reflections R = 2P - I:
/// c_{k+1} = (beta/2)(R_C R_A + I)c_k + (1-beta) P_A c_k, followed by a final
/// P_A(P_C(.)) readout.
Spectrum run_raar(const Tensor& target, const AnalysisConfig& cfg, const IterConfig& it);

}  // namespace phaseforge
