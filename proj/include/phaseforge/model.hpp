// Copyright 2026 PhaseForge Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <string>
#include <vector>

#include "phaseforge/spectral.hpp"
#include "phaseforge/tensor.hpp"

namespace phaseforge {

struct BackboneConfig {
  int n_blocks = 8;
  int channels = 256;
  int block_hidden = 512;
  int kernel = 7;        // all 1D convolutions, including the PEA pair
  int bins = 513;        // = N of the analysis config in use
  bool conditioned = false;  // refinement models take [A ; prior] as input

  void validate() const;
  bool operator==(const BackboneConfig&) const = default;
};

/// One stage of the phase predictor: stem conv -> LN -> ConvNeXt v2 stack ->
/// LN -> linear -> PEA. Input and output are [F, N]; the time axis is the
/// convolution axis and frequency bins act as channels at the stem and head.
class PhaseModel {
 public:
  PhaseModel() = default;
  PhaseModel(const BackboneConfig& cfg, uint64_t init_seed);

  const BackboneConfig& config() const { return cfg_; }

  /// Prior mode: predicts a wrapped phase spectrum from log amplitude alone.
  Tensor forward(const Tensor& log_amp) const;
  /// Conditioned mode: the stem consumes [log_amp ; prior_phase] as 2N channels.
  Tensor forward(const Tensor& log_amp, const Tensor& prior_phase) const;

  /// Parallel estimation head: two parallel conv1d projections interpreted as
  /// pseudo real/imaginary parts, combined by atan2 into wrapped phase.
  Tensor pea_forward(const Tensor& features) const;

  std::vector<Param>& params() { return params_; }
  const std::vector<Param>& params() const { return params_; }
  int64_t param_count() const;

 private:
  Tensor backbone(const Tensor& input) const;
  const Tensor& p(const std::string& name) const;

  BackboneConfig cfg_;
  std::vector<Param> params_;
};

/// Iterative prediction: k = 0 returns the prior output; each further step
/// feeds the previous phase back into the next refinement model.
Tensor iterate(const Tensor& log_amp, const PhaseModel& prior,
               const std::vector<const PhaseModel*>& refiners, int k);

struct PsdConfig {
  int channels = 64;
  double lrelu_slope = 0.1;

  bool operator==(const PsdConfig&) const = default;
};

struct PsdOut {
  Tensor score;                // [1, H', W'] discriminative map
  std::vector<Tensor> feats;   // the five post-activation intermediates
};

/// Phase spectrum discriminator: five strided 2D convolutions interleaved
/// with LReLU, then a 1-channel output convolution. Kernels 7x5, 5x3, 5x3,
/// 3x3, 3x3; strides (2,2) for the first three layers and (1,1) after.
class Psd {
 public:
  Psd() = default;
  Psd(const PsdConfig& cfg, uint64_t init_seed);

  const PsdConfig& config() const { return cfg_; }

  /// `phase` is an [F, N] map (any real matrix is accepted).
  PsdOut forward(const Tensor& phase) const;

  std::vector<Param>& params() { return params_; }
  const std::vector<Param>& params() const { return params_; }
  int64_t param_count() const;

  /// Expected score-map spatial dims for an [F, N] input.
  static std::pair<int64_t, int64_t> score_dims(int64_t frames, int64_t bins);

 private:
  const Tensor& p(const std::string& name) const;

  PsdConfig cfg_;
  std::vector<Param> params_;
};

// ---- persistence ----

/// Model parameters in the PFCKPT container, with backbone and analysis
/// configuration embedded as meta entries so a checkpoint is self-describing.
void save_model(const std::string& path, const PhaseModel& model, const AnalysisConfig& acfg);
PhaseModel load_model(const std::string& path, AnalysisConfig* acfg = nullptr);

/// Flat key=value text form of the backbone configuration.
void write_model_config(const std::string& path, const BackboneConfig& cfg);
BackboneConfig read_model_config(const std::string& path);

}  // namespace phaseforge
