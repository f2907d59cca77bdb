// Copyright 2026 PhaseForge Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <string>
#include <vector>

#include "phaseforge/model.hpp"
#include "phaseforge/phase_ops.hpp"
#include "phaseforge/spectral.hpp"

namespace phaseforge {

struct LossWeights {
  double lambda_p = 100.0;
  double lambda_psd = 0.1;
};

// Anti-wrapping losses between predicted and natural wrapped phase, mean-L1
// reduced. All are invariant to adding multiples of 2*pi to either argument.
Tensor loss_ip(const Tensor& pred, const Tensor& target);
Tensor loss_gd(const Tensor& pred, const Tensor& target);
Tensor loss_iaf(const Tensor& pred, const Tensor& target);
/// L_P = IP + GD + IAF.
Tensor loss_phase(const Tensor& pred, const Tensor& target);

// Time-frequency integrated difference losses (diagonal differences in both
// directions).
Tensor loss_tfidd(const Tensor& pred, const Tensor& target);
Tensor loss_tfrdd(const Tensor& pred, const Tensor& target);
/// L_TFID = TFIDD + TFRDD.
Tensor loss_tfid(const Tensor& pred, const Tensor& target);

// Hinge adversarial losses over PSD score maps.
Tensor loss_adv_g(const Tensor& scores_fake);
Tensor loss_adv_d(const Tensor& scores_real, const Tensor& scores_fake);

/// Sum over layers of the mean squared error between intermediate features.
Tensor loss_fm(const std::vector<Tensor>& feats_fake, const std::vector<Tensor>& feats_real);

/// lambda_P * L_P + lambda_PSD * (L_adv-G + L_FM) (+ L_TFID when with_tfid).
/// Real-side discriminator features are computed without a graph.
Tensor generator_objective(const Tensor& pred, const Tensor& target, const Psd& psd,
                           const LossWeights& weights, bool with_tfid);

// ---- evaluation metrics ----

enum class PdKind { ip, gd, iaf, tfidd, tfrdd, tfid };

/// Phase distortion: per-bin RMS over frames of the anti-wrapped error after
/// the kind's difference operator, averaged over bins; in [0, pi].
/// tfid is the mean of tfidd and tfrdd.
double pd_metric(const Tensor& pred, const Tensor& target, PdKind kind);

/// 10*log10(sum x^2 / sum (x - xhat)^2) on length-aligned waveforms, clamped
/// to [-120, 120] dB.
double snr_db(const Waveform& rec, const Waveform& ref);

/// Mean over frames of the per-frame RMS of the amplitude ratio in dB; inputs
/// are natural-log amplitude matrices, floored before use.
double lsd_db(const Tensor& rec_log_amp, const Tensor& ref_log_amp);

struct MetricReport {
  double pd_ip = 0, pd_gd = 0, pd_iaf = 0, pd_tfid = 0;
  double snr_db = 0, lsd_db = 0;
};

/// Full per-utterance report: PD metrics from the phases, SNR from the
/// waveforms, LSD from the re-analyzed reconstruction.
MetricReport compute_report(const Spectrum& ref, const Tensor& pred_phase,
                            const Waveform& ref_wave, const Waveform& rec_wave);

/// One CSV row per utterance plus an equal-weight "summary" row:
/// utt,pd_ip,pd_gd,pd_iaf,pd_tfid,snr_db,lsd_db
void write_metric_csv(const std::string& path,
                      const std::vector<std::pair<std::string, MetricReport>>& rows);

}  // namespace phaseforge
