// Copyright 2026 PhaseForge Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <functional>
#include <optional>
#include <string>

#include "phaseforge/corpus.hpp"
#include "phaseforge/criteria.hpp"
#include "phaseforge/model.hpp"

namespace phaseforge {

enum class TrainStage { prior, refine };

struct TrainConfig {
  TrainStage stage = TrainStage::prior;
  int epochs = 200;
  int batch_size = 4;
  int64_t segment_samples = 2048;
  double lr0 = 2e-4;
  double lr_decay = 0.999;
  uint64_t seed = 0;
  LossWeights weights;
  int checkpoint_every = 0;  // epochs between periodic checkpoints; 0 = final only
  int use_tfid = -1;         // -1 auto (refine stage only), else 0/1

  AnalysisConfig analysis;
  BackboneConfig backbone;  // bins is always overridden to analysis.bins()
  PsdConfig psd;

  double beta1 = 0.8, beta2 = 0.99, adam_eps = 1e-8, weight_decay = 0.01;

  bool tfid_enabled() const {
    return use_tfid < 0 ? stage == TrainStage::refine : use_tfid != 0;
  }
  void validate() const;
  /// Copy with backbone.bins/conditioned resolved from analysis and stage.
  TrainConfig resolved() const;
};

void write_train_config(const std::string& path, const TrainConfig& cfg);
TrainConfig read_train_config(const std::string& path);

struct EpochLog {
  int epoch = 0;  // 1-based
  double lr = 0;
  double loss_p = 0, loss_tfid = 0, loss_adv_g = 0, loss_fm = 0, loss_adv_d = 0;
};

/// Generator + discriminator with their optimizer moments, the epoch counter
/// and the run seed; serializable and exactly resumable (each epoch's
/// randomness is derived from (seed, epoch), so a resumed run replays the
/// remaining epochs bit-for-bit).
struct TrainState {
  TrainConfig cfg;
  PhaseModel generator;
  Psd discriminator;
  AdamW opt_g, opt_d;
  int epoch = 0;  // completed epochs
};

TrainState init_train_state(const TrainConfig& cfg);

using EpochSink = std::function<void(const EpochLog&)>;

/// Runs the remaining epochs of `state` in place. The refine stage requires a
/// frozen prior model (forwarded without gradients, parameters untouched).
/// Per step: sample segments -> (A, P) by stft -> discriminator update on the
/// hinge loss -> generator update on the combined objective. The learning
/// rate is lr0 * decay^completed_epochs. Throws StateError on non-finite
/// losses.
void train_run(TrainState& state, const Corpus& corpus, const PhaseModel* frozen_prior,
               const EpochSink& sink = nullptr);

/// init + run.
TrainState train_stage(const TrainConfig& cfg, const Corpus& corpus,
                       const PhaseModel* frozen_prior = nullptr,
                       const EpochSink& sink = nullptr);

/// Full training state in the PFCKPT container (parameters, optimizer
/// moments under .m/.v suffixes, counters and the config text).
void checkpoint(const TrainState& state, const std::string& path);
TrainState resume(const std::string& path);

/// "epoch,lr,loss_p,loss_tfid,loss_adv_g,loss_fm,loss_adv_d"
std::string epoch_csv_header();
std::string epoch_csv_line(const EpochLog& log);

}  // namespace phaseforge
