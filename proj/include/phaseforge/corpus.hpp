// Copyright 2026 PhaseForge Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <string>
#include <vector>

#include "phaseforge/spectral.hpp"

namespace phaseforge {

enum class Split { train, valid, test };

struct CorpusEntry {
  std::string id;
  Waveform wave;
};

struct Corpus {
  std::vector<CorpusEntry> entries;
  Split split = Split::train;

  size_t size() const { return entries.size(); }
  bool empty() const { return entries.empty(); }
};

/// Loads every .wav in a directory in lexicographic filename order. All files
/// must be mono 16-bit PCM at the configured sample rate.
Corpus load_dir(const std::string& path, const AnalysisConfig& cfg);

enum class SynthKind { harmonic, chirp, noise_mix };

struct SynthSpec {
  int n_utts = 0;
  double duration_s = 0.5;
  uint64_t seed = 0;
  SynthKind kind = SynthKind::harmonic;
  int sample_rate = 16000;
};

/// Deterministic synthetic corpus. The harmonic kind is a decaying pluck of
/// 3..8 cosine-aligned harmonics with a random f0 in [80, 400] Hz, random
/// per-harmonic amplitudes and -30 dB white noise; utterances are
/// peak-normalized to 0.95.
Corpus gen_synthetic(const SynthSpec& spec);

/// Newline-separated id list.
void write_manifest(const std::string& path, const std::vector<std::string>& ids);
std::vector<std::string> read_manifest(const std::string& path);

/// Sub-corpus with the given ids (order preserved from the manifest).
Corpus select(const Corpus& corpus, const std::vector<std::string>& ids, Split split);

SynthKind parse_synth_kind(const std::string& name);

}  // namespace phaseforge
