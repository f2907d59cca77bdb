// Copyright 2026 PhaseForge Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <complex>
#include <string>
#include <vector>

#include "phaseforge/common.hpp"
#include "phaseforge/tensor.hpp"

namespace phaseforge {

/// Amplitudes are floored at this value before taking logs; the phase of a
/// zero bin is defined as 0.
constexpr double kAmpFloor = 1e-9;

enum class WindowKind { hann };

struct AnalysisConfig {
  int sample_rate = 16000;
  int win_len = 320;   // 20 ms at 16 kHz
  int hop_len = 80;    // 5 ms
  int fft_size = 1024; // power of two
  WindowKind window = WindowKind::hann;

  int bins() const { return fft_size / 2 + 1; }
  /// Throws ConfigError unless hop <= win <= fft, hop | win with win/hop >= 2,
  /// and fft is a power of two.
  void validate() const;

  bool operator==(const AnalysisConfig&) const = default;
};

struct Waveform {
  std::vector<double> samples;  // in [-1, 1]
  int sample_rate = 16000;

  int64_t size() const { return int64_t(samples.size()); }
};

/// Paired log-amplitude (natural log) and wrapped-phase matrices, frames x bins.
struct Spectrum {
  Tensor log_amp;  // [F, N]
  Tensor phase;    // [F, N], each value in (-pi, pi]
  AnalysisConfig config;
  int64_t num_samples = 0;  // analysis length when known, 0 otherwise

  int64_t frames() const { return log_amp.dim(0); }
  int64_t bins() const { return log_amp.dim(1); }
};

struct ComplexMatrix {
  int64_t frames = 0;
  int64_t bins = 0;
  std::vector<std::complex<double>> v;

  std::complex<double>& at(int64_t f, int64_t n) { return v[size_t(f * bins + n)]; }
  const std::complex<double>& at(int64_t f, int64_t n) const { return v[size_t(f * bins + n)]; }
  static ComplexMatrix zeros(int64_t frames, int64_t bins) {
    return ComplexMatrix{frames, bins, std::vector<std::complex<double>>(size_t(frames * bins))};
  }
};

/// Principal value in (-pi, pi].
double wrap_phase(double x);

/// Periodic Hann window of the given length.
std::vector<double> hann_window(int len);

// ---- forward / inverse transforms ----

/// Centered analysis with reflect padding of win_len/2 on both ends.
/// F = 1 + floor(T/hop). Throws if the signal is shorter than one window.
Spectrum stft(const Waveform& x, const AnalysisConfig& cfg);

/// Least-squares overlap-add synthesis (windowed frames, divided by the
/// summed squared window, reflect-folded at the edges). When `length` is 0 the
/// spectrum's stored analysis length is used, falling back to (F-1)*hop.
Waveform istft(const Spectrum& s, int64_t length = 0);

/// Complex-valued analysis/synthesis used by the iterative projections.
ComplexMatrix stft_complex(const Waveform& x, const AnalysisConfig& cfg);
Waveform istft_complex(const ComplexMatrix& c, const AnalysisConfig& cfg, int64_t length = 0);

// ---- representation changes ----

/// exp(log_amp) * e^{i phase}
ComplexMatrix complex_from(const Spectrum& s);
/// (log|c| with floor, arg(c) in (-pi, pi]); zero bins get phase 0.
Spectrum spectrum_from(const ComplexMatrix& c, const AnalysisConfig& cfg);

// ---- file formats ----

/// 16-bit signed little-endian PCM, mono. Samples normalized by 1/32768.
Waveform read_wav(const std::string& path);
void write_wav(const std::string& path, const Waveform& w);

/// "PFSPEC v1 F N sample_rate win hop fft" header line, then row-major
/// little-endian doubles: the log_amp block followed by the phase block.
void write_pfspec(const std::string& path, const Spectrum& s);
Spectrum read_pfspec(const std::string& path);

}  // namespace phaseforge
