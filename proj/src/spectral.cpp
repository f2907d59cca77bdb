// Copyright 2026 PhaseForge Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "phaseforge/spectral.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>

namespace phaseforge {

namespace {

struct FftPlans {
  fftw_plan r2c = nullptr;
  fftw_plan c2r = nullptr;
};

// Shared per-size plans; execution goes through the new-array interface on
// caller-owned buffers (plans are created FFTW_UNALIGNED so that is legal).
FftPlans& plans_for(int n) {
  static std::map<int, FftPlans> cache;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  std::vector<double> re(size_t(n), 0.0);
  std::vector<std::complex<double>> cx(size_t(n / 2 + 1), std::complex<double>());
  FftPlans p;
  p.r2c = fftw_plan_dft_r2c_1d(n, re.data(),
                               reinterpret_cast<fftw_complex*>(cx.data()),
                               FFTW_ESTIMATE | FFTW_UNALIGNED);
  p.c2r = fftw_plan_dft_c2r_1d(n, reinterpret_cast<fftw_complex*>(cx.data()),
                               re.data(), FFTW_ESTIMATE | FFTW_UNALIGNED);
  return cache.emplace(n, p).first->second;
}

void rfft(int n, double* in, std::complex<double>* out) {
  fftw_execute_dft_r2c(plans_for(n).r2c, in,
                       reinterpret_cast<fftw_complex*>(out));
}

// Unnormalized inverse; caller divides by n. Scratch is clobbered.
void irfft(int n, std::complex<double>* scratch, double* out) {
  fftw_execute_dft_c2r(plans_for(n).c2r,
                       reinterpret_cast<fftw_complex*>(scratch), out);
}

// Reflect (mirror without edge repeat) of padded coordinate into [0, len).
inline int64_t reflect_index(int64_t u, int64_t len) {
  if (u < 0) u = -u;
  if (u >= len) u = 2 * len - 2 - u;
  return u;
}

std::vector<double> padded_signal(const std::vector<double>& x, int64_t m) {
  int64_t t = int64_t(x.size());
  std::vector<double> pad(size_t(t + 2 * m), 0.0);
  for (int64_t i = 0; i < t + 2 * m; ++i)
    pad[size_t(i)] = x[size_t(reflect_index(i - m, t))];
  return pad;
}

uint32_t rd_u32(const unsigned char* p) {
  return uint32_t(p[0]) | uint32_t(p[1]) << 8 | uint32_t(p[2]) << 16 | uint32_t(p[3]) << 24;
}
uint16_t rd_u16(const unsigned char* p) { return uint16_t(p[0]) | uint16_t(p[1]) << 8; }

}  // namespace

void AnalysisConfig::validate() const {
  if (sample_rate <= 0) throw ConfigError("sample_rate must be positive");
  if (win_len <= 0 || hop_len <= 0 || fft_size <= 0)
    throw ConfigError("window/hop/fft must be positive");
  if (hop_len > win_len || win_len > fft_size)
    throw ConfigError("need hop_len <= win_len <= fft_size");
  if (win_len % hop_len != 0 || win_len / hop_len < 2)
    throw ConfigError("hop must divide win_len with win/hop >= 2");
  if ((fft_size & (fft_size - 1)) != 0) throw ConfigError("fft_size must be a power of two");
}

double wrap_phase(double x) {
  double r = x - kTwoPi * std::ceil((x - kPi) / kTwoPi);
  if (r > kPi) r -= kTwoPi;
  if (r <= -kPi) r += kTwoPi;
  return r;
}

std::vector<double> hann_window(int len) {
  std::vector<double> w(size_t(len), 0.0);
  for (int k = 0; k < len; ++k)
    w[size_t(k)] = 0.5 - 0.5 * std::cos(kTwoPi * double(k) / double(len));
  return w;
}

ComplexMatrix stft_complex(const Waveform& x, const AnalysisConfig& cfg) {
  cfg.validate();
  int64_t t = x.size();
  if (t < cfg.win_len)
    throw std::length_error("stft: signal (" + std::to_string(t) +
                            " samples) shorter than one window (" +
                            std::to_string(cfg.win_len) + ")");
  int64_t win = cfg.win_len, hop = cfg.hop_len, nfft = cfg.fft_size;
  int64_t m = win / 2;
  std::vector<double> pad = padded_signal(x.samples, m);
  int64_t frames = 1 + (int64_t(pad.size()) - win) / hop;
  int64_t bins = nfft / 2 + 1;
  std::vector<double> window = hann_window(int(win));

  ComplexMatrix out = ComplexMatrix::zeros(frames, bins);
  std::vector<double> buf(size_t(nfft), 0.0);
  for (int64_t f = 0; f < frames; ++f) {
    const double* seg = pad.data() + f * hop;
    for (int64_t j = 0; j < win; ++j) buf[size_t(j)] = window[size_t(j)] * seg[j];
    std::fill(buf.begin() + win, buf.end(), 0.0);
    rfft(int(nfft), buf.data(), &out.at(f, 0));
  }
  return out;
}

Waveform istft_complex(const ComplexMatrix& c, const AnalysisConfig& cfg, int64_t length) {
  cfg.validate();
  if (c.bins != cfg.fft_size / 2 + 1)
    throw ShapeError("istft: bins do not match fft_size/2+1");
  int64_t win = cfg.win_len, hop = cfg.hop_len, nfft = cfg.fft_size;
  int64_t m = win / 2;
  int64_t frames = c.frames;
  int64_t padded = win + (frames - 1) * hop;
  int64_t t_out = length > 0 ? length : padded - win;
  if (t_out <= 0) throw ShapeError("istft: no output samples");
  std::vector<double> window = hann_window(int(win));

  std::vector<double> num(size_t(padded), 0.0), den(size_t(padded), 0.0);
  std::vector<std::complex<double>> scratch(size_t(c.bins), std::complex<double>());
  std::vector<double> frame(size_t(nfft), 0.0);
  for (int64_t f = 0; f < frames; ++f) {
    std::copy_n(&c.at(f, 0), c.bins, scratch.data());
    irfft(int(nfft), scratch.data(), frame.data());
    double* nrow = num.data() + f * hop;
    double* drow = den.data() + f * hop;
    for (int64_t j = 0; j < win; ++j) {
      double w = window[size_t(j)];
      nrow[j] += w * frame[size_t(j)] / double(nfft);
      drow[j] += w * w;
    }
  }

  // Fold the padded accumulators back across the reflection boundaries so the
  // synthesis stays the exact least-squares inverse of the centered analysis.
  std::vector<double> fnum(size_t(t_out), 0.0), fden(size_t(t_out), 0.0);
  for (int64_t i = 0; i < padded; ++i) {
    int64_t u = reflect_index(i - m, t_out);
    if (u < 0 || u >= t_out) continue;
    fnum[size_t(u)] += num[size_t(i)];
    fden[size_t(u)] += den[size_t(i)];
  }

  Waveform out;
  out.sample_rate = cfg.sample_rate;
  out.samples.resize(size_t(t_out));
  for (int64_t u = 0; u < t_out; ++u) {
    if (fden[size_t(u)] == 0.0)
      throw ConfigError("istft: zero overlap-add denominator at sample " + std::to_string(u));
    out.samples[size_t(u)] = fnum[size_t(u)] / std::max(fden[size_t(u)], 1e-12);
  }
  return out;
}

Spectrum stft(const Waveform& x, const AnalysisConfig& cfg) {
  ComplexMatrix c = stft_complex(x, cfg);
  Spectrum s = spectrum_from(c, cfg);
  s.num_samples = x.size();
  return s;
}

Waveform istft(const Spectrum& s, int64_t length) {
  ComplexMatrix c = complex_from(s);
  return istft_complex(c, s.config, length > 0 ? length : s.num_samples);
}

ComplexMatrix complex_from(const Spectrum& s) {
  if (s.log_amp.rank() != 2 || s.log_amp.shape() != s.phase.shape())
    throw ShapeError("complex_from: log_amp/phase must be matching rank-2 matrices");
  ComplexMatrix c = ComplexMatrix::zeros(s.frames(), s.bins());
  const double* la = s.log_amp.data();
  const double* ph = s.phase.data();
  for (size_t i = 0; i < c.v.size(); ++i) {
    double a = std::exp(la[i]);
    c.v[i] = std::complex<double>(a * std::cos(ph[i]), a * std::sin(ph[i]));
  }
  return c;
}

Spectrum spectrum_from(const ComplexMatrix& c, const AnalysisConfig& cfg) {
  Spectrum s;
  s.config = cfg;
  s.log_amp = Tensor::zeros({c.frames, c.bins});
  s.phase = Tensor::zeros({c.frames, c.bins});
  double* la = s.log_amp.data();
  double* ph = s.phase.data();
  for (size_t i = 0; i < c.v.size(); ++i) {
    double a = std::abs(c.v[i]);
    la[i] = std::log(std::max(a, kAmpFloor));
    if (a == 0.0) {
      ph[i] = 0.0;
    } else {
      double p = std::arg(c.v[i]);
      ph[i] = p <= -kPi ? kPi : p;
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// WAV

Waveform read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw FormatError(path + ": not a RIFF/WAVE file");

  bool have_fmt = false;
  uint16_t audio_format = 0, channels = 0, bits = 0;
  uint32_t sample_rate = 0;
  const unsigned char* data = nullptr;
  uint32_t data_size = 0;

  size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* hdr = bytes.data() + pos;
    uint32_t size = rd_u32(hdr + 4);
    size_t body = pos + 8;
    if (body + size > bytes.size()) throw FormatError(path + ": truncated chunk");
    if (std::memcmp(hdr, "fmt ", 4) == 0) {
      if (size < 16) throw FormatError(path + ": short fmt chunk");
      audio_format = rd_u16(bytes.data() + body);
      channels = rd_u16(bytes.data() + body + 2);
      sample_rate = rd_u32(bytes.data() + body + 4);
      bits = rd_u16(bytes.data() + body + 14);
      have_fmt = true;
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      data = bytes.data() + body;
      data_size = size;
    }
    pos = body + size + (size & 1);  // chunks are word-aligned
  }
  if (!have_fmt || data == nullptr) throw FormatError(path + ": missing fmt or data chunk");
  if (audio_format != 1) throw FormatError(path + ": only PCM supported");
  if (channels != 1) throw FormatError(path + ": only mono supported");
  if (bits != 16) throw FormatError(path + ": only 16-bit PCM supported, got " + std::to_string(bits));

  Waveform w;
  w.sample_rate = int(sample_rate);
  size_t n = data_size / 2;
  w.samples.resize(n);
  for (size_t i = 0; i < n; ++i) {
    int16_t s = int16_t(uint16_t(data[2 * i]) | uint16_t(data[2 * i + 1]) << 8);
    w.samples[i] = double(s) / 32768.0;
  }
  return w;
}

void write_wav(const std::string& path, const Waveform& w) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path);
  auto u32 = [&](uint32_t v) {
    unsigned char b[4] = {(unsigned char)(v), (unsigned char)(v >> 8),
                          (unsigned char)(v >> 16), (unsigned char)(v >> 24)};
    out.write(reinterpret_cast<char*>(b), 4);
  };
  auto u16 = [&](uint16_t v) {
    unsigned char b[2] = {(unsigned char)(v), (unsigned char)(v >> 8)};
    out.write(reinterpret_cast<char*>(b), 2);
  };
  uint32_t data_size = uint32_t(w.samples.size() * 2);
  out.write("RIFF", 4);
  u32(36 + data_size);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  u32(16);
  u16(1);  // PCM
  u16(1);  // mono
  u32(uint32_t(w.sample_rate));
  u32(uint32_t(w.sample_rate) * 2);
  u16(2);
  u16(16);
  out.write("data", 4);
  u32(data_size);
  for (double x : w.samples) {
    double v = std::round(std::clamp(x, -1.0, 1.0) * 32768.0);
    int16_t s = int16_t(std::clamp(v, -32768.0, 32767.0));
    unsigned char b[2] = {(unsigned char)(uint16_t(s)), (unsigned char)(uint16_t(s) >> 8)};
    out.write(reinterpret_cast<char*>(b), 2);
  }
}

// ---------------------------------------------------------------------------
// PFSPEC

void write_pfspec(const std::string& path, const Spectrum& s) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path);
  out << "PFSPEC v1 " << s.frames() << " " << s.bins() << " "
      << s.config.sample_rate << " " << s.config.win_len << " "
      << s.config.hop_len << " " << s.config.fft_size << "\n";
  out.write(reinterpret_cast<const char*>(s.log_amp.data()),
            std::streamsize(s.log_amp.numel() * sizeof(double)));
  out.write(reinterpret_cast<const char*>(s.phase.data()),
            std::streamsize(s.phase.numel() * sizeof(double)));
}

Spectrum read_pfspec(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  std::string header;
  if (!std::getline(in, header)) throw FormatError(path + ": missing header");
  std::istringstream hs(header);
  std::string magic, version;
  int64_t frames = 0, bins = 0;
  AnalysisConfig cfg;
  hs >> magic >> version >> frames >> bins >> cfg.sample_rate >> cfg.win_len >>
      cfg.hop_len >> cfg.fft_size;
  if (!hs || magic != "PFSPEC" || version != "v1")
    throw FormatError(path + ": bad PFSPEC header");
  if (frames <= 0 || bins != cfg.fft_size / 2 + 1)
    throw FormatError(path + ": inconsistent header dimensions");
  Spectrum s;
  s.config = cfg;
  s.log_amp = Tensor::zeros({frames, bins});
  s.phase = Tensor::zeros({frames, bins});
  in.read(reinterpret_cast<char*>(s.log_amp.data()),
          std::streamsize(frames * bins * sizeof(double)));
  in.read(reinterpret_cast<char*>(s.phase.data()),
          std::streamsize(frames * bins * sizeof(double)));
  if (!in) throw FormatError(path + ": truncated payload");
  return s;
}

}  // namespace phaseforge
