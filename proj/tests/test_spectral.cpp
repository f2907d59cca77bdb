// Copyright 2026 PhaseForge Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <doctest.h>

#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "phaseforge/spectral.hpp"
#include "test_support.hpp"

using namespace phaseforge;

namespace {

// Independent analysis oracle: reflect-pad, frame, window, naive DFT.
ComplexMatrix dft_oracle(const Waveform& x, const AnalysisConfig& cfg) {
  int64_t t = x.size(), win = cfg.win_len, hop = cfg.hop_len, nfft = cfg.fft_size;
  int64_t m = win / 2;
  std::vector<double> pad(size_t(t + 2 * m), 0.0);
  for (int64_t i = 0; i < int64_t(pad.size()); ++i) {
    int64_t u = i - m;
    if (u < 0) u = -u;
    if (u >= t) u = 2 * t - 2 - u;
    pad[size_t(i)] = x.samples[size_t(u)];
  }
  int64_t frames = 1 + (int64_t(pad.size()) - win) / hop;
  int64_t bins = nfft / 2 + 1;
  std::vector<double> w = hann_window(int(win));
  ComplexMatrix out = ComplexMatrix::zeros(frames, bins);
  for (int64_t f = 0; f < frames; ++f)
    for (int64_t k = 0; k < bins; ++k) {
      std::complex<double> acc = 0.0;
      for (int64_t j = 0; j < win; ++j) {
        double v = w[size_t(j)] * pad[size_t(f * hop + j)];
        double ang = -kTwoPi * double(k) * double(j) / double(nfft);
        acc += v * std::complex<double>(std::cos(ang), std::sin(ang));
      }
      out.at(f, k) = acc;
    }
  return out;
}

Waveform random_wave(int64_t n, uint64_t seed, int sr = 16000) {
  Rng rng(seed);
  Waveform w;
  w.sample_rate = sr;
  w.samples.resize(size_t(n));
  for (auto& v : w.samples) v = rng.uniform(-0.9, 0.9);
  return w;
}

std::string tmp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("config validation") {
  AnalysisConfig cfg;
  cfg.validate();
  CHECK(cfg.bins() == 513);
  AnalysisConfig bad = cfg;
  bad.hop_len = 321;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.fft_size = 1000;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.hop_len = 200;  // does not divide win
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("wrap_phase principal interval") {
  CHECK(wrap_phase(0.0) == 0.0);
  CHECK(wrap_phase(kPi) == doctest::Approx(kPi));
  CHECK(wrap_phase(-kPi) == doctest::Approx(kPi));
  CHECK(wrap_phase(3.0 * kPi) == doctest::Approx(kPi));
  CHECK(wrap_phase(kTwoPi) == doctest::Approx(0.0).epsilon(1e-12));
  Rng rng(1);
  for (int i = 0; i < 10000; ++i) {
    double p = wrap_phase(rng.uniform(-50.0, 50.0));
    CHECK(p > -kPi);
    CHECK(p <= kPi);
  }
}

TEST_CASE("perfect reconstruction roundtrip") {
  AnalysisConfig cfg;
  for (int64_t n : {640L, 1000L, 2048L, 12345L}) {
    Waveform x = random_wave(n, uint64_t(n));
    Spectrum s = stft(x, cfg);
    CHECK(s.frames() == 1 + n / cfg.hop_len);
    Waveform y = istft(s);
    REQUIRE(y.size() == x.size());
    double err = 0.0;
    for (size_t i = 0; i < x.samples.size(); ++i)
      err = std::max(err, std::abs(x.samples[i] - y.samples[i]));
    CHECK(err < 1e-10);
  }
  // desk-scale configuration
  AnalysisConfig desk{3200, 64, 32, 128};
  Waveform x = random_wave(960, 9, 3200);
  Waveform y = istft(stft(x, desk));
  double err = 0.0;
  for (size_t i = 0; i < x.samples.size(); ++i)
    err = std::max(err, std::abs(x.samples[i] - y.samples[i]));
  CHECK(err < 1e-10);
}

TEST_CASE("stft edge cases") {
  AnalysisConfig cfg{16000, 64, 32, 64};
  SUBCASE("too-short signal is a length error") {
    Waveform x = random_wave(63, 5);
    CHECK_THROWS_AS(stft(x, cfg), std::length_error);
  }
  SUBCASE("DC segment has zero phase at bin 0") {
    Waveform x;
    x.sample_rate = 16000;
    x.samples.assign(512, 1.0);
    Spectrum s = stft(x, cfg);
    for (int64_t f = 0; f < s.frames(); ++f) CHECK(s.phase.at(f, 0) == 0.0);
  }
  SUBCASE("silence hits the amplitude floor with zero phase") {
    Waveform x;
    x.sample_rate = 16000;
    x.samples.assign(256, 0.0);
    Spectrum s = stft(x, cfg);
    for (int64_t i = 0; i < s.log_amp.numel(); ++i) {
      CHECK(s.log_amp.data()[i] == doctest::Approx(std::log(kAmpFloor)));
      CHECK(s.phase.data()[i] == 0.0);
    }
  }
}

TEST_CASE("stft matches the brute-force DFT oracle") {
  AnalysisConfig cfg{16000, 256, 128, 256};
  // cosine at exactly bin 8, frame-aligned so every interior frame starts at
  // zero phase
  int64_t n = 2048;
  const int k = 8;
  Waveform x;
  x.sample_rate = 16000;
  x.samples.resize(size_t(n));
  for (int64_t t = 0; t < n; ++t)
    x.samples[size_t(t)] = std::cos(kTwoPi * k * double(t) / cfg.fft_size);

  Spectrum s = stft(x, cfg);
  ComplexMatrix oracle = dft_oracle(x, cfg);
  REQUIRE(oracle.frames == s.frames());
  for (int64_t f = 0; f < s.frames(); ++f)
    for (int64_t b = 0; b < s.bins(); ++b) {
      std::complex<double> c = oracle.at(f, b);
      double amp = std::abs(c);
      CHECK(std::exp(s.log_amp.at(f, b)) ==
            doctest::Approx(std::max(amp, kAmpFloor)).epsilon(1e-9));
      if (amp > 1e-6) {
        double dp = wrap_phase(s.phase.at(f, b) - std::arg(c));
        CHECK(std::abs(dp) < 1e-9);
      }
    }
  // interior frames: the window sits fully inside the signal and the cosine
  // is frame-aligned, so the peak bin carries zero phase
  for (int64_t f = 1; f + 1 < s.frames(); ++f) CHECK(std::abs(s.phase.at(f, k)) < 1e-6);
}

TEST_CASE("stft linearity in amplitude") {
  AnalysisConfig cfg{16000, 128, 64, 128};
  Waveform x = random_wave(1500, 77);
  Waveform x2 = x;
  for (auto& v : x2.samples) v *= 0.25;
  Spectrum s1 = stft(x, cfg), s2 = stft(x2, cfg);
  for (int64_t i = 0; i < s1.log_amp.numel(); ++i) {
    double a1 = std::exp(s1.log_amp.data()[i]);
    double a2 = std::exp(s2.log_amp.data()[i]);
    if (a1 > 1e-6) {
      CHECK(a2 == doctest::Approx(0.25 * a1).epsilon(1e-9));
      CHECK(std::abs(wrap_phase(s1.phase.data()[i] - s2.phase.data()[i])) < 1e-9);
    }
  }
}

TEST_CASE("istft special cases") {
  AnalysisConfig cfg{16000, 128, 64, 128};
  Waveform x = random_wave(1024, 3);
  Spectrum s = stft(x, cfg);
  SUBCASE("zero amplitude gives a zero waveform") {
    for (int64_t i = 0; i < s.log_amp.numel(); ++i)
      s.log_amp.data()[i] = std::log(kAmpFloor) - 2000.0;  // exp underflows to 0
    Waveform y = istft(s);
    for (double v : y.samples) CHECK(v == 0.0);
  }
  SUBCASE("random-phase spectrum is inconsistent") {
    Rng rng(4);
    for (int64_t i = 0; i < s.phase.numel(); ++i)
      s.phase.data()[i] = wrap_phase(rng.uniform(-kPi, kPi));
    Waveform y = istft(s);
    Spectrum s2 = stft(y, cfg);
    double diff = 0.0;
    for (int64_t i = 0; i < s.log_amp.numel(); ++i)
      diff = std::max(diff, std::abs(std::exp(s.log_amp.data()[i]) -
                                     std::exp(s2.log_amp.data()[i])));
    CHECK(diff > 1e-3);
  }
}

TEST_CASE("complex_from / spectrum_from conventions") {
  AnalysisConfig cfg;
  ComplexMatrix c = ComplexMatrix::zeros(1, 3);
  c.at(0, 0) = {1.0, 0.0};
  c.at(0, 1) = {-1.0, 0.0};
  c.at(0, 2) = {0.0, 0.0};
  Spectrum s = spectrum_from(c, cfg);
  CHECK(s.log_amp.at(0, 0) == 0.0);
  CHECK(s.phase.at(0, 0) == 0.0);
  CHECK(s.phase.at(0, 1) == doctest::Approx(kPi));  // principal value, not -pi
  CHECK(s.log_amp.at(0, 2) == doctest::Approx(std::log(kAmpFloor)));
  CHECK(s.phase.at(0, 2) == 0.0);
  ComplexMatrix back = complex_from(s);
  CHECK(back.at(0, 0).real() == doctest::Approx(1.0));
  CHECK(back.at(0, 1).real() == doctest::Approx(-1.0));
}

TEST_CASE("wav io") {
  std::string path = tmp_path("pf_test.wav");
  Waveform w;
  w.sample_rate = 8000;
  Rng rng(11);
  for (int i = 0; i < 500; ++i)
    w.samples.push_back(double(int16_t(uint16_t(rng.next_u64()))) / 32768.0);
  write_wav(path, w);
  Waveform r = read_wav(path);
  CHECK(r.sample_rate == 8000);
  REQUIRE(r.samples.size() == w.samples.size());
  for (size_t i = 0; i < w.samples.size(); ++i) CHECK(r.samples[i] == w.samples[i]);

  SUBCASE("8-bit wav is rejected") {
    std::ofstream out(path, std::ios::binary);
    auto u32 = [&](uint32_t v) { out.write(reinterpret_cast<char*>(&v), 4); };
    auto u16 = [&](uint16_t v) { out.write(reinterpret_cast<char*>(&v), 2); };
    out.write("RIFF", 4);
    u32(36 + 4);
    out.write("WAVE", 4);
    out.write("fmt ", 4);
    u32(16);
    u16(1);
    u16(1);
    u32(8000);
    u32(8000);
    u16(1);
    u16(8);
    out.write("data", 4);
    u32(4);
    u32(0);
    out.close();
    CHECK_THROWS_AS(read_wav(path), FormatError);
  }
  SUBCASE("stereo wav is rejected") {
    std::ofstream out(path, std::ios::binary);
    auto u32 = [&](uint32_t v) { out.write(reinterpret_cast<char*>(&v), 4); };
    auto u16 = [&](uint16_t v) { out.write(reinterpret_cast<char*>(&v), 2); };
    out.write("RIFF", 4);
    u32(36 + 8);
    out.write("WAVE", 4);
    out.write("fmt ", 4);
    u32(16);
    u16(1);
    u16(2);
    u32(8000);
    u32(32000);
    u16(4);
    u16(16);
    out.write("data", 4);
    u32(8);
    u32(0);
    u32(0);
    out.close();
    CHECK_THROWS_AS(read_wav(path), FormatError);
  }
  SUBCASE("garbage is rejected") {
    std::ofstream out(path, std::ios::binary);
    out << "not a wav at all";
    out.close();
    CHECK_THROWS_AS(read_wav(path), FormatError);
  }
  std::remove(path.c_str());
}

TEST_CASE("pfspec io") {
  AnalysisConfig cfg{16000, 128, 64, 128};
  Waveform x = random_wave(1024, 21);
  Spectrum s = stft(x, cfg);
  std::string path = tmp_path("pf_test.pfspec");
  write_pfspec(path, s);
  Spectrum r = read_pfspec(path);
  CHECK(r.frames() == s.frames());
  CHECK(r.bins() == s.bins());
  CHECK(r.config == cfg);
  for (int64_t i = 0; i < s.log_amp.numel(); ++i) {
    CHECK(r.log_amp.data()[i] == s.log_amp.data()[i]);
    CHECK(r.phase.data()[i] == s.phase.data()[i]);
  }
  SUBCASE("bad header rejected") {
    std::ofstream out(path, std::ios::binary);
    out << "PFWHAT v9 1 2 3 4 5 6\n";
    out.close();
    CHECK_THROWS_AS(read_pfspec(path), FormatError);
  }
  SUBCASE("truncated payload rejected") {
    write_pfspec(path, s);
    std::filesystem::resize_file(path, 200);
    CHECK_THROWS_AS(read_pfspec(path), FormatError);
  }
  std::remove(path.c_str());
}
