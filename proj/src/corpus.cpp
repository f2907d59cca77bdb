// Copyright 2026 PhaseForge Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "phaseforge/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

namespace phaseforge {

namespace {

void peak_normalize(std::vector<double>& x, double peak) {
  double mx = 0.0;
  for (double v : x) mx = std::max(mx, std::abs(v));
  if (mx <= 0.0) return;
  double s = peak / mx;
  for (double& v : x) v *= s;
}

double peak_of(const std::vector<double>& x) {
  double mx = 0.0;
  for (double v : x) mx = std::max(mx, std::abs(v));
  return mx;
}

void add_noise(std::vector<double>& x, double rel_db, Rng& rng) {
  double sigma = std::pow(10.0, rel_db / 20.0) * peak_of(x);
  for (double& v : x) v += sigma * rng.normal();
}

std::vector<double> gen_harmonic(int64_t n, int sr, Rng& rng) {
  double f0 = rng.uniform(80.0, 400.0);
  int n_harm = int(rng.randint(3, 8));
  double attack = 0.005 * sr;
  double tau = rng.uniform(0.4, 0.8) * double(n);  // decay constant in samples
  std::vector<double> amp(size_t(n_harm), 0.0);
  for (auto& a : amp) a = rng.uniform(0.4, 1.0);
  std::vector<double> x(size_t(n), 0.0);
  for (int k = 1; k <= n_harm; ++k) {
    double f = k * f0;
    if (f > 0.45 * sr) break;
    double w = kTwoPi * f / sr;
    double a = amp[size_t(k - 1)];
    for (int64_t t = 0; t < n; ++t) x[size_t(t)] += a * std::cos(w * double(t));
  }
  for (int64_t t = 0; t < n; ++t) {
    double env = (1.0 - std::exp(-double(t) / attack)) * std::exp(-double(t) / tau);
    x[size_t(t)] *= env;
  }
  add_noise(x, -30.0, rng);
  return x;
}

std::vector<double> gen_chirp(int64_t n, int sr, Rng& rng) {
  double f_lo = rng.uniform(100.0, 0.1 * sr);
  double f_hi = rng.uniform(f_lo, 0.45 * sr);
  if (rng.uniform() < 0.5) std::swap(f_lo, f_hi);
  std::vector<double> x(size_t(n), 0.0);
  double ramp = 0.01 * sr;
  for (int64_t t = 0; t < n; ++t) {
    double u = double(t) / double(n);
    double phase = kTwoPi * (f_lo * double(t) + 0.5 * (f_hi - f_lo) * double(t) * u) / sr;
    double env = std::min({1.0, double(t) / ramp, double(n - 1 - t) / ramp});
    x[size_t(t)] = env * std::cos(phase);
  }
  add_noise(x, -30.0, rng);
  return x;
}

std::vector<double> gen_noise_mix(int64_t n, int sr, Rng& rng) {
  double f0 = rng.uniform(80.0, 400.0);
  std::vector<double> x(size_t(n), 0.0);
  for (int64_t t = 0; t < n; ++t) {
    double v = 0.0;
    for (int k = 1; k <= 3; ++k)
      if (k * f0 < 0.45 * sr) v += std::cos(kTwoPi * k * f0 * double(t) / sr) / k;
    x[size_t(t)] = v;
  }
  add_noise(x, -10.0, rng);
  return x;
}

}  // namespace

Corpus load_dir(const std::string& path, const AnalysisConfig& cfg) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(path)) throw FormatError(path + ": not a directory");
  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(path)) {
    if (e.is_regular_file() && e.path().extension() == ".wav")
      files.push_back(e.path().string());
  }
  std::sort(files.begin(), files.end());
  Corpus c;
  for (const auto& f : files) {
    Waveform w = read_wav(f);
    if (w.sample_rate != cfg.sample_rate)
      throw FormatError(f + ": sample rate " + std::to_string(w.sample_rate) +
                        " does not match configured " + std::to_string(cfg.sample_rate));
    c.entries.push_back({fs::path(f).stem().string(), std::move(w)});
  }
  return c;
}

Corpus gen_synthetic(const SynthSpec& spec) {
  if (spec.n_utts < 0) throw ConfigError("n_utts must be >= 0");
  if (spec.sample_rate < 1000) throw ConfigError("sample_rate must be >= 1000");
  if (spec.duration_s <= 0.0) throw ConfigError("duration must be positive");
  int64_t n = int64_t(spec.duration_s * spec.sample_rate);
  Corpus c;
  Rng master(spec.seed);
  for (int i = 0; i < spec.n_utts; ++i) {
    Rng rng(master.next_u64());
    std::vector<double> x;
    switch (spec.kind) {
      case SynthKind::harmonic: x = gen_harmonic(n, spec.sample_rate, rng); break;
      case SynthKind::chirp: x = gen_chirp(n, spec.sample_rate, rng); break;
      case SynthKind::noise_mix: x = gen_noise_mix(n, spec.sample_rate, rng); break;
    }
    peak_normalize(x, 0.95);
    char id[32];
    std::snprintf(id, sizeof(id), "utt%04d", i);
    c.entries.push_back({id, Waveform{std::move(x), spec.sample_rate}});
  }
  return c;
}

void write_manifest(const std::string& path, const std::vector<std::string>& ids) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path);
  for (const auto& id : ids) out << id << "\n";
}

std::vector<std::string> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path);
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) ids.push_back(line);
  return ids;
}

Corpus select(const Corpus& corpus, const std::vector<std::string>& ids, Split split) {
  std::map<std::string, const CorpusEntry*> by_id;
  for (const auto& e : corpus.entries) {
    if (by_id.count(e.id)) throw FormatError("duplicate corpus id " + e.id);
    by_id[e.id] = &e;
  }
  Corpus out;
  out.split = split;
  for (const auto& id : ids) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw FormatError("manifest id not in corpus: " + id);
    out.entries.push_back(*it->second);
  }
  return out;
}

SynthKind parse_synth_kind(const std::string& name) {
  if (name == "harmonic") return SynthKind::harmonic;
  if (name == "chirp") return SynthKind::chirp;
  if (name == "noise_mix") return SynthKind::noise_mix;
  throw ConfigError("unknown synthetic kind: " + name);
}

}  // namespace phaseforge
