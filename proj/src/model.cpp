// Copyright 2026 PhaseForge Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "phaseforge/model.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "phaseforge/checkpoint.hpp"

namespace phaseforge {

namespace {

constexpr double kNormEps = 1e-6;

Tensor init_uniform(Shape shape, int64_t fan_in, Rng& rng, bool zero = false) {
  Tensor t = Tensor::zeros(std::move(shape), true);
  if (!zero) {
    double bound = 1.0 / std::sqrt(double(fan_in));
    for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = rng.uniform(-bound, bound);
  }
  return t;
}

const Tensor& find_param(const std::vector<Param>& params, const std::string& name) {
  for (const auto& p : params)
    if (p.name == name) return p.tensor;
  throw StateError("unknown parameter " + name);
}

void load_params_by_name(std::vector<Param>& params,
                         const std::vector<NamedTensor>& entries,
                         const std::string& prefix, const std::string& path) {
  for (auto& p : params) {
    const NamedTensor& e = find_entry(entries, prefix + p.name);
    if (e.t.shape() != p.tensor.shape())
      throw FormatError(path + ": shape mismatch for " + p.name + " (" +
                        shape_str(e.t.shape()) + " vs " + shape_str(p.tensor.shape()) + ")");
    std::copy_n(e.t.data(), e.t.numel(), p.tensor.data());
  }
}

NamedTensor meta_scalar(const std::string& name, double v) {
  return {name, Tensor::scalar(v)};
}

}  // namespace

void BackboneConfig::validate() const {
  if (n_blocks < 1 || channels < 1 || block_hidden < 1 || bins < 1)
    throw ConfigError("backbone dimensions must be positive");
  if (kernel < 1 || kernel % 2 == 0) throw ConfigError("kernel must be odd");
}

PhaseModel::PhaseModel(const BackboneConfig& cfg, uint64_t init_seed) : cfg_(cfg) {
  cfg.validate();
  Rng rng(init_seed);
  int64_t c = cfg.channels, h = cfg.block_hidden, k = cfg.kernel, n = cfg.bins;
  int64_t in_ch = cfg.conditioned ? 2 * n : n;

  auto add = [&](const std::string& name, Tensor t) { params_.push_back({name, t}); };

  add("stem.w", init_uniform({c, in_ch, k}, in_ch * k, rng));
  add("stem.b", init_uniform({c}, 1, rng, true));
  add("stem_norm.g", Tensor::full({c}, 1.0, true));
  add("stem_norm.b", Tensor::zeros({c}, true));
  for (int bi = 0; bi < cfg.n_blocks; ++bi) {
    std::string base = "blocks." + std::to_string(bi) + ".";
    add(base + "dw.w", init_uniform({c, 1, k}, k, rng));
    add(base + "dw.b", init_uniform({c}, 1, rng, true));
    add(base + "norm.g", Tensor::full({c}, 1.0, true));
    add(base + "norm.b", Tensor::zeros({c}, true));
    add(base + "pw1.w", init_uniform({c, h}, c, rng));
    add(base + "pw1.b", init_uniform({h}, 1, rng, true));
    add(base + "grn.g", Tensor::zeros({h}, true));
    add(base + "grn.b", Tensor::zeros({h}, true));
    add(base + "pw2.w", init_uniform({h, c}, h, rng));
    add(base + "pw2.b", init_uniform({c}, 1, rng, true));
  }
  add("head_norm.g", Tensor::full({c}, 1.0, true));
  add("head_norm.b", Tensor::zeros({c}, true));
  add("head.w", init_uniform({c, c}, c, rng));
  add("head.b", init_uniform({c}, 1, rng, true));
  add("pea.r.w", init_uniform({n, c, k}, c * k, rng));
  add("pea.r.b", init_uniform({n}, 1, rng, true));
  add("pea.i.w", init_uniform({n, c, k}, c * k, rng));
  add("pea.i.b", init_uniform({n}, 1, rng, true));
}

const Tensor& PhaseModel::p(const std::string& name) const {
  return find_param(params_, name);
}

Tensor PhaseModel::backbone(const Tensor& input) const {
  Tensor x = conv1d(input, p("stem.w"), p("stem.b"));
  x = layer_norm(x, p("stem_norm.g"), p("stem_norm.b"), kNormEps);
  for (int bi = 0; bi < cfg_.n_blocks; ++bi) {
    std::string base = "blocks." + std::to_string(bi) + ".";
    Tensor y = conv1d(x, p(base + "dw.w"), p(base + "dw.b"), cfg_.channels);
    y = layer_norm(y, p(base + "norm.g"), p(base + "norm.b"), kNormEps);
    y = linear(y, p(base + "pw1.w"), p(base + "pw1.b"));
    y = gelu(y);
    y = grn(y, p(base + "grn.g"), p(base + "grn.b"), kNormEps);
    y = linear(y, p(base + "pw2.w"), p(base + "pw2.b"));
    x = add(x, y);  // residual
  }
  x = layer_norm(x, p("head_norm.g"), p("head_norm.b"), kNormEps);
  return linear(x, p("head.w"), p("head.b"));
}

Tensor PhaseModel::pea_forward(const Tensor& features) const {
  Tensor re = conv1d(features, p("pea.r.w"), p("pea.r.b"));
  Tensor im = conv1d(features, p("pea.i.w"), p("pea.i.b"));
  return phaseforge::atan2(im, re);
}

Tensor PhaseModel::forward(const Tensor& log_amp) const {
  if (cfg_.conditioned)
    throw StateError("conditioned model requires a prior phase input");
  if (log_amp.rank() != 2 || log_amp.dim(1) != cfg_.bins)
    throw ShapeError("forward: expected [F," + std::to_string(cfg_.bins) + "], got " +
                     shape_str(log_amp.shape()));
  return pea_forward(backbone(log_amp));
}

Tensor PhaseModel::forward(const Tensor& log_amp, const Tensor& prior_phase) const {
  if (!cfg_.conditioned)
    throw StateError("unconditioned model does not take a prior phase input");
  if (log_amp.rank() != 2 || log_amp.dim(1) != cfg_.bins ||
      prior_phase.shape() != log_amp.shape())
    throw ShapeError("forward: log_amp and prior must both be [F," +
                     std::to_string(cfg_.bins) + "]");
  return pea_forward(backbone(concat(log_amp, prior_phase, 1)));
}

int64_t PhaseModel::param_count() const {
  int64_t n = 0;
  for (const auto& pp : params_) n += pp.tensor.numel();
  return n;
}

Tensor iterate(const Tensor& log_amp, const PhaseModel& prior,
               const std::vector<const PhaseModel*>& refiners, int k) {
  if (k < 0) throw ConfigError("iterate: k must be >= 0");
  if (k > int(refiners.size()))
    throw ConfigError("iterate: k=" + std::to_string(k) + " exceeds available refinement models (" +
                      std::to_string(refiners.size()) + ")");
  Tensor phase = prior.forward(log_amp);
  for (int i = 0; i < k; ++i) phase = refiners[size_t(i)]->forward(log_amp, phase);
  return phase;
}

// ---------------------------------------------------------------------------
// PSD

namespace {

struct PsdLayerSpec {
  int kh, kw, sh, sw;
};

constexpr PsdLayerSpec kPsdLayers[5] = {
    {7, 5, 2, 2}, {5, 3, 2, 2}, {5, 3, 2, 2}, {3, 3, 1, 1}, {3, 3, 1, 1}};

}  // namespace

Psd::Psd(const PsdConfig& cfg, uint64_t init_seed) : cfg_(cfg) {
  if (cfg.channels < 1) throw ConfigError("psd channels must be positive");
  Rng rng(init_seed);
  int64_t c = cfg.channels;
  int64_t in_ch = 1;
  for (int li = 0; li < 5; ++li) {
    const auto& ls = kPsdLayers[li];
    std::string base = "conv" + std::to_string(li) + ".";
    params_.push_back({base + "w", init_uniform({c, in_ch, ls.kh, ls.kw},
                                                in_ch * ls.kh * ls.kw, rng)});
    params_.push_back({base + "b", init_uniform({c}, 1, rng, true)});
    in_ch = c;
  }
  params_.push_back({"out.w", init_uniform({1, c, 3, 3}, c * 9, rng)});
  params_.push_back({"out.b", init_uniform({1}, 1, rng, true)});
}

const Tensor& Psd::p(const std::string& name) const {
  return find_param(params_, name);
}

PsdOut Psd::forward(const Tensor& phase) const {
  if (phase.rank() != 2) throw ShapeError("psd: expected an [F,N] matrix");
  PsdOut out;
  Tensor x = reshape(phase, {1, phase.dim(0), phase.dim(1)});
  for (int li = 0; li < 5; ++li) {
    const auto& ls = kPsdLayers[li];
    std::string base = "conv" + std::to_string(li) + ".";
    x = conv2d(x, p(base + "w"), p(base + "b"), ls.sh, ls.sw, ls.kh / 2, ls.kw / 2);
    x = leaky_relu(x, cfg_.lrelu_slope);
    out.feats.push_back(x);
  }
  out.score = conv2d(x, p("out.w"), p("out.b"), 1, 1, 1, 1);
  return out;
}

int64_t Psd::param_count() const {
  int64_t n = 0;
  for (const auto& pp : params_) n += pp.tensor.numel();
  return n;
}

std::pair<int64_t, int64_t> Psd::score_dims(int64_t frames, int64_t bins) {
  int64_t h = frames, w = bins;
  for (const auto& ls : kPsdLayers) {
    h = (h + 2 * (ls.kh / 2) - ls.kh) / ls.sh + 1;
    w = (w + 2 * (ls.kw / 2) - ls.kw) / ls.sw + 1;
  }
  return {h, w};  // final output conv is stride 1, same padding
}

// ---------------------------------------------------------------------------
// persistence

void save_model(const std::string& path, const PhaseModel& model, const AnalysisConfig& acfg) {
  std::vector<NamedTensor> entries;
  const BackboneConfig& c = model.config();
  entries.push_back(meta_scalar("cfg.n_blocks", c.n_blocks));
  entries.push_back(meta_scalar("cfg.channels", c.channels));
  entries.push_back(meta_scalar("cfg.block_hidden", c.block_hidden));
  entries.push_back(meta_scalar("cfg.kernel", c.kernel));
  entries.push_back(meta_scalar("cfg.bins", c.bins));
  entries.push_back(meta_scalar("cfg.conditioned", c.conditioned ? 1.0 : 0.0));
  entries.push_back(meta_scalar("acfg.sample_rate", acfg.sample_rate));
  entries.push_back(meta_scalar("acfg.win_len", acfg.win_len));
  entries.push_back(meta_scalar("acfg.hop_len", acfg.hop_len));
  entries.push_back(meta_scalar("acfg.fft_size", acfg.fft_size));
  for (const auto& pp : model.params()) entries.push_back({pp.name, pp.tensor});
  write_pfckpt(path, entries);
}

PhaseModel load_model(const std::string& path, AnalysisConfig* acfg) {
  auto entries = read_pfckpt(path);
  BackboneConfig c;
  c.n_blocks = int(find_entry(entries, "cfg.n_blocks").t.item());
  c.channels = int(find_entry(entries, "cfg.channels").t.item());
  c.block_hidden = int(find_entry(entries, "cfg.block_hidden").t.item());
  c.kernel = int(find_entry(entries, "cfg.kernel").t.item());
  c.bins = int(find_entry(entries, "cfg.bins").t.item());
  c.conditioned = find_entry(entries, "cfg.conditioned").t.item() != 0.0;
  if (acfg) {
    acfg->sample_rate = int(find_entry(entries, "acfg.sample_rate").t.item());
    acfg->win_len = int(find_entry(entries, "acfg.win_len").t.item());
    acfg->hop_len = int(find_entry(entries, "acfg.hop_len").t.item());
    acfg->fft_size = int(find_entry(entries, "acfg.fft_size").t.item());
  }
  PhaseModel model(c, 0);
  load_params_by_name(model.params(), entries, "", path);
  return model;
}

void write_model_config(const std::string& path, const BackboneConfig& cfg) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path);
  out << "n_blocks=" << cfg.n_blocks << "\n"
      << "channels=" << cfg.channels << "\n"
      << "block_hidden=" << cfg.block_hidden << "\n"
      << "kernel=" << cfg.kernel << "\n"
      << "bins=" << cfg.bins << "\n"
      << "conditioned=" << (cfg.conditioned ? 1 : 0) << "\n";
}

BackboneConfig read_model_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError(path + ": expected key=value, got: " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  BackboneConfig cfg;
  auto get = [&](const std::string& key, int def) {
    auto it = kv.find(key);
    return it == kv.end() ? def : std::stoi(it->second);
  };
  cfg.n_blocks = get("n_blocks", cfg.n_blocks);
  cfg.channels = get("channels", cfg.channels);
  cfg.block_hidden = get("block_hidden", cfg.block_hidden);
  cfg.kernel = get("kernel", cfg.kernel);
  cfg.bins = get("bins", cfg.bins);
  cfg.conditioned = get("conditioned", cfg.conditioned ? 1 : 0) != 0;
  return cfg;
}

}  // namespace phaseforge
