// Copyright 2026 PhaseForge Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "phaseforge/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "phaseforge/checkpoint.hpp"

namespace phaseforge {

namespace {

uint64_t mix_seed(uint64_t seed, uint64_t salt) {
  return splitmix64(splitmix64(seed) ^ splitmix64(salt));
}

NamedTensor meta_scalar(const std::string& name, double v) {
  return {name, Tensor::scalar(v)};
}

NamedTensor meta_text(const std::string& name, const std::string& text) {
  Tensor t = Tensor::zeros({int64_t(text.size())});
  for (size_t i = 0; i < text.size(); ++i) t.data()[i] = double((unsigned char)text[i]);
  return {name, t};
}

std::string text_of(const Tensor& t) {
  std::string s;
  s.reserve(size_t(t.numel()));
  for (int64_t i = 0; i < t.numel(); ++i) s.push_back(char((unsigned char)t.data()[i]));
  return s;
}

void append_params(std::vector<NamedTensor>& entries, const std::string& prefix,
                   const std::vector<Param>& params, const AdamW& opt) {
  for (const auto& p : params) entries.push_back({prefix + p.name, p.tensor});
  const auto& m = opt.moments_m();
  const auto& v = opt.moments_v();
  for (size_t i = 0; i < params.size(); ++i) {
    Shape s = params[i].tensor.shape();
    Tensor mt = m.size() == params.size() ? Tensor::from(s, m[i]) : Tensor::zeros(s);
    Tensor vt = v.size() == params.size() ? Tensor::from(s, v[i]) : Tensor::zeros(s);
    entries.push_back({prefix + params[i].name + ".m", mt});
    entries.push_back({prefix + params[i].name + ".v", vt});
  }
}

void restore_params(const std::vector<NamedTensor>& entries, const std::string& prefix,
                    std::vector<Param>& params, AdamW& opt, const std::string& path) {
  opt.moments_m().resize(params.size());
  opt.moments_v().resize(params.size());
  for (size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    const NamedTensor& e = find_entry(entries, prefix + p.name);
    if (e.t.shape() != p.tensor.shape())
      throw FormatError(path + ": shape mismatch for " + p.name);
    std::copy_n(e.t.data(), e.t.numel(), p.tensor.data());
    opt.moments_m()[i] = find_entry(entries, prefix + p.name + ".m").t.vec();
    opt.moments_v()[i] = find_entry(entries, prefix + p.name + ".v").t.vec();
  }
}

struct StepLosses {
  double p = 0, tfid = 0, adv_g = 0, fm = 0, adv_d = 0;
};

}  // namespace

void TrainConfig::validate() const {
  analysis.validate();
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (segment_samples < analysis.win_len)
    throw ConfigError("segment_samples must be >= win_len");
  if (lr_decay <= 0.0 || lr_decay > 1.0) throw ConfigError("lr_decay must be in (0,1]");
  if (lr0 <= 0.0) throw ConfigError("lr0 must be positive");
  if (weights.lambda_p < 0.0 || weights.lambda_psd < 0.0)
    throw ConfigError("loss weights must be nonnegative");
}

TrainConfig TrainConfig::resolved() const {
  TrainConfig c = *this;
  c.backbone.bins = c.analysis.bins();
  c.backbone.conditioned = (c.stage == TrainStage::refine);
  c.backbone.validate();
  return c;
}

TrainState init_train_state(const TrainConfig& cfg_in) {
  TrainConfig cfg = cfg_in.resolved();
  cfg.validate();
  TrainState st;
  st.cfg = cfg;
  st.generator = PhaseModel(cfg.backbone, mix_seed(cfg.seed, 0xA11CE));
  st.discriminator = Psd(cfg.psd, mix_seed(cfg.seed, 0xD15C));
  st.opt_g = AdamW(cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.weight_decay);
  st.opt_d = AdamW(cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.weight_decay);
  st.epoch = 0;
  return st;
}

namespace {

Spectrum segment_spectrum(const CorpusEntry& e, int64_t offset, int64_t seg_len,
                          const AnalysisConfig& acfg) {
  Waveform w;
  w.sample_rate = e.wave.sample_rate;
  w.samples.assign(size_t(seg_len), 0.0);
  int64_t avail = std::min<int64_t>(seg_len, e.wave.size() - offset);
  for (int64_t i = 0; i < avail; ++i)
    w.samples[size_t(i)] = e.wave.samples[size_t(offset + i)];
  return stft(w, acfg);
}

StepLosses train_step(TrainState& st, const std::vector<Spectrum>& batch,
                      const PhaseModel* frozen_prior, double lr, int epoch_idx,
                      int step_idx) {
  const TrainConfig& cfg = st.cfg;
  bool refine = cfg.stage == TrainStage::refine;
  bool with_tfid = cfg.tfid_enabled();
  size_t b = batch.size();

  // One generator forward per item; the same graph serves the generator step,
  // the discriminator sees a detached copy.
  std::vector<Tensor> preds, targets;
  preds.reserve(b);
  targets.reserve(b);
  for (const auto& s : batch) {
    Tensor a = s.log_amp;
    Tensor p = s.phase;
    Tensor pred;
    if (refine) {
      Tensor prior_phase;
      {
        NoGradGuard ng;
        prior_phase = frozen_prior->forward(a);
      }
      pred = st.generator.forward(a, prior_phase);
    } else {
      pred = st.generator.forward(a);
    }
    preds.push_back(pred);
    targets.push_back(p);
  }

  StepLosses out;

  // Discriminator update.
  zero_grad(st.discriminator.params());
  Tensor d_total;
  for (size_t i = 0; i < b; ++i) {
    Tensor real_score = st.discriminator.forward(targets[i]).score;
    Tensor fake_score = st.discriminator.forward(detach(preds[i])).score;
    Tensor ld = loss_adv_d(real_score, fake_score);
    d_total = d_total.defined() ? add(d_total, ld) : ld;
  }
  d_total = mul(d_total, 1.0 / double(b));
  if (!std::isfinite(d_total.item()))
    throw StateError("non-finite discriminator loss at epoch " + std::to_string(epoch_idx + 1) +
                     " step " + std::to_string(step_idx));
  backward(d_total);
  st.opt_d.step(st.discriminator.params(), lr);
  out.adv_d = d_total.item();

  // Generator update (against the updated discriminator).
  zero_grad(st.generator.params());
  zero_grad(st.discriminator.params());
  Tensor g_total, lp_sum, tfid_sum, adv_sum, fm_sum;
  for (size_t i = 0; i < b; ++i) {
    Tensor lp = loss_phase(preds[i], targets[i]);
    PsdOut fake = st.discriminator.forward(preds[i]);
    std::vector<Tensor> real_feats;
    {
      NoGradGuard ng;
      real_feats = st.discriminator.forward(targets[i]).feats;
    }
    Tensor ladv = loss_adv_g(fake.score);
    Tensor lfm = loss_fm(fake.feats, real_feats);
    Tensor total = add(mul(lp, cfg.weights.lambda_p),
                       mul(add(ladv, lfm), cfg.weights.lambda_psd));
    Tensor ltf;
    if (with_tfid) {
      ltf = loss_tfid(preds[i], targets[i]);
      total = add(total, ltf);
    }
    g_total = g_total.defined() ? add(g_total, total) : total;
    lp_sum = lp_sum.defined() ? add(lp_sum, lp) : lp;
    adv_sum = adv_sum.defined() ? add(adv_sum, ladv) : ladv;
    fm_sum = fm_sum.defined() ? add(fm_sum, lfm) : lfm;
    if (with_tfid) tfid_sum = tfid_sum.defined() ? add(tfid_sum, ltf) : ltf;
  }
  g_total = mul(g_total, 1.0 / double(b));
  if (!std::isfinite(g_total.item()))
    throw StateError("non-finite generator loss at epoch " + std::to_string(epoch_idx + 1) +
                     " step " + std::to_string(step_idx) +
                     " (loss_p=" + std::to_string(lp_sum.item() / double(b)) + ")");
  backward(g_total);
  st.opt_g.step(st.generator.params(), lr);

  out.p = lp_sum.item() / double(b);
  out.adv_g = adv_sum.item() / double(b);
  out.fm = fm_sum.item() / double(b);
  out.tfid = with_tfid ? tfid_sum.item() / double(b) : 0.0;
  return out;
}

}  // namespace

void train_run(TrainState& st, const Corpus& corpus, const PhaseModel* frozen_prior,
               const EpochSink& sink) {
  const TrainConfig& cfg = st.cfg;
  if (cfg.stage == TrainStage::refine && frozen_prior == nullptr)
    throw ConfigError("refine stage requires a frozen prior model");
  if (frozen_prior != nullptr && frozen_prior->config().conditioned)
    throw ConfigError("frozen prior must be an unconditioned model");
  if (corpus.empty()) throw ConfigError("training corpus is empty");
  for (const auto& e : corpus.entries)
    if (e.wave.sample_rate != cfg.analysis.sample_rate)
      throw ConfigError("corpus sample rate does not match analysis config");

  int steps = std::max<int>(1, int(corpus.size()) / cfg.batch_size);
  while (st.epoch < cfg.epochs) {
    int e = st.epoch;
    double lr = cfg.lr0 * std::pow(cfg.lr_decay, double(e));
    Rng rng(mix_seed(cfg.seed, uint64_t(e) * 2 + (cfg.stage == TrainStage::refine ? 1 : 0)));

    std::vector<size_t> order(corpus.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[size_t(rng.randint(0, int64_t(i) - 1))]);

    EpochLog log;
    log.epoch = e + 1;
    log.lr = lr;
    for (int s = 0; s < steps; ++s) {
      std::vector<Spectrum> batch;
      for (int bi = 0; bi < cfg.batch_size; ++bi) {
        const auto& entry = corpus.entries[order[size_t(s * cfg.batch_size + bi) % corpus.size()]];
        int64_t max_off = entry.wave.size() - cfg.segment_samples;
        int64_t off = max_off > 0 ? rng.randint(0, max_off) : 0;
        batch.push_back(segment_spectrum(entry, off, cfg.segment_samples, cfg.analysis));
      }
      StepLosses sl = train_step(st, batch, frozen_prior, lr, e, s);
      log.loss_p += sl.p;
      log.loss_tfid += sl.tfid;
      log.loss_adv_g += sl.adv_g;
      log.loss_fm += sl.fm;
      log.loss_adv_d += sl.adv_d;
    }
    log.loss_p /= steps;
    log.loss_tfid /= steps;
    log.loss_adv_g /= steps;
    log.loss_fm /= steps;
    log.loss_adv_d /= steps;
    st.epoch = e + 1;
    if (sink) sink(log);
  }
}

TrainState train_stage(const TrainConfig& cfg, const Corpus& corpus,
                       const PhaseModel* frozen_prior, const EpochSink& sink) {
  TrainState st = init_train_state(cfg);
  train_run(st, corpus, frozen_prior, sink);
  return st;
}

// ---------------------------------------------------------------------------
// persistence

namespace {

std::string config_text(const TrainConfig& cfg) {
  std::ostringstream out;
  out.precision(17);
  out << "stage=" << (cfg.stage == TrainStage::prior ? "prior" : "refine") << "\n"
      << "epochs=" << cfg.epochs << "\n"
      << "batch_size=" << cfg.batch_size << "\n"
      << "segment_samples=" << cfg.segment_samples << "\n"
      << "lr0=" << cfg.lr0 << "\n"
      << "lr_decay=" << cfg.lr_decay << "\n"
      << "seed=" << cfg.seed << "\n"
      << "lambda_p=" << cfg.weights.lambda_p << "\n"
      << "lambda_psd=" << cfg.weights.lambda_psd << "\n"
      << "checkpoint_every=" << cfg.checkpoint_every << "\n"
      << "use_tfid=" << cfg.use_tfid << "\n"
      << "sample_rate=" << cfg.analysis.sample_rate << "\n"
      << "win_len=" << cfg.analysis.win_len << "\n"
      << "hop_len=" << cfg.analysis.hop_len << "\n"
      << "fft_size=" << cfg.analysis.fft_size << "\n"
      << "n_blocks=" << cfg.backbone.n_blocks << "\n"
      << "channels=" << cfg.backbone.channels << "\n"
      << "block_hidden=" << cfg.backbone.block_hidden << "\n"
      << "kernel=" << cfg.backbone.kernel << "\n"
      << "psd_channels=" << cfg.psd.channels << "\n"
      << "psd_lrelu_slope=" << cfg.psd.lrelu_slope << "\n"
      << "beta1=" << cfg.beta1 << "\n"
      << "beta2=" << cfg.beta2 << "\n"
      << "adam_eps=" << cfg.adam_eps << "\n"
      << "weight_decay=" << cfg.weight_decay << "\n";
  return out.str();
}

TrainConfig config_from_kv(const std::map<std::string, std::string>& kv,
                           const std::string& origin) {
  TrainConfig cfg;
  auto gets = [&](const std::string& key) -> const std::string* {
    auto it = kv.find(key);
    return it == kv.end() ? nullptr : &it->second;
  };
  auto geti = [&](const std::string& key, int64_t def) -> int64_t {
    const std::string* v = gets(key);
    return v ? std::stoll(*v) : def;
  };
  auto getd = [&](const std::string& key, double def) -> double {
    const std::string* v = gets(key);
    return v ? std::stod(*v) : def;
  };
  if (const std::string* v = gets("stage")) {
    if (*v == "prior") cfg.stage = TrainStage::prior;
    else if (*v == "refine") cfg.stage = TrainStage::refine;
    else throw FormatError(origin + ": unknown stage " + *v);
  }
  cfg.epochs = int(geti("epochs", cfg.epochs));
  cfg.batch_size = int(geti("batch_size", cfg.batch_size));
  cfg.segment_samples = geti("segment_samples", cfg.segment_samples);
  cfg.lr0 = getd("lr0", cfg.lr0);
  cfg.lr_decay = getd("lr_decay", cfg.lr_decay);
  cfg.seed = uint64_t(geti("seed", int64_t(cfg.seed)));
  cfg.weights.lambda_p = getd("lambda_p", cfg.weights.lambda_p);
  cfg.weights.lambda_psd = getd("lambda_psd", cfg.weights.lambda_psd);
  cfg.checkpoint_every = int(geti("checkpoint_every", cfg.checkpoint_every));
  cfg.use_tfid = int(geti("use_tfid", cfg.use_tfid));
  cfg.analysis.sample_rate = int(geti("sample_rate", cfg.analysis.sample_rate));
  cfg.analysis.win_len = int(geti("win_len", cfg.analysis.win_len));
  cfg.analysis.hop_len = int(geti("hop_len", cfg.analysis.hop_len));
  cfg.analysis.fft_size = int(geti("fft_size", cfg.analysis.fft_size));
  cfg.backbone.n_blocks = int(geti("n_blocks", cfg.backbone.n_blocks));
  cfg.backbone.channels = int(geti("channels", cfg.backbone.channels));
  cfg.backbone.block_hidden = int(geti("block_hidden", cfg.backbone.block_hidden));
  cfg.backbone.kernel = int(geti("kernel", cfg.backbone.kernel));
  cfg.psd.channels = int(geti("psd_channels", cfg.psd.channels));
  cfg.psd.lrelu_slope = getd("psd_lrelu_slope", cfg.psd.lrelu_slope);
  cfg.beta1 = getd("beta1", cfg.beta1);
  cfg.beta2 = getd("beta2", cfg.beta2);
  cfg.adam_eps = getd("adam_eps", cfg.adam_eps);
  cfg.weight_decay = getd("weight_decay", cfg.weight_decay);
  return cfg.resolved();
}

std::map<std::string, std::string> parse_kv(std::istream& in, const std::string& origin) {
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError(origin + ": expected key=value, got: " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

}  // namespace

void write_train_config(const std::string& path, const TrainConfig& cfg) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path);
  out << config_text(cfg);
}

TrainConfig read_train_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path);
  return config_from_kv(parse_kv(in, path), path);
}

void checkpoint(const TrainState& st, const std::string& path) {
  std::vector<NamedTensor> entries;
  entries.push_back(meta_text("meta.config", config_text(st.cfg)));
  entries.push_back(meta_scalar("meta.epoch", st.epoch));
  entries.push_back(meta_scalar("meta.opt_g.t", double(st.opt_g.step_count())));
  entries.push_back(meta_scalar("meta.opt_d.t", double(st.opt_d.step_count())));
  append_params(entries, "gen.", st.generator.params(), st.opt_g);
  append_params(entries, "psd.", st.discriminator.params(), st.opt_d);
  write_pfckpt(path, entries);
}

TrainState resume(const std::string& path) {
  auto entries = read_pfckpt(path);
  std::istringstream cfg_in(text_of(find_entry(entries, "meta.config").t));
  TrainConfig cfg = config_from_kv(parse_kv(cfg_in, path), path);
  TrainState st = init_train_state(cfg);
  st.epoch = int(find_entry(entries, "meta.epoch").t.item());
  restore_params(entries, "gen.", st.generator.params(), st.opt_g, path);
  restore_params(entries, "psd.", st.discriminator.params(), st.opt_d, path);
  st.opt_g.set_step_count(int64_t(find_entry(entries, "meta.opt_g.t").t.item()));
  st.opt_d.set_step_count(int64_t(find_entry(entries, "meta.opt_d.t").t.item()));
  return st;
}

std::string epoch_csv_header() {
  return "epoch,lr,loss_p,loss_tfid,loss_adv_g,loss_fm,loss_adv_d";
}

std::string epoch_csv_line(const EpochLog& log) {
  std::ostringstream out;
  out.precision(9);
  out << log.epoch << "," << log.lr << "," << log.loss_p << "," << log.loss_tfid
      << "," << log.loss_adv_g << "," << log.loss_fm << "," << log.loss_adv_d;
  return out.str();
}

}  // namespace phaseforge
