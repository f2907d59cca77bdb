// Copyright 2026 PhaseForge Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// phaseforge: speech phase reconstruction toolkit.
//
//   gen-data     synthesize a deterministic corpus with split manifests
//   analyze      wav -> PFSPEC spectrum dump
//   reconstruct  amplitude -> waveform via gla | raar | prior | sp-nspp |
//                sp-nspp-iter-k
//   train        stage-wise training (prior, then refine on a frozen prior)
//   eval         per-utterance phase-distortion / SNR / LSD report
//   info         inspect wav / spectrum / checkpoint / config files

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <thread>

#include <CLI11.hpp>

#include "phaseforge/checkpoint.hpp"
#include "phaseforge/corpus.hpp"
#include "phaseforge/criteria.hpp"
#include "phaseforge/iterative.hpp"
#include "phaseforge/model.hpp"
#include "phaseforge/training.hpp"

namespace fs = std::filesystem;
using namespace phaseforge;

namespace {

struct MethodSpec {
  std::string name;   // gla | raar | prior | sp-nspp | sp-nspp-iter-k
  bool neural = false;
  int refine_steps = 0;  // for neural methods
};

MethodSpec parse_method(const std::string& m) {
  if (m == "gla" || m == "raar") return {m, false, 0};
  if (m == "prior") return {m, true, 0};
  if (m == "sp-nspp") return {m, true, 1};
  const std::string prefix = "sp-nspp-iter-";
  if (m.rfind(prefix, 0) == 0) {
    try {
      int k = std::stoi(m.substr(prefix.size()));
      if (k >= 0) return {m, true, k};
    } catch (...) {
    }
  }
  throw CLI::ValidationError("--method", "unknown method: " + m);
}

struct NeuralStack {
  PhaseModel prior;
  std::vector<PhaseModel> refiners;
  AnalysisConfig acfg;

  Tensor predict(const Tensor& log_amp, int k) const {
    std::vector<const PhaseModel*> refs;
    for (const auto& r : refiners) refs.push_back(&r);
    NoGradGuard ng;
    return iterate(log_amp, prior, refs, k);
  }
};

NeuralStack load_stack(const std::vector<std::string>& ckpts, int refine_steps) {
  if (ckpts.empty()) throw ConfigError("neural methods require --ckpt (prior first, then refiners)");
  NeuralStack st;
  st.prior = load_model(ckpts[0], &st.acfg);
  if (st.prior.config().conditioned)
    throw ConfigError(ckpts[0] + ": first checkpoint must be the unconditioned prior model");
  for (size_t i = 1; i < ckpts.size(); ++i) {
    AnalysisConfig acfg;
    st.refiners.push_back(load_model(ckpts[i], &acfg));
    if (!st.refiners.back().config().conditioned)
      throw ConfigError(ckpts[i] + ": refinement checkpoints must be conditioned models");
    if (!(acfg == st.acfg)) throw ConfigError(ckpts[i] + ": analysis config mismatch across checkpoints");
  }
  if (refine_steps > int(st.refiners.size()))
    throw ConfigError("method needs " + std::to_string(refine_steps) +
                      " refinement checkpoints, got " + std::to_string(st.refiners.size()));
  return st;
}

bool is_pfspec(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  char magic[7] = {};
  in.read(magic, 6);
  return in && std::string(magic) == "PFSPEC";
}

Tensor linear_amplitude(const Tensor& log_amp) {
  Tensor a = Tensor::zeros(log_amp.shape());
  for (int64_t i = 0; i < a.numel(); ++i) a.data()[i] = std::exp(log_amp.data()[i]);
  return a;
}

// Runs fn(i) for i in [0, n) on up to PHASEFORGE_THREADS workers. Tasks are
// independent per index, so the outputs do not depend on the worker count.
void parallel_for(int64_t n, const std::function<void(int64_t)>& fn) {
  int workers = std::min<int64_t>(max_workers(), n);
  if (workers <= 1) {
    for (int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int64_t> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr err;
  std::mutex err_mu;
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&]() {
      for (;;) {
        int64_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mu);
          if (!err) err = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

// ---------------------------------------------------------------------------

int cmd_gen_data(const std::string& out_dir, int n, uint64_t seed, const std::string& kind,
                 double duration, int sr, double train_frac, double valid_frac) {
  SynthSpec spec;
  spec.n_utts = n;
  spec.duration_s = duration;
  spec.seed = seed;
  spec.kind = parse_synth_kind(kind);
  spec.sample_rate = sr;
  Corpus c = gen_synthetic(spec);
  fs::create_directories(out_dir);
  std::vector<std::string> train_ids, valid_ids, test_ids;
  int n_train = int(std::round(train_frac * n));
  int n_valid = int(std::round(valid_frac * n));
  for (int i = 0; i < int(c.size()); ++i) {
    const auto& e = c.entries[size_t(i)];
    write_wav(out_dir + "/" + e.id + ".wav", e.wave);
    if (i < n_train) train_ids.push_back(e.id);
    else if (i < n_train + n_valid) valid_ids.push_back(e.id);
    else test_ids.push_back(e.id);
  }
  write_manifest(out_dir + "/train.txt", train_ids);
  write_manifest(out_dir + "/valid.txt", valid_ids);
  write_manifest(out_dir + "/test.txt", test_ids);
  std::cout << "wrote " << c.size() << " utterances to " << out_dir << " (train "
            << train_ids.size() << ", valid " << valid_ids.size() << ", test "
            << test_ids.size() << ")\n";
  return 0;
}

int cmd_analyze(const std::string& in, const std::string& out, int win, int hop, int nfft) {
  Waveform w = read_wav(in);
  AnalysisConfig cfg;
  cfg.sample_rate = w.sample_rate;
  cfg.win_len = win;
  cfg.hop_len = hop;
  cfg.fft_size = nfft;
  Spectrum s = stft(w, cfg);
  write_pfspec(out, s);
  std::cout << in << ": " << s.frames() << " frames x " << s.bins() << " bins -> " << out << "\n";
  return 0;
}

struct ReconstructArgs {
  std::string method, in, out, ref, init = "zero";
  std::vector<std::string> ckpts;
  int iters = 100;
  double beta = 0.9;
  uint64_t seed = 0;
  int win = 320, hop = 80, nfft = 1024;
};

Tensor method_phase(const MethodSpec& ms, const Tensor& log_amp, const AnalysisConfig& cfg,
                    const ReconstructArgs& a, const NeuralStack* stack) {
  if (ms.neural) return stack->predict(log_amp, ms.refine_steps);
  IterConfig it;
  it.algorithm = ms.name == "gla" ? IterAlgorithm::gla : IterAlgorithm::raar;
  it.iterations = a.iters;
  it.raar_beta = a.beta;
  it.init = a.init == "random" ? IterInit::random_phase : IterInit::zero_phase;
  it.seed = a.seed;
  Tensor amp = linear_amplitude(log_amp);
  Spectrum s = ms.name == "gla" ? run_gla(amp, cfg, it) : run_raar(amp, cfg, it);
  return s.phase;
}

int cmd_reconstruct(const ReconstructArgs& a) {
  MethodSpec ms = parse_method(a.method);
  std::optional<NeuralStack> stack;
  if (ms.neural) stack = load_stack(a.ckpts, ms.refine_steps);

  Spectrum src;
  int64_t out_len = 0;
  if (is_pfspec(a.in)) {
    src = read_pfspec(a.in);
  } else {
    Waveform w = read_wav(a.in);
    AnalysisConfig cfg;
    if (ms.neural) {
      cfg = stack->acfg;
      if (w.sample_rate != cfg.sample_rate)
        throw ConfigError(a.in + ": sample rate does not match checkpoint analysis config");
    } else {
      cfg.sample_rate = w.sample_rate;
      cfg.win_len = a.win;
      cfg.hop_len = a.hop;
      cfg.fft_size = a.nfft;
    }
    src = stft(w, cfg);
    out_len = w.size();
  }
  if (ms.neural && src.bins() != stack->prior.config().bins)
    throw ConfigError(a.in + ": spectrum bins do not match checkpoint model");

  Tensor phase = method_phase(ms, src.log_amp, src.config, a, stack ? &*stack : nullptr);
  Spectrum rec;
  rec.config = src.config;
  rec.log_amp = src.log_amp;
  rec.phase = phase;
  rec.num_samples = out_len;
  Waveform y = istft(rec);
  write_wav(a.out, y);
  std::cout << a.method << ": " << a.in << " -> " << a.out << " (" << y.size() << " samples)\n";
  if (!a.ref.empty()) {
    Waveform ref = read_wav(a.ref);
    std::cout << "snr_db " << snr_db(y, ref) << "\n";
  }
  return 0;
}

int cmd_train(const std::string& stage, const std::string& config_path, const std::string& data,
              const std::string& out_dir, const std::string& prior_ckpt,
              const std::string& resume_path) {
  TrainConfig cfg = read_train_config(config_path);
  if (stage == "prior") cfg.stage = TrainStage::prior;
  else if (stage == "refine") cfg.stage = TrainStage::refine;
  else throw ConfigError("unknown stage: " + stage);
  cfg = cfg.resolved();

  std::optional<PhaseModel> frozen;
  if (cfg.stage == TrainStage::refine) {
    if (prior_ckpt.empty())
      throw ConfigError("refine stage requires --prior-ckpt with the trained prior model");
    AnalysisConfig acfg;
    frozen = load_model(prior_ckpt, &acfg);
    if (!(acfg == cfg.analysis))
      throw ConfigError(prior_ckpt + ": prior analysis config does not match training config");
  }

  AnalysisConfig acfg = cfg.analysis;
  Corpus all = load_dir(data, acfg);
  Corpus corpus = all;
  if (fs::exists(data + "/train.txt"))
    corpus = select(all, read_manifest(data + "/train.txt"), Split::train);
  fs::create_directories(out_dir);

  std::string stage_name = cfg.stage == TrainStage::prior ? "prior" : "refine";
  TrainState st = resume_path.empty() ? init_train_state(cfg) : resume(resume_path);

  std::ofstream log(out_dir + "/train_log.csv", resume_path.empty() ? std::ios::trunc : std::ios::app);
  if (resume_path.empty()) log << epoch_csv_header() << "\n";
  EpochSink sink = [&](const EpochLog& el) {
    log << epoch_csv_line(el) << "\n";
    log.flush();
    if (st.cfg.checkpoint_every > 0 && el.epoch % st.cfg.checkpoint_every == 0 &&
        el.epoch < st.cfg.epochs) {
      checkpoint(st, out_dir + "/" + stage_name + "_epoch" + std::to_string(el.epoch) + ".ckpt");
    }
    if (el.epoch % 50 == 0 || el.epoch == st.cfg.epochs)
      std::cout << "epoch " << el.epoch << "/" << st.cfg.epochs << " loss_p " << el.loss_p << "\n";
  };

  try {
    train_run(st, corpus, frozen ? &*frozen : nullptr, sink);
  } catch (const StateError& e) {
    checkpoint(st, out_dir + "/abort_dump.ckpt");
    std::cerr << "training aborted: " << e.what() << " (state dumped to " << out_dir
              << "/abort_dump.ckpt)\n";
    return 1;
  }

  checkpoint(st, out_dir + "/" + stage_name + "_state.ckpt");
  save_model(out_dir + "/" + stage_name + "_model.ckpt", st.generator, st.cfg.analysis);
  write_model_config(out_dir + "/" + stage_name + "_model.cfg", st.generator.config());
  std::cout << "trained " << stage_name << " for " << st.epoch << " epochs -> " << out_dir << "\n";
  return 0;
}

int cmd_eval(const std::string& method, const std::string& data, const std::string& ref_data,
             const std::string& out_csv, const ReconstructArgs& a) {
  MethodSpec ms = parse_method(method);
  std::optional<NeuralStack> stack;
  if (ms.neural) stack = load_stack(a.ckpts, ms.refine_steps);

  AnalysisConfig cfg;
  if (ms.neural) {
    cfg = stack->acfg;
  } else {
    cfg.win_len = a.win;
    cfg.hop_len = a.hop;
    cfg.fft_size = a.nfft;
  }

  std::vector<std::string> ids;
  {
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(data))
      if (e.is_regular_file() && e.path().extension() == ".wav")
        files.push_back(e.path().stem().string());
    std::sort(files.begin(), files.end());
    if (fs::exists(data + "/test.txt")) {
      auto manifest = read_manifest(data + "/test.txt");
      if (!manifest.empty()) files = manifest;
    }
    ids = files;
  }
  if (ids.empty()) throw ConfigError(data + ": no wav files to evaluate");

  std::string refs = ref_data.empty() ? data : ref_data;
  std::vector<std::pair<std::string, MetricReport>> rows(ids.size());
  std::vector<std::string> errors(ids.size());

  parallel_for(int64_t(ids.size()), [&](int64_t i) {
    const std::string& id = ids[size_t(i)];
    rows[size_t(i)].first = id;
    try {
      Waveform x_in = read_wav(data + "/" + id + ".wav");
      std::string ref_path = refs + "/" + id + ".wav";
      if (!fs::exists(ref_path)) throw FormatError("missing reference " + ref_path);
      Waveform x_ref = read_wav(ref_path);
      AnalysisConfig ucfg = cfg;
      ucfg.sample_rate = x_in.sample_rate;
      if (ms.neural && ucfg.sample_rate != stack->acfg.sample_rate)
        throw ConfigError(id + ": sample rate does not match checkpoint");
      Spectrum in_spec = stft(x_in, ucfg);
      Spectrum ref_spec = stft(x_ref, ucfg);
      Tensor phase = method_phase(ms, in_spec.log_amp, ucfg, a, stack ? &*stack : nullptr);
      Spectrum rec{in_spec.log_amp, phase, ucfg, x_in.size()};
      Waveform y = istft(rec);
      rows[size_t(i)].second = compute_report(ref_spec, phase, x_ref, y);
    } catch (const std::exception& e) {
      errors[size_t(i)] = e.what();
      MetricReport bad;
      bad.pd_ip = bad.pd_gd = bad.pd_iaf = bad.pd_tfid = bad.snr_db = bad.lsd_db =
          std::nan("");
      rows[size_t(i)].second = bad;
    }
  });

  write_metric_csv(out_csv, rows);
  int failures = 0;
  for (size_t i = 0; i < errors.size(); ++i)
    if (!errors[i].empty()) {
      ++failures;
      std::cerr << "error: " << ids[i] << ": " << errors[i] << "\n";
    }
  std::cout << "evaluated " << ids.size() - size_t(failures) << "/" << ids.size()
            << " utterances with " << method << " -> " << out_csv << "\n";
  return failures == 0 ? 0 : 1;
}

int cmd_info(const std::string& wav, const std::string& spec, const std::string& ckpt,
             const std::string& config) {
  if (!wav.empty()) {
    Waveform w = read_wav(wav);
    std::cout << wav << ": " << w.size() << " samples @ " << w.sample_rate << " Hz ("
              << double(w.size()) / w.sample_rate << " s)\n";
  }
  if (!spec.empty()) {
    Spectrum s = read_pfspec(spec);
    std::cout << spec << ": " << s.frames() << " frames x " << s.bins() << " bins, sr "
              << s.config.sample_rate << ", win " << s.config.win_len << ", hop "
              << s.config.hop_len << ", fft " << s.config.fft_size << "\n";
  }
  if (!ckpt.empty()) {
    auto entries = read_pfckpt(ckpt);
    if (has_entry(entries, "meta.config")) {
      int64_t params = 0;
      for (const auto& e : entries)
        if (e.name.rfind("gen.", 0) == 0 && e.name.rfind(".m") != e.name.size() - 2 &&
            e.name.rfind(".v") != e.name.size() - 2)
          params += e.t.numel();
      std::cout << ckpt << ": training state, epoch "
                << int64_t(find_entry(entries, "meta.epoch").t.item()) << ", generator params "
                << params << "\n";
    } else {
      AnalysisConfig acfg;
      PhaseModel m = load_model(ckpt, &acfg);
      const auto& c = m.config();
      std::cout << ckpt << ": " << (c.conditioned ? "refinement" : "prior") << " model, "
                << c.n_blocks << " blocks, " << c.channels << " channels, " << c.block_hidden
                << " hidden, kernel " << c.kernel << ", bins " << c.bins << ", params "
                << m.param_count() << ", analysis " << acfg.sample_rate << "/" << acfg.win_len
                << "/" << acfg.hop_len << "/" << acfg.fft_size << "\n";
    }
  }
  if (!config.empty()) {
    TrainConfig cfg = read_train_config(config);
    std::cout << config << ": stage " << (cfg.stage == TrainStage::prior ? "prior" : "refine")
              << ", epochs " << cfg.epochs << ", batch " << cfg.batch_size << ", segment "
              << cfg.segment_samples << ", lr0 " << cfg.lr0 << ", seed " << cfg.seed << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"phaseforge: speech phase reconstruction toolkit"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "synthesize a deterministic corpus");
  std::string gd_out, gd_kind = "harmonic";
  int gd_n = 64, gd_sr = 16000;
  uint64_t gd_seed = 0;
  double gd_dur = 0.5, gd_train = 0.8, gd_valid = 0.0;
  gen->add_option("--out", gd_out)->required();
  gen->add_option("--n", gd_n);
  gen->add_option("--seed", gd_seed);
  gen->add_option("--kind", gd_kind)->check(CLI::IsMember({"harmonic", "chirp", "noise_mix"}));
  gen->add_option("--duration", gd_dur);
  gen->add_option("--sr", gd_sr);
  gen->add_option("--train-frac", gd_train);
  gen->add_option("--valid-frac", gd_valid);

  // analyze
  auto* ana = app.add_subcommand("analyze", "wav -> PFSPEC spectrum dump");
  std::string an_in, an_out;
  int an_win = 320, an_hop = 80, an_fft = 1024;
  ana->add_option("--in", an_in)->required();
  ana->add_option("--out", an_out)->required();
  ana->add_option("--win", an_win);
  ana->add_option("--hop", an_hop);
  ana->add_option("--fft", an_fft);

  // reconstruct
  auto* rec = app.add_subcommand("reconstruct", "amplitude -> waveform");
  ReconstructArgs ra;
  rec->add_option("--method", ra.method)->required();
  rec->add_option("--in", ra.in)->required();
  rec->add_option("--out", ra.out)->required();
  rec->add_option("--ckpt", ra.ckpts, "prior checkpoint first, then refinement checkpoints");
  rec->add_option("--iters", ra.iters);
  rec->add_option("--beta", ra.beta);
  rec->add_option("--seed", ra.seed);
  rec->add_option("--init", ra.init)->check(CLI::IsMember({"zero", "random"}));
  rec->add_option("--ref", ra.ref, "reference wav; prints SNR");
  rec->add_option("--win", ra.win);
  rec->add_option("--hop", ra.hop);
  rec->add_option("--fft", ra.nfft);

  // train
  auto* tr = app.add_subcommand("train", "stage-wise training");
  std::string tr_stage, tr_config, tr_data, tr_out, tr_prior, tr_resume;
  tr->add_option("--stage", tr_stage)->required()->check(CLI::IsMember({"prior", "refine"}));
  tr->add_option("--config", tr_config)->required();
  tr->add_option("--data", tr_data)->required();
  tr->add_option("--out", tr_out)->required();
  tr->add_option("--prior-ckpt", tr_prior);
  tr->add_option("--resume", tr_resume);

  // eval
  auto* ev = app.add_subcommand("eval", "metric report over a directory");
  std::string ev_method, ev_data, ev_ref, ev_out;
  ReconstructArgs ea;
  ev->add_option("--method", ev_method)->required();
  ev->add_option("--data", ev_data)->required();
  ev->add_option("--ref-data", ev_ref);
  ev->add_option("--out", ev_out)->required();
  ev->add_option("--ckpt", ea.ckpts);
  ev->add_option("--iters", ea.iters);
  ev->add_option("--beta", ea.beta);
  ev->add_option("--seed", ea.seed);
  ev->add_option("--init", ea.init)->check(CLI::IsMember({"zero", "random"}));
  ev->add_option("--win", ea.win);
  ev->add_option("--hop", ea.hop);
  ev->add_option("--fft", ea.nfft);

  // info
  auto* in = app.add_subcommand("info", "inspect files");
  std::string if_wav, if_spec, if_ckpt, if_config;
  in->add_option("--wav", if_wav);
  in->add_option("--spec", if_spec);
  in->add_option("--ckpt", if_ckpt);
  in->add_option("--config", if_config);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (gen->parsed())
      return cmd_gen_data(gd_out, gd_n, gd_seed, gd_kind, gd_dur, gd_sr, gd_train, gd_valid);
    if (ana->parsed()) return cmd_analyze(an_in, an_out, an_win, an_hop, an_fft);
    if (rec->parsed()) return cmd_reconstruct(ra);
    if (tr->parsed())
      return cmd_train(tr_stage, tr_config, tr_data, tr_out, tr_prior, tr_resume);
    if (ev->parsed()) return cmd_eval(ev_method, ev_data, ev_ref, ev_out, ea);
    if (in->parsed()) return cmd_info(if_wav, if_spec, if_ckpt, if_config);
  } catch (const CLI::ValidationError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
