// Copyright 2026 PhaseForge Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "phaseforge/criteria.hpp"

#include <cmath>
#include <fstream>

namespace phaseforge {

namespace {

void check_pair(const Tensor& pred, const Tensor& target, const char* op) {
  if (pred.rank() != 2 || pred.shape() != target.shape())
    throw ShapeError(std::string(op) + ": phase matrices must share an [F,N] shape");
}

Tensor aw_mean(const Tensor& d) { return mean(anti_wrap(d)); }

}  // namespace

Tensor loss_ip(const Tensor& pred, const Tensor& target) {
  check_pair(pred, target, "loss_ip");
  return aw_mean(sub(pred, target));
}

Tensor loss_gd(const Tensor& pred, const Tensor& target) {
  check_pair(pred, target, "loss_gd");
  return aw_mean(sub(diff_freq(pred), diff_freq(target)));
}

Tensor loss_iaf(const Tensor& pred, const Tensor& target) {
  check_pair(pred, target, "loss_iaf");
  return aw_mean(sub(diff_time(pred), diff_time(target)));
}

Tensor loss_phase(const Tensor& pred, const Tensor& target) {
  return add(add(loss_ip(pred, target), loss_gd(pred, target)), loss_iaf(pred, target));
}

Tensor loss_tfidd(const Tensor& pred, const Tensor& target) {
  check_pair(pred, target, "loss_tfidd");
  return aw_mean(sub(diff_tfidd(pred), diff_tfidd(target)));
}

Tensor loss_tfrdd(const Tensor& pred, const Tensor& target) {
  check_pair(pred, target, "loss_tfrdd");
  return aw_mean(sub(diff_tfrdd(pred), diff_tfrdd(target)));
}

Tensor loss_tfid(const Tensor& pred, const Tensor& target) {
  return add(loss_tfidd(pred, target), loss_tfrdd(pred, target));
}

Tensor loss_adv_g(const Tensor& scores_fake) {
  return mean(relu(sub(1.0, scores_fake)));
}

Tensor loss_adv_d(const Tensor& scores_real, const Tensor& scores_fake) {
  return add(mean(relu(sub(1.0, scores_real))), mean(relu(add(scores_fake, 1.0))));
}

Tensor loss_fm(const std::vector<Tensor>& feats_fake, const std::vector<Tensor>& feats_real) {
  if (feats_fake.size() != feats_real.size() || feats_fake.empty())
    throw ShapeError("loss_fm: feature lists must be non-empty and the same length");
  Tensor total;
  for (size_t i = 0; i < feats_fake.size(); ++i) {
    if (feats_fake[i].shape() != feats_real[i].shape())
      throw ShapeError("loss_fm: feature shape mismatch at layer " + std::to_string(i));
    Tensor d = sub(feats_fake[i], feats_real[i]);
    Tensor mse = mean(mul(d, d));
    total = total.defined() ? add(total, mse) : mse;
  }
  return total;
}

Tensor generator_objective(const Tensor& pred, const Tensor& target, const Psd& psd,
                           const LossWeights& weights, bool with_tfid) {
  check_pair(pred, target, "generator_objective");
  Tensor lp = loss_phase(pred, target);
  PsdOut fake = psd.forward(pred);
  std::vector<Tensor> real_feats;
  {
    NoGradGuard ng;
    real_feats = psd.forward(target).feats;
  }
  Tensor adv_fm = add(loss_adv_g(fake.score), loss_fm(fake.feats, real_feats));
  Tensor total = add(mul(lp, weights.lambda_p), mul(adv_fm, weights.lambda_psd));
  if (with_tfid) total = add(total, loss_tfid(pred, target));
  return total;
}

// ---------------------------------------------------------------------------
// metrics

double pd_metric(const Tensor& pred, const Tensor& target, PdKind kind) {
  check_pair(pred, target, "pd_metric");
  if (kind == PdKind::tfid)
    return 0.5 * (pd_metric(pred, target, PdKind::tfidd) +
                  pd_metric(pred, target, PdKind::tfrdd));
  NoGradGuard ng;
  auto apply = [&](const Tensor& x) {
    switch (kind) {
      case PdKind::ip: return x;
      case PdKind::gd: return diff_freq(x);
      case PdKind::iaf: return diff_time(x);
      case PdKind::tfidd: return diff_tfidd(x);
      case PdKind::tfrdd: return diff_tfrdd(x);
      default: return x;
    }
  };
  Tensor dp = apply(pred), dt = apply(target);
  int64_t frames = pred.dim(0), bins = pred.dim(1);
  double acc = 0.0;
  for (int64_t n = 0; n < bins; ++n) {
    double sq = 0.0;
    for (int64_t f = 0; f < frames; ++f) {
      double e = anti_wrap(dt.at(f, n) - dp.at(f, n));
      sq += e * e;
    }
    acc += std::sqrt(sq / double(frames));
  }
  return acc / double(bins);
}

double snr_db(const Waveform& rec, const Waveform& ref) {
  size_t n = std::min(rec.samples.size(), ref.samples.size());
  double sig = 0.0, err = 0.0;
  for (size_t i = 0; i < n; ++i) {
    double x = ref.samples[i];
    double d = x - rec.samples[i];
    sig += x * x;
    err += d * d;
  }
  if (err == 0.0) return 120.0;
  if (sig == 0.0) return -120.0;
  double v = 10.0 * std::log10(sig / err);
  return std::min(std::max(v, -120.0), 120.0);
}

double lsd_db(const Tensor& rec_log_amp, const Tensor& ref_log_amp) {
  if (rec_log_amp.rank() != 2 || rec_log_amp.shape() != ref_log_amp.shape())
    throw ShapeError("lsd_db: log-amplitude matrices must share an [F,N] shape");
  const double lo = std::log(kAmpFloor);
  const double k = 20.0 / std::log(10.0);
  int64_t frames = rec_log_amp.dim(0), bins = rec_log_amp.dim(1);
  double acc = 0.0;
  for (int64_t f = 0; f < frames; ++f) {
    double sq = 0.0;
    for (int64_t n = 0; n < bins; ++n) {
      double a = std::max(rec_log_amp.at(f, n), lo);
      double b = std::max(ref_log_amp.at(f, n), lo);
      double d = k * (a - b);
      sq += d * d;
    }
    acc += std::sqrt(sq / double(bins));
  }
  return acc / double(frames);
}

MetricReport compute_report(const Spectrum& ref, const Tensor& pred_phase,
                            const Waveform& ref_wave, const Waveform& rec_wave) {
  MetricReport r;
  r.pd_ip = pd_metric(pred_phase, ref.phase, PdKind::ip);
  r.pd_gd = pd_metric(pred_phase, ref.phase, PdKind::gd);
  r.pd_iaf = pd_metric(pred_phase, ref.phase, PdKind::iaf);
  r.pd_tfid = pd_metric(pred_phase, ref.phase, PdKind::tfid);
  r.snr_db = snr_db(rec_wave, ref_wave);
  Spectrum rec_spec = stft(rec_wave, ref.config);
  r.lsd_db = lsd_db(rec_spec.log_amp, ref.log_amp);
  return r;
}

void write_metric_csv(const std::string& path,
                      const std::vector<std::pair<std::string, MetricReport>>& rows) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path);
  out << "utt,pd_ip,pd_gd,pd_iaf,pd_tfid,snr_db,lsd_db\n";
  MetricReport sum;
  out.precision(9);
  for (const auto& [id, r] : rows) {
    out << id << "," << r.pd_ip << "," << r.pd_gd << "," << r.pd_iaf << ","
        << r.pd_tfid << "," << r.snr_db << "," << r.lsd_db << "\n";
    sum.pd_ip += r.pd_ip;
    sum.pd_gd += r.pd_gd;
    sum.pd_iaf += r.pd_iaf;
    sum.pd_tfid += r.pd_tfid;
    sum.snr_db += r.snr_db;
    sum.lsd_db += r.lsd_db;
  }
  double n = rows.empty() ? 1.0 : double(rows.size());
  out << "summary," << sum.pd_ip / n << "," << sum.pd_gd / n << ","
      << sum.pd_iaf / n << "," << sum.pd_tfid / n << "," << sum.snr_db / n
      << "," << sum.lsd_db / n << "\n";
}

}  // namespace phaseforge
