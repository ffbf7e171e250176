#include "sensia/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "sensia/checkpoint.hpp"
#include "sensia/errors.hpp"

namespace sensia {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw InvalidArgument("train.learning_rate must be positive");
  if (batch_size < 2) throw InvalidArgument("train.batch_size must be >= 2");
  if (!(warmup_ratio >= 0.0 && warmup_ratio <= 1.0)) {
    throw InvalidArgument("train.warmup_ratio must be in [0, 1]");
  }
  if (!(clip_norm > 0.0)) throw InvalidArgument("train.clip_norm must be positive");
  if (!(label_smoothing >= 0.0 && label_smoothing < 1.0)) {
    throw InvalidArgument("train.label_smoothing must be in [0, 1)");
  }
  if (eval_every == 0) throw InvalidArgument("train.eval_every must be positive");
  if (max_len < 2) throw InvalidArgument("train.max_len must be >= 2");
}

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string metrics_csv_line(const MetricsRow& r) {
  std::ostringstream out;
  out << r.step << ',' << phase_name(r.phase) << ',' << fmt_double(r.weights.sns) << ','
      << fmt_double(r.weights.ctx) << ',' << fmt_double(r.weights.lm) << ','
      << fmt_double(r.l_sns) << ',' << fmt_double(r.l_ctx) << ',' << fmt_double(r.l_lm) << ','
      << fmt_double(r.l_total) << ',' << fmt_double(r.eval.recall_s2t) << ','
      << fmt_double(r.eval.recall_t2s) << ',' << fmt_double(r.eval.entropy_tgt) << ','
      << fmt_double(r.eval.ppl_tgt) << ',' << fmt_double(r.lr);
  return out.str();
}

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InvalidArgument("cannot write " + path);
  out << kMetricsHeader << "\n";
  for (const MetricsRow& r : rows) out << metrics_csv_line(r) << "\n";
}

std::vector<MetricsRow> read_metrics_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader) {
    throw ParseError("metrics CSV header mismatch", 1);
  }
  std::vector<MetricsRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cols.push_back(c);
    if (cols.size() != 14) throw ParseError("metrics row needs 14 columns", line_no);
    MetricsRow r;
    try {
      r.step = std::stoul(cols[0]);
      r.phase = cols[1] == "alignment" ? Phase::kAlignment
                : cols[1] == "joint"   ? Phase::kJoint
                                       : Phase::kPolish;
      r.weights = {std::stod(cols[2]), std::stod(cols[3]), std::stod(cols[4])};
      r.l_sns = std::stod(cols[5]);
      r.l_ctx = std::stod(cols[6]);
      r.l_lm = std::stod(cols[7]);
      r.l_total = std::stod(cols[8]);
      r.eval.recall_s2t = std::stod(cols[9]);
      r.eval.recall_t2s = std::stod(cols[10]);
      r.eval.entropy_tgt = std::stod(cols[11]);
      r.eval.ppl_tgt = std::stod(cols[12]);
      r.lr = std::stod(cols[13]);
    } catch (const std::exception&) {
      throw ParseError("bad number in metrics row", line_no);
    }
    rows.push_back(r);
  }
  return rows;
}

double clip_gradients(std::vector<std::span<double>>& grads, double clip_norm) {
  if (!(clip_norm > 0.0)) throw InvalidArgument("clip_norm must be positive");
  double sq = 0.0;
  for (const auto& g : grads) {
    for (double x : g) sq += x * x;
  }
  const double norm = std::sqrt(sq);
  if (norm > clip_norm) {
    const double factor = clip_norm / norm;
    for (auto& g : grads) {
      for (double& x : g) x *= factor;
    }
  }
  return norm;
}

double lr_at(std::size_t step, const TrainConfig& cfg) {
  const double warmup = cfg.warmup_ratio * static_cast<double>(cfg.total_steps);
  const auto s = static_cast<double>(step);
  if (warmup <= 0.0 || s >= warmup) return cfg.learning_rate;
  return cfg.learning_rate * s / warmup;
}

AdamOptimizer::State& AdamOptimizer::state_for(const std::string& name, std::size_t n) {
  for (auto& [key, st] : state_) {
    if (key == name) return st;
  }
  state_.push_back({name, State{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), 0}});
  return state_.back().second;
}

void AdamOptimizer::step(std::vector<Parameter>& params, const std::vector<bool>& trainable,
                         double lr) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!trainable[i]) continue;
    Parameter& p = params[i];
    State& st = state_for(p.name, p.tensor.size());
    ++st.t;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(st.t));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(st.t));
    auto values = p.tensor.mutable_values();
    const auto grad = p.tensor.grad();
    for (std::size_t j = 0; j < values.size(); ++j) {
      const double g = grad.empty() ? 0.0 : grad[j];
      st.m[j] = beta1_ * st.m[j] + (1.0 - beta1_) * g;
      st.v[j] = beta2_ * st.v[j] + (1.0 - beta2_) * g * g;
      const double m_hat = st.m[j] / bc1;
      const double v_hat = st.v[j] / bc2;
      values[j] -= lr * m_hat / (std::sqrt(v_hat) + eps_);
    }
  }
}

double recall_at_1(const std::vector<std::vector<double>>& a,
                   const std::vector<std::vector<double>>& b) {
  if (a.empty() || a.size() != b.size()) throw InvalidArgument("recall needs paired, non-empty sets");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    std::size_t best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < b.size(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a[i].size(); ++k) s += a[i][k] * b[j][k];
      if (s > best_score) {
        best_score = s;
        best = j;
      }
    }
    if (best == i) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(a.size());
}

namespace {

std::vector<std::vector<double>> tensor_rows(const ad::Tensor& t) {
  std::vector<std::vector<double>> rows(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t i = 0; i < t.rows(); ++i) {
    for (std::size_t j = 0; j < t.cols(); ++j) rows[i][j] = t.at(i, j);
  }
  return rows;
}

PaddedSequences side(const std::vector<TokenizedPair>& pairs, bool source, int pad_id) {
  std::vector<std::vector<int>> rows;
  rows.reserve(pairs.size());
  for (const TokenizedPair& p : pairs) rows.push_back(source ? p.src : p.tgt);
  return pad_sequences(rows, pad_id);
}

}  // namespace

NllTotals next_token_nll(const std::vector<SentenceForward>& tgt) {
  NllTotals out;
  for (const SentenceForward& f : tgt) {
    const std::size_t T = f.length, V = f.logits.cols();
    for (std::size_t t = 0; t + 1 < T; ++t) {
      if (!f.mask[t] || !f.mask[t + 1]) continue;
      double max_v = -std::numeric_limits<double>::infinity();
      for (std::size_t v = 0; v < V; ++v) max_v = std::max(max_v, f.logits.at(t, v));
      double total = 0.0;
      for (std::size_t v = 0; v < V; ++v) total += std::exp(f.logits.at(t, v) - max_v);
      out.sum += max_v + std::log(total) - f.logits.at(t, f.ids[t + 1]);
      ++out.count;
    }
  }
  return out;
}

EvalMetrics evaluate(const BackpackModel& model, const std::vector<TokenizedPair>& dev,
                     const TrainConfig& cfg, double tau_pool, int pad_id) {
  if (dev.empty()) throw InvalidArgument("evaluation needs a non-empty dev set");
  ad::NoGradGuard no_grad;
  const PaddedSequences src_seqs = side(dev, true, pad_id);
  const PaddedSequences tgt_seqs = side(dev, false, pad_id);
  const bool by_context = cfg.retrieval == RetrievalEmbedding::kContext;
  const bool contextual_pool = cfg.sense_pooling == SensePooling::kContextual;
  const auto src = forward_sentences(
      model, src_seqs, {.context = true, .mixture = !by_context && contextual_pool, .logits = false});
  const auto tgt = forward_sentences(model, tgt_seqs, {.context = true, .mixture = true, .logits = true});

  EvalMetrics m;
  const ad::Tensor zs = by_context ? context_embeddings(src)
                                   : sense_embeddings(src, tau_pool, cfg.sense_pooling);
  const ad::Tensor zt = by_context ? context_embeddings(tgt)
                                   : sense_embeddings(tgt, tau_pool, cfg.sense_pooling);
  const auto rs = tensor_rows(zs);
  const auto rt = tensor_rows(zt);
  m.recall_s2t = recall_at_1(rs, rt);
  m.recall_t2s = recall_at_1(rt, rs);

  double entropy_sum = 0.0;
  std::size_t entropy_count = 0;
  for (const SentenceForward& f : tgt) {
    const std::size_t T = f.length, K = f.senses.shape()[1];
    if (cfg.entropy == EntropySource::kNormPooled) {
      const ad::Tensor pi = norm_pool_weights(f.senses, tau_pool);
      for (std::size_t t = 0; t < T; ++t) {
        if (!f.mask[t]) continue;
        double h = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
          const double p = pi.at(t, k);
          if (p > 0.0) h -= p * std::log(p);
        }
        entropy_sum += h;
        ++entropy_count;
      }
    } else {
      for (std::size_t t = 0; t < T; ++t) {
        if (!f.mask[t]) continue;
        double h = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
          double p = 0.0;
          for (std::size_t j = 0; j <= t; ++j) p += f.alpha.at(t, j * K + k);
          if (p > 0.0) h -= p * std::log(p);
        }
        entropy_sum += h;
        ++entropy_count;
      }
    }
  }
  const NllTotals nll = next_token_nll(tgt);
  m.entropy_tgt = entropy_count ? entropy_sum / static_cast<double>(entropy_count) : 0.0;
  m.ce_tgt = nll.count ? nll.sum / static_cast<double>(nll.count) : 0.0;
  m.ppl_tgt = std::exp(m.ce_tgt);
  m.target_tokens = nll.count;
  return m;
}

namespace {

void check_finite_loss(const LossBreakdown& b, std::size_t step) {
  if (b.l_sns && !std::isfinite(*b.l_sns)) throw NonFiniteLoss("l_sns", step);
  if (b.l_ctx && !std::isfinite(*b.l_ctx)) throw NonFiniteLoss("l_ctx", step);
  if (b.l_lm && !std::isfinite(*b.l_lm)) throw NonFiniteLoss("l_lm", step);
  if (!std::isfinite(b.l_total)) throw NonFiniteLoss("l_total", step);
}

LossSettings settings_for(const PhaseWeights& pw, const TrainConfig& tc, const ScheduleConfig& sc) {
  LossSettings s;
  s.temps = pw.temps;
  s.tau_pool = sc.tau_pool;
  s.label_smoothing = tc.label_smoothing;
  s.pooling = tc.sense_pooling;
  return s;
}

}  // namespace

TrainResult train(BackpackModel& model, const std::vector<TokenizedPair>& train_pairs,
                  const std::vector<TokenizedPair>& dev_pairs, const TrainConfig& train_cfg,
                  const ScheduleConfig& schedule_cfg, int pad_id, const TrainHooks& hooks) {
  train_cfg.validate();
  schedule_cfg.validate();
  if (train_cfg.total_steps != schedule_cfg.total_steps) {
    throw InvalidArgument("train.total_steps and schedule total_steps differ");
  }
  if (train_pairs.size() < 2) throw InvalidArgument("training corpus needs at least two pairs");
  if (dev_pairs.size() < 2) throw InvalidArgument("dev set needs at least two pairs");

  const std::size_t total = train_cfg.total_steps;
  BatchStream stream(train_pairs, train_cfg.batch_size, pad_id, train_cfg.seed);
  const std::vector<TokenizedPair> monitor_pairs(
      dev_pairs.begin(), dev_pairs.begin() + std::min(train_cfg.batch_size, dev_pairs.size()));
  const TokenizedBatch monitor = make_batch(monitor_pairs, pad_id);

  TrainResult result;
  result.polish_start_step = phase_start_step(Phase::kPolish, schedule_cfg);
  const std::size_t joint_start = phase_start_step(Phase::kJoint, schedule_cfg);
  AdamOptimizer adam;
  Phase trainable_phase = Phase::kAlignment;
  std::vector<bool> trainable = freeze_mask(trainable_phase, model);

  if (!hooks.checkpoint_dir.empty()) std::filesystem::create_directories(hooks.checkpoint_dir);
  auto ckpt = [&](const std::string& name) {
    if (!hooks.checkpoint_dir.empty()) {
      save_checkpoint(model, (std::filesystem::path(hooks.checkpoint_dir) / name).string());
    }
  };

  auto record = [&](std::size_t step) {
    const PhaseWeights pw = weights_at(step, schedule_cfg);
    MetricsRow row;
    row.step = step;
    row.phase = pw.phase;
    row.weights = pw.weights;
    row.lr = lr_at(step, train_cfg);
    {
      ad::NoGradGuard no_grad;
      const LossBreakdown all = total_loss(model, monitor, {1.0, 1.0, 1.0},
                                           settings_for(pw, train_cfg, schedule_cfg));
      row.l_sns = *all.l_sns;
      row.l_ctx = *all.l_ctx;
      row.l_lm = *all.l_lm;
      row.l_total = combine_losses(row.l_sns, row.l_ctx, row.l_lm, pw.weights);
    }
    row.eval = evaluate(model, dev_pairs, train_cfg, schedule_cfg.tau_pool, pad_id);
    result.rows.push_back(row);
    if (hooks.on_eval) hooks.on_eval(row, model);
    ckpt("latest.ckpt");
  };

  for (std::size_t step = 0; step < total; ++step) {
    const PhaseWeights pw = weights_at(step, schedule_cfg);
    const bool boundary = step == joint_start || step == result.polish_start_step;
    if (step % train_cfg.eval_every == 0 || boundary) record(step);

    if (pw.phase != trainable_phase) {
      if (pw.freeze_sense_machinery) {
        model.untie_output_head();
        ckpt("polish_start.ckpt");
      }
      trainable_phase = pw.phase;
      trainable = freeze_mask(trainable_phase, model);
      for (std::size_t i = 0; i < model.parameters().size(); ++i) {
        model.parameters()[i].tensor.set_requires_grad(trainable[i]);
      }
    }

    TokenizedBatch batch = stream.next();
    for (Parameter& p : model.parameters()) p.tensor.zero_grad();
    const LossBreakdown loss =
        total_loss(model, batch, pw.weights, settings_for(pw, train_cfg, schedule_cfg));
    check_finite_loss(loss, step);
    loss.total.backward();

    std::vector<std::span<double>> grads;
    for (std::size_t i = 0; i < model.parameters().size(); ++i) {
      if (trainable[i]) grads.push_back(model.parameters()[i].tensor.mutable_grad());
    }
    clip_gradients(grads, train_cfg.clip_norm);
    adam.step(model.parameters(), trainable, lr_at(step, train_cfg));
  }
  record(total);
  for (Parameter& p : model.parameters()) p.tensor.set_requires_grad(true);
  ckpt("final.ckpt");
  return result;
}

}  // namespace sensia
