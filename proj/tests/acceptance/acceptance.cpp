// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "sensia/ablation.hpp"
#include "sensia/checkpoint.hpp"
#include "sensia/config.hpp"
#include "sensia/corpus.hpp"
#include "sensia/geometry.hpp"
#include "sensia/mc_scorer.hpp"
#include "sensia/objectives.hpp"
#include "sensia/schedule.hpp"
#include "sensia/trainer.hpp"
#include "support.hpp"

using namespace sensia;
using Eigen::MatrixXd;
namespace fs = std::filesystem;

namespace {

// Frozen from tools/oracles/procrustes_baseline.py (50 seeds, N=1000, d=16).
constexpr double kRandomProcrustesCeiling = 0.136;

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + std::string("failed: ") + what;
    }
  }
  void note(const std::string& what) { detail += (detail.empty() ? "" : "; ") + what; }
};

std::string num(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*g", digits, v);
  return buf;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// Shared desk run

struct DeskData {
  RunConfig cfg;
  Vocab vocab;
  std::vector<TokenizedPair> train, dev;
};

DeskData desk_data() {
  DeskData d;
  d.cfg = desk_config();
  const SyntheticCorpus corpus = generate_synthetic(d.cfg.synthetic.seed, d.cfg.synthetic.pairs);
  const std::size_t n_train = d.cfg.synthetic.pairs - d.cfg.synthetic.dev;
  const std::vector<ParallelPair> train(corpus.pairs.begin(), corpus.pairs.begin() + n_train);
  const std::vector<ParallelPair> dev(corpus.pairs.begin() + n_train, corpus.pairs.end());
  std::vector<ParallelPair> all = train;
  all.insert(all.end(), dev.begin(), dev.end());
  d.vocab = build_vocab(all);
  d.cfg.model.vocab_size = d.vocab.size();
  d.train = tokenize_pairs(train, d.vocab, d.cfg.train.max_len);
  d.dev = tokenize_pairs(dev, d.vocab, d.cfg.train.max_len);
  return d;
}

struct DeskRun {
  BackpackModel model;
  TrainResult result;
  std::vector<std::vector<double>> polish_start_values;  // per parameter, in memory
  std::string metrics_csv;
  double seconds = 0.0;
};

DeskRun desk_run(const DeskData& d, const fs::path& dir) {
  fs::create_directories(dir);
  DeskRun run{BackpackModel(d.cfg.model, d.cfg.train.seed), {}, {}, {}, 0.0};
  const std::size_t polish_start = phase_start_step(Phase::kPolish, d.cfg.schedule);
  TrainHooks hooks;
  hooks.checkpoint_dir = dir.string();
  hooks.on_eval = [&](const MetricsRow& row, const BackpackModel& m) {
    std::fprintf(stderr, "  step %4zu %-9s recall %.3f/%.3f entropy %.3f ppl %.2f\n", row.step,
                 phase_name(row.phase).c_str(), row.eval.recall_s2t, row.eval.recall_t2s,
                 row.eval.entropy_tgt, row.eval.ppl_tgt);
    if (row.step == polish_start) {
      run.polish_start_values.clear();
      for (const auto& p : m.parameters()) {
        run.polish_start_values.emplace_back(p.tensor.values().begin(), p.tensor.values().end());
      }
    }
  };
  const auto t0 = std::chrono::steady_clock::now();
  run.result = train(run.model, d.train, d.dev, d.cfg.train, d.cfg.schedule, d.vocab.pad_id(), hooks);
  run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_metrics_csv((dir / "metrics.csv").string(), run.result.rows);
  run.metrics_csv = slurp(dir / "metrics.csv");
  return run;
}

const MetricsRow* row_at(const TrainResult& r, std::size_t step) {
  for (const auto& row : r.rows) {
    if (row.step == step) return &row;
  }
  return nullptr;
}

// ---------------------------------------------------------------------------
// 1. Gradient suite

Outcome criterion_gradients(const DeskData& d) {
  Outcome out;
  BackpackModel model(d.cfg.model, 4242);
  testing::randomize_parameters(model, 4242);
  const std::vector<TokenizedPair> few(d.train.begin(), d.train.begin() + 4);
  const TokenizedBatch batch = make_batch(few, d.vocab.pad_id());
  LossSettings settings;
  std::vector<ad::Tensor> leaves;
  std::size_t total = 0;
  for (const auto& p : model.parameters()) {
    leaves.push_back(p.tensor);
    total += p.tensor.size();
  }
  // Uniform over all coordinates, so large tensors get proportionally more.
  Rng rng(17, Stream::kSubsample);
  std::vector<std::pair<std::size_t, std::size_t>> coords;
  for (int i = 0; i < 240; ++i) {
    std::size_t flat = rng.below(total), which = 0;
    while (flat >= leaves[which].size()) flat -= leaves[which++].size();
    coords.emplace_back(which, flat);
  }
  const std::vector<std::pair<std::string, LossWeights>> losses{
      {"L_sns", {1, 0, 0}}, {"L_ctx", {0, 1, 0}}, {"L_lm", {0, 0, 1}}, {"L_total", {0.4, 0.4, 0.2}}};
  for (const auto& [name, w] : losses) {
    auto f = [&, w = w] { return total_loss(model, batch, w, settings).total; };
    // At desk scale the loss is O(ln V) while many sampled partials are O(1e-6), so a
    // 1e-5 step is dominated by cancellation; 1e-3 sits in the flat part of the error curve.
    const testing::GradCheck g = testing::finite_difference_check(f, leaves, coords, 1e-3);
    out.require(g.checked >= 200 && g.worst <= 1e-4, name + " worst " + num(g.worst));
    out.note(name + " " + std::to_string(g.checked) + " coords worst " + num(g.worst, 3));
  }
  return out;
}

// ---------------------------------------------------------------------------
// 2. InfoNCE closed forms

Outcome criterion_infonce() {
  Outcome out;
  for (std::size_t B : {2u, 4u, 8u}) {
    std::vector<double> v(B * 4, 0.0);
    for (std::size_t i = 0; i < B; ++i) v[i * 4 + 1] = 1.0;
    const ad::Tensor u = ad::Tensor::from({B, 4}, v);
    const double loss = info_nce_symmetric(u, u, 0.05).item();
    const double err = std::abs(loss - std::log(static_cast<double>(B)));
    out.require(err <= 1e-9, "B=" + std::to_string(B) + " error " + num(err));
  }
  const ad::Tensor eye = ad::Tensor::from({2, 2}, {1, 0, 0, 1});
  const double l2 = info_nce_symmetric(eye, eye, 1.0).item();
  out.require(std::abs(l2 - 0.313262) <= 1e-6, "orthonormal B=2 gave " + num(l2, 10));
  out.note("B=2 orthonormal " + num(l2, 10));
  return out;
}

// ---------------------------------------------------------------------------
// 3. Scheduler

Outcome criterion_schedule() {
  Outcome out;
  const ScheduleConfig cfg;
  auto same = [](const LossWeights& a, const LossWeights& b) {
    return a.sns == b.sns && a.ctx == b.ctx && a.lm == b.lm;
  };
  out.require(same(weights_at_progress(0.0, cfg).weights, {0.54, 0.44, 0.02}), "p=0 triple");
  out.require(same(weights_at_progress(cfg.a, cfg).weights, {0.40, 0.40, 0.20}), "p=a triple");
  out.require(same(weights_at_progress(cfg.z, cfg).weights, {0.15, 0.15, 0.70}), "p=z triple");
  out.require(same(weights_at_progress(1.0, cfg).weights, {0.15, 0.15, 0.70}), "p=1 triple");
  double jump = 0.0;
  for (double b : {cfg.a, cfg.z}) {
    const auto lo = weights_at_progress(std::nextafter(b, 0.0), cfg).weights;
    const auto hi = weights_at_progress(b, cfg).weights;
    jump = std::max({jump, std::abs(lo.sns - hi.sns), std::abs(lo.ctx - hi.ctx), std::abs(lo.lm - hi.lm)});
  }
  out.require(jump <= 1e-9, "boundary jump " + num(jump));
  Rng rng(3, Stream::kSynthetic);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const double a = rng.uniform(-10, 10), b = rng.uniform(-10, 10);
    worst = std::max({worst, std::abs(interp(a, b, 0.0) - a), std::abs(interp(a, b, 1.0) - b),
                      std::abs(interp(a, b, 0.5) - 0.5 * (a + b))});
  }
  out.require(worst <= 1e-12, "interp error " + num(worst));
  out.note("boundary jump " + num(jump, 3) + ", interp error " + num(worst, 3));
  return out;
}

// ---------------------------------------------------------------------------
// 4-6, 11. Desk run

Outcome criterion_adaptation(const DeskData& d, const DeskRun& run) {
  Outcome out;
  const std::size_t polish_start = run.result.polish_start_step;
  const MetricsRow* joint_end = row_at(run.result, polish_start);
  const MetricsRow& last = run.result.rows.back();
  const double k = static_cast<double>(d.cfg.model.n_senses);
  const double lo = 0.05 * std::log(k), hi = 0.95 * std::log(k);
  out.require(d.train.size() + d.dev.size() >= 5000, "corpus size");
  out.require(d.cfg.train.total_steps <= 2000, "step budget");
  out.require(joint_end != nullptr, "no evaluation at the end of joint");
  if (joint_end) {
    out.require(joint_end->eval.recall_s2t >= 0.90, "recall_s2t " + num(joint_end->eval.recall_s2t));
    out.require(joint_end->eval.recall_t2s >= 0.90, "recall_t2s " + num(joint_end->eval.recall_t2s));
    out.note("step " + std::to_string(polish_start) + " recall " + num(joint_end->eval.recall_s2t, 4) +
             "/" + num(joint_end->eval.recall_t2s, 4));
  }
  out.require(last.eval.entropy_tgt > lo && last.eval.entropy_tgt < hi,
              "entropy " + num(last.eval.entropy_tgt));
  out.note("final entropy " + num(last.eval.entropy_tgt, 4) + " in (" + num(lo, 4) + ", " + num(hi, 4) +
           "), final recall " + num(last.eval.recall_s2t, 4) + "/" + num(last.eval.recall_t2s, 4) + ", " +
           num(run.seconds, 4) + " s");
  return out;
}

Outcome criterion_mixture(const DeskData& d, const DeskRun& run) {
  Outcome out;
  const int pad = d.vocab.pad_id();
  const double full = cross_entropy_eval(run.model, d.dev, MixtureMode::full(), pad).ce;
  const double top1 = cross_entropy_eval(run.model, d.dev, MixtureMode::topk(1), pad).ce;
  const double uniform = cross_entropy_eval(run.model, d.dev, MixtureMode::uniform(), pad).ce;
  const double ln_v = std::log(static_cast<double>(d.vocab.size()));
  out.require(full < top1, "CE(full) < CE(top1)");
  out.require(top1 < uniform, "CE(top1) < CE(uniform)");
  out.require(std::abs(uniform - ln_v) <= 0.25 * ln_v, "CE(uniform) within 25% of ln|V|");
  out.note("CE full " + num(full, 12) + ", top1 " + num(top1, 12) + ", uniform " + num(uniform, 8) +
           ", ln|V| " + num(ln_v, 6));

  // How much of each (t, j) block the leading sense already holds; near 1 means top-1
  // barely changes the mixture.
  std::vector<std::vector<int>> rows;
  for (const auto& p : d.dev) rows.push_back(p.tgt);
  ad::NoGradGuard no_grad;
  const auto fwd = forward_sentences(run.model, pad_sequences(rows, pad),
                                     {.context = true, .mixture = true, .logits = false});
  const std::size_t K = d.cfg.model.n_senses;
  double lead = 0.0, mass = 0.0;
  for (const auto& f : fwd) {
    for (std::size_t t = 0; t < f.length; ++t) {
      for (std::size_t j = 0; j <= t; ++j) {
        double m = 0.0, top = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
          m += f.alpha.at(t, j * K + k);
          top = std::max(top, f.alpha.at(t, j * K + k));
        }
        lead += top;
        mass += m;
      }
    }
  }
  out.note("leading-sense share " + num(lead / mass, 6));
  return out;
}

Outcome criterion_polish(const DeskRun& run, const fs::path& dir) {
  Outcome out;
  const auto& params = run.model.parameters();
  out.require(!run.polish_start_values.empty(), "no snapshot at polish start");
  std::size_t frozen = 0;
  for (std::size_t i = 0; i < params.size() && i < run.polish_start_values.size(); ++i) {
    if (is_trainable(params[i].group, Phase::kPolish)) continue;
    ++frozen;
    const auto now = params[i].tensor.values();
    const auto& then = run.polish_start_values[i];
    const bool same = now.size() == then.size() &&
                      std::memcmp(now.data(), then.data(), now.size() * sizeof(double)) == 0;
    out.require(same, params[i].name + " changed during polish");
  }
  // The same check on the stored checkpoints.
  const BackpackModel start = load_checkpoint((dir / "polish_start.ckpt").string());
  const BackpackModel end = load_checkpoint((dir / "final.ckpt").string());
  for (std::size_t i = 0; i < end.parameters().size(); ++i) {
    const auto& p = end.parameters()[i];
    if (is_trainable(p.group, Phase::kPolish)) continue;
    const auto a = start.find(p.name)->tensor.values(), b = p.tensor.values();
    out.require(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0,
                p.name + " differs between checkpoints");
  }
  const MetricsRow* first = row_at(run.result, run.result.polish_start_step);
  const MetricsRow& last = run.result.rows.back();
  out.require(first && last.eval.ppl_tgt <= first->eval.ppl_tgt, "ppl rose during polish");
  if (first) {
    out.note(std::to_string(frozen) + " frozen tensors identical; ppl " + num(first->eval.ppl_tgt, 6) +
             " -> " + num(last.eval.ppl_tgt, 6));
  }
  return out;
}

Outcome criterion_determinism(const DeskRun& a, const DeskRun& b) {
  Outcome out;
  out.require(!a.metrics_csv.empty() && a.metrics_csv == b.metrics_csv, "metrics CSVs differ");
  out.note(std::to_string(a.metrics_csv.size()) + " bytes compared");
  return out;
}

// ---------------------------------------------------------------------------
// 7. Procrustes

MatrixXd gaussian(Eigen::Index r, Eigen::Index c, Rng& rng) {
  MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rng.normal();
  return m;
}

MatrixXd unit_rows(MatrixXd m) {
  m.rowwise().normalize();
  return m;
}

Outcome criterion_procrustes() {
  Outcome out;
  Rng rng(2024, Stream::kSynthetic);
  const MatrixXd e = unit_rows(gaussian(500, 16, rng));
  const MatrixXd r = random_orthogonal(16, rng);
  const ProcrustesReport planted = procrustes_align(e * r, e);
  out.require(planted.mean_cosine >= 0.999, "planted " + num(planted.mean_cosine));

  const MatrixXd t2 = unit_rows(gaussian(1000, 16, rng)), e2 = unit_rows(gaussian(1000, 16, rng));
  const ProcrustesReport random = procrustes_align(t2, e2);
  out.require(random.mean_cosine < planted.mean_cosine, "random not below planted");
  out.require(random.mean_cosine < kRandomProcrustesCeiling, "random above Monte-Carlo ceiling");
  out.require(random.mean_cosine < 0.3, "random above 0.3");

  std::size_t trials = 0;
  for (const auto& [t, target] : {std::pair{MatrixXd(e * r), e}, std::pair{t2, e2}}) {
    const double best = (t * procrustes_q(t, target) - target).norm();
    for (int i = 0; i < 1000; ++i) {
      ++trials;
      const double other = (t * random_orthogonal(16, rng) - target).norm();
      if (best > other) {
        out.require(false, "random orthogonal matrix beat Q");
        break;
      }
    }
  }
  out.note("planted " + num(planted.mean_cosine, 8) + ", random " + num(random.mean_cosine, 4) +
           " (ceiling " + num(kRandomProcrustesCeiling, 3) + "), " + std::to_string(trials) +
           " random Q compared");
  return out;
}

// ---------------------------------------------------------------------------
// 8. Topology

std::vector<double> counting_ranks(const std::vector<double>& v) {
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    double less = 0, equal = 0;
    for (double x : v) {
      less += x < v[i];
      equal += x == v[i];
    }
    r[i] = less + (equal + 1) / 2;
  }
  return r;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

Outcome criterion_topology() {
  Outcome out;
  Rng rng(808, Stream::kSynthetic);
  double worst_rho = 0.0;
  for (int i = 0; i < 100; ++i) {
    const MatrixXd v = gaussian(4, 16, rng);
    worst_rho = std::max(worst_rho, std::abs(topology_rho(v, v * random_orthogonal(16, rng)) - 1.0));
  }
  out.require(worst_rho <= 1e-9, "rho(V, VQ) off by " + num(worst_rho));

  double worst_sp = 0.0;
  std::size_t rank_mismatch = 0, tied = 0;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t n = 3 + rng.below(40);
    std::vector<double> x(n), y(n);
    const bool ties = i % 2 == 0;
    for (std::size_t j = 0; j < n; ++j) {
      x[j] = ties ? static_cast<double>(rng.below(5)) : rng.normal();
      y[j] = ties ? static_cast<double>(rng.below(5)) : rng.normal();
    }
    x[0] = -1;
    x[1] = 9;
    y[0] = -1;
    y[1] = 9;
    tied += ties;
    const auto rx = counting_ranks(x), ry = counting_ranks(y);
    if (average_ranks(x) != rx || average_ranks(y) != ry) ++rank_mismatch;
    worst_sp = std::max(worst_sp, std::abs(spearman(x, y) - pearson(rx, ry)));
  }
  out.require(rank_mismatch == 0, std::to_string(rank_mismatch) + " rank vectors differ");
  out.require(worst_sp <= 1e-12, "spearman off by " + num(worst_sp));

  std::vector<double> a(50);
  for (double& v : a) v = rng.uniform(-1, 1);
  const BootstrapResult b = paired_bootstrap(a, a, 10000, 1);
  out.require(b.delta == 0.0 && b.p_value == 1.0, "identical-list bootstrap");
  out.note("rho error " + num(worst_rho, 3) + ", spearman error " + num(worst_sp, 3) + " (" +
           std::to_string(tied) + " tied cases), bootstrap delta " + num(b.delta) + " p " + num(b.p_value));
  return out;
}

// ---------------------------------------------------------------------------
// 9. Scorer

class TableLM : public LanguageModel {
 public:
  void set(const std::string& w, double cond, double uncond) { table_[w] = {cond, uncond}; }
  std::vector<int> encode(const std::string& text) const override {
    std::vector<int> ids;
    for (const auto& w : split_whitespace(text)) {
      const auto it = table_.find(w);
      ids.push_back(it == table_.end() ? -1 : static_cast<int>(std::distance(table_.begin(), it)));
    }
    return ids;
  }
  std::vector<double> continuation_logprobs(std::span<const int> context,
                                            std::span<const int> continuation) const override {
    std::vector<double> out;
    for (int id : continuation) {
      const auto& e = std::next(table_.begin(), id)->second;
      out.push_back(context.empty() ? e.second : e.first);
    }
    return out;
  }

 private:
  std::map<std::string, std::pair<double, double>> table_;
};

Outcome criterion_scorer() {
  Outcome out;
  Rng rng(99, Stream::kSynthetic);
  std::size_t mismatches = 0;
  for (int i = 0; i < 500; ++i) {
    ItemStats stats(2 + rng.below(4));
    std::vector<double> cond;
    for (auto& s : stats) {
      s = {rng.uniform(-6, 0), rng.uniform(-6, 0), 1 + rng.below(6)};
      cond.push_back(s.cond);
    }
    if (predict(stats, {ScoreScheme::kCombined, 1.0, 0.0}) != argmax_first(cond)) ++mismatches;
  }
  out.require(mismatches == 0, std::to_string(mismatches) + " ranking mismatches");

  const ItemStats tie{{-1.0, -2.0, 2}, {-1.0, -2.0, 2}, {-3.0, -2.0, 2}};
  bool tie_ok = true;
  for (int rep = 0; rep < 10; ++rep) tie_ok &= predict(tie, {ScoreScheme::kCond, 1.0, 0.0}) == 0;
  out.require(tie_ok, "tie-break not deterministic at index 0");

  TableLM lm;
  lm.set("gold", -1.0, -0.2);
  lm.set("foil", -1.2, -3.0);
  const std::vector<MCItem> grid_items{{"c", {"gold", "foil foil"}, 0}, {"c", {"foil foil", "gold"}, 1}};
  const GridResult g = grid_search(grid_items, lm);
  out.require(g.best.lambda == 1.0 && g.best.alpha == 0.0 && g.best_accuracy == 1.0,
              "grid optimum lambda " + num(g.best.lambda) + " alpha " + num(g.best.alpha));

  lm.set("right", -0.3, -4.0);
  lm.set("wrong", -2.5, -0.1);
  const std::vector<MCItem> acc_items{{"c", {"right", "wrong"}, 0},
                                      {"c", {"wrong", "right"}, 1},
                                      {"c", {"wrong", "wrong wrong", "right"}, 2}};
  const double acc = accuracy(acc_items, lm, {ScoreScheme::kCond, 1.0, 0.0});
  out.require(acc == 1.0, "fixture accuracy " + num(acc));
  out.note("500 items ranked, grid -> " + g.best.scheme_name() + " lambda " + num(g.best.lambda) +
           " alpha " + num(g.best.alpha) + ", accuracy " + num(acc));
  return out;
}

// ---------------------------------------------------------------------------
// 10. Filter golden test

Outcome criterion_filter(const fs::path& tmp) {
  Outcome out;
  const fs::path fixtures = SENSIA_FIXTURES;
  FilterConfig cfg;
  cfg.ratio_low = 0.6;
  cfg.ratio_high = 1.7;
  cfg.sim_threshold = 0.80;
  cfg.per_corpus_cap = 6;
  cfg.target_size = 1000;
  const auto input = read_pairs_tsv((fixtures / "filter_golden.tsv").string());
  const FilterResult r = filter_pipeline(input, cfg, stored_similarity);
  fs::create_directories(tmp);
  write_pairs_tsv((tmp / "filtered.tsv").string(), r.pairs);
  out.require(input.size() == 50, "fixture has " + std::to_string(input.size()) + " lines");
  out.require(slurp(tmp / "filtered.tsv") == slurp(fixtures / "filter_golden_expected.tsv"),
              "output differs from the expected file");
  out.require(r.stats.to_csv() == slurp(fixtures / "filter_golden_stats.csv"), "stats differ");
  out.require(r.stats.output + r.stats.rejected() == r.stats.input, "stage counts do not sum");
  out.note(std::to_string(r.stats.input) + " in, " + std::to_string(r.stats.duplicates) + " dup, " +
           std::to_string(r.stats.ratio_rejected) + " ratio, " + std::to_string(r.stats.similarity_rejected) +
           " sim, " + std::to_string(r.stats.cap_removed) + " cap, " + std::to_string(r.stats.output) + " out");
  return out;
}

}  // namespace

int main() {
  const auto t0 = std::chrono::steady_clock::now();
  testing::TempDir tmp("acceptance");
  std::vector<std::pair<std::string, Outcome>> results;
  auto run = [&](const std::string& name, const std::function<Outcome()>& f) {
    Outcome o;
    try {
      o = f();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
    results.emplace_back(name, o);
  };

  const DeskData data = desk_data();
  run("1 gradient suite", [&] { return criterion_gradients(data); });
  run("2 InfoNCE closed forms", criterion_infonce);
  run("3 scheduler exactness", criterion_schedule);

  std::fprintf(stderr, "desk run 1 (%zu steps)\n", data.cfg.train.total_steps);
  std::optional<DeskRun> first;
  try {
    first = desk_run(data, tmp.path() / "run1");
  } catch (const std::exception& e) {
    std::fprintf(stderr, "desk run failed: %s\n", e.what());
  }
  auto need_run = [&](const std::function<Outcome()>& f) {
    return [&, f] {
      if (!first) return Outcome{false, "desk run did not complete"};
      return f();
    };
  };
  run("4 end-to-end adaptation", need_run([&] { return criterion_adaptation(data, *first); }));
  run("5 mixture ablation ordering", need_run([&] { return criterion_mixture(data, *first); }));
  run("6 polish freezing", need_run([&] { return criterion_polish(*first, tmp.path() / "run1"); }));
  run("7 Procrustes", criterion_procrustes);
  run("8 topology", criterion_topology);
  run("9 scorer", criterion_scorer);
  run("10 filter golden", [&] { return criterion_filter(tmp.path() / "filter"); });
  run("11 determinism", need_run([&] {
        std::fprintf(stderr, "desk run 2 (%zu steps)\n", data.cfg.train.total_steps);
        const DeskRun second = desk_run(data, tmp.path() / "run2");
        return criterion_determinism(*first, second);
      }));

  std::size_t failed = 0;
  for (const auto& [name, o] : results) failed += !o.pass;
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("%zu/%zu criteria passed in %.0f s\n", results.size() - failed, results.size(), secs);
  return failed == 0 ? 0 : 1;
}
