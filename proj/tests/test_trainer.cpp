#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "sensia/checkpoint.hpp"
#include "sensia/errors.hpp"
#include "sensia/trainer.hpp"
#include "support.hpp"

using namespace sensia;

namespace {

struct TinyRun {
  SyntheticCorpus corpus;
  Vocab vocab;
  std::vector<TokenizedPair> train, dev;
  ModelConfig model;
  TrainConfig train_cfg;
  ScheduleConfig schedule;
};

TinyRun tiny_run(std::size_t steps) {
  TinyRun r;
  r.corpus = generate_synthetic(7, 60);
  r.vocab = build_vocab(r.corpus.pairs);
  const auto all = tokenize_pairs(r.corpus.pairs, r.vocab, 16);
  r.train.assign(all.begin(), all.begin() + 50);
  r.dev.assign(all.begin() + 50, all.end());
  r.model.vocab_size = r.vocab.size();
  r.model.d_model = 8;
  r.model.n_layers = 1;
  r.model.n_heads = 2;
  r.model.n_senses = 3;
  r.model.max_positions = 16;
  r.train_cfg.batch_size = 8;
  r.train_cfg.total_steps = steps;
  r.train_cfg.eval_every = 4;
  r.train_cfg.max_len = 16;
  r.schedule.total_steps = steps;
  return r;
}

}  // namespace

TEST_CASE("gradient clipping") {
  std::vector<double> a{3.0, 0.0}, b{4.0};
  std::vector<std::span<double>> g{a, b};
  CHECK(clip_gradients(g, 1.0) == doctest::Approx(5.0));
  CHECK(a[0] == doctest::Approx(0.6));
  CHECK(b[0] == doctest::Approx(0.8));
  std::vector<double> c{0.3};
  std::vector<std::span<double>> small{c};
  clip_gradients(small, 1.0);
  CHECK(c[0] == 0.3);
  CHECK_THROWS_AS(clip_gradients(small, 0.0), InvalidArgument);
}

TEST_CASE("learning-rate warmup") {
  TrainConfig cfg;
  cfg.learning_rate = 1e-3;
  cfg.total_steps = 100;
  cfg.warmup_ratio = 0.1;
  CHECK(lr_at(0, cfg) == 0.0);
  CHECK(lr_at(5, cfg) == doctest::Approx(5e-4));
  CHECK(lr_at(10, cfg) == 1e-3);
  CHECK(lr_at(99, cfg) == 1e-3);
  cfg.warmup_ratio = 0.0;
  CHECK(lr_at(0, cfg) == 1e-3);
}

TEST_CASE("Adam matches a scalar reference") {
  std::vector<Parameter> params;
  params.push_back({"w", ParamGroup::kContextNet, ad::Tensor::from({2}, {1.0, -2.0}, true)});
  AdamOptimizer adam;
  double m[2] = {0, 0}, v[2] = {0, 0}, w[2] = {1.0, -2.0};
  const double g_seq[3][2] = {{0.5, -1.0}, {0.1, 0.2}, {-0.3, 0.0}};
  for (int t = 1; t <= 3; ++t) {
    auto grad = params[0].tensor.mutable_grad();
    grad[0] = g_seq[t - 1][0];
    grad[1] = g_seq[t - 1][1];
    adam.step(params, {true}, 0.01);
    for (int j = 0; j < 2; ++j) {
      const double g = g_seq[t - 1][j];
      m[j] = 0.9 * m[j] + 0.1 * g;
      v[j] = 0.999 * v[j] + 0.001 * g * g;
      const double mh = m[j] / (1 - std::pow(0.9, t)), vh = v[j] / (1 - std::pow(0.999, t));
      w[j] -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
      CHECK(params[0].tensor.values()[j] == doctest::Approx(w[j]).epsilon(1e-14));
    }
  }
  const double before = params[0].tensor.values()[0];
  adam.step(params, {false}, 0.01);
  CHECK(params[0].tensor.values()[0] == before);
}

TEST_CASE("recall at 1") {
  const std::vector<std::vector<double>> a{{1, 0}, {0, 1}, {0.6, 0.8}};
  CHECK(recall_at_1(a, a) == 1.0);
  const std::vector<std::vector<double>> tied{{1, 0}, {1, 0}};
  // Both rows retrieve index 0, so only the first is a hit.
  CHECK(recall_at_1(tied, tied) == 0.5);
  CHECK_THROWS_AS(recall_at_1({}, {}), InvalidArgument);
}

TEST_CASE("metrics CSV round trip is exact") {
  testing::TempDir dir("metrics");
  MetricsRow r;
  r.step = 40;
  r.phase = Phase::kJoint;
  r.weights = {0.1 + 0.2, 1.0 / 3.0, 0.2};
  r.l_sns = std::exp(1.0);
  r.l_ctx = 1e-300;
  r.l_lm = 123456.789;
  r.l_total = 0.5;
  r.eval.recall_s2t = 0.75;
  r.eval.recall_t2s = 1.0;
  r.eval.entropy_tgt = std::log(3.0);
  r.eval.ppl_tgt = 44.25;
  r.lr = 3e-3;
  write_metrics_csv(dir.file("m.csv"), {r, r});
  const auto back = read_metrics_csv(dir.file("m.csv"));
  REQUIRE(back.size() == 2);
  CHECK(metrics_csv_line(back[1]) == metrics_csv_line(r));
  CHECK(back[0].phase == Phase::kJoint);
  CHECK(back[0].weights.sns == r.weights.sns);

  {
    std::ofstream out(dir.file("bad.csv"));
    out << kMetricsHeader << "\n1,joint,0\n";
  }
  try {
    read_metrics_csv(dir.file("bad.csv"));
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
}

TEST_CASE("config validation rejects bad training settings") {
  TrainConfig cfg;
  cfg.batch_size = 1;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
  cfg = TrainConfig{};
  cfg.learning_rate = 0;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
  cfg = TrainConfig{};
  cfg.eval_every = 0;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
}

TEST_CASE("zero steps leaves the model at its initialization") {
  TinyRun r = tiny_run(0);
  BackpackModel model(r.model, 3);
  const BackpackModel init = model.clone();
  const auto result = train(model, r.train, r.dev, r.train_cfg, r.schedule, r.vocab.pad_id());
  REQUIRE(result.rows.size() == 1);
  for (std::size_t i = 0; i < model.parameters().size(); ++i) {
    const auto a = model.parameters()[i].tensor.values(), b = init.parameters()[i].tensor.values();
    CHECK(std::equal(a.begin(), a.end(), b.begin()));
  }
}

TEST_CASE("training is deterministic and freezes sense machinery in polish") {
  testing::TempDir dir("train");
  TinyRun r = tiny_run(20);
  BackpackModel m1(r.model, 3), m2(r.model, 3);
  TrainHooks hooks;
  hooks.checkpoint_dir = dir.path().string();
  const auto a = train(m1, r.train, r.dev, r.train_cfg, r.schedule, r.vocab.pad_id(), hooks);
  const auto b = train(m2, r.train, r.dev, r.train_cfg, r.schedule, r.vocab.pad_id());
  REQUIRE(a.rows.size() == b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    CHECK(metrics_csv_line(a.rows[i]) == metrics_csv_line(b.rows[i]));
  }
  // Rows at 0, 4 (joint start), 8, 10 (polish start), 12, 16, 20.
  std::vector<std::size_t> steps;
  for (const auto& row : a.rows) steps.push_back(row.step);
  CHECK(steps == std::vector<std::size_t>{0, 4, 8, 10, 12, 16, 20});
  CHECK(a.polish_start_step == 10);

  const BackpackModel start = load_checkpoint(dir.file("polish_start.ckpt"));
  const BackpackModel end = load_checkpoint(dir.file("final.ckpt"));
  CHECK_FALSE(end.output_tied());
  bool context_moved = false;
  for (std::size_t i = 0; i < end.parameters().size(); ++i) {
    const auto& p = end.parameters()[i];
    const auto x = start.parameters()[i].tensor.values(), y = p.tensor.values();
    const bool same = std::equal(x.begin(), x.end(), y.begin());
    if (!is_trainable(p.group, Phase::kPolish)) CHECK_MESSAGE(same, p.name);
    if (p.group == ParamGroup::kContextNet && !same) context_moved = true;
  }
  CHECK(context_moved);
  for (const auto& p : m1.parameters()) CHECK(p.tensor.requires_grad());
}

TEST_CASE("train rejects inconsistent inputs") {
  TinyRun r = tiny_run(4);
  BackpackModel model(r.model, 1);
  r.schedule.total_steps = 5;
  CHECK_THROWS_AS(train(model, r.train, r.dev, r.train_cfg, r.schedule, 0), InvalidArgument);
  r.schedule.total_steps = 4;
  const std::vector<TokenizedPair> one(r.dev.begin(), r.dev.begin() + 1);
  CHECK_THROWS_AS(train(model, r.train, one, r.train_cfg, r.schedule, 0), InvalidArgument);
}

TEST_CASE("evaluation metrics are in range") {
  TinyRun r = tiny_run(1);
  const BackpackModel model(r.model, 4);
  const EvalMetrics m = evaluate(model, r.dev, r.train_cfg, 0.7, r.vocab.pad_id());
  CHECK(m.recall_s2t >= 0.0);
  CHECK(m.recall_s2t <= 1.0);
  CHECK(m.entropy_tgt >= 0.0);
  CHECK(m.entropy_tgt <= std::log(3.0) + 1e-12);
  CHECK(m.ppl_tgt == doctest::Approx(std::exp(m.ce_tgt)));
  CHECK(m.target_tokens > 0);
}
