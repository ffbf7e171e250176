#pragma once

// Optimization loop and evaluation metrics.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sensia/corpus.hpp"
#include "sensia/model.hpp"
#include "sensia/objectives.hpp"
#include "sensia/schedule.hpp"

namespace sensia {

enum class RetrievalEmbedding { kContext, kSense };
enum class EntropySource { kNormPooled, kContextualMarginal };

struct TrainConfig {
  double learning_rate = 3e-3;
  std::size_t batch_size = 16;
  double warmup_ratio = 0.1;
  double clip_norm = 1.0;
  double label_smoothing = 0.05;
  std::size_t total_steps = 2000;
  std::size_t eval_every = 100;
  std::uint64_t seed = 1234;
  std::size_t max_len = 32;
  SensePooling sense_pooling = SensePooling::kNormPooled;
  RetrievalEmbedding retrieval = RetrievalEmbedding::kContext;
  EntropySource entropy = EntropySource::kNormPooled;

  void validate() const;
};

struct EvalMetrics {
  double recall_s2t = 0.0;
  double recall_t2s = 0.0;
  double entropy_tgt = 0.0;
  double ppl_tgt = 0.0;
  double ce_tgt = 0.0;  // mean unsmoothed next-token cross-entropy
  std::size_t target_tokens = 0;
};

struct MetricsRow {
  std::size_t step = 0;
  Phase phase = Phase::kAlignment;
  LossWeights weights;
  double l_sns = 0.0;
  double l_ctx = 0.0;
  double l_lm = 0.0;
  double l_total = 0.0;
  EvalMetrics eval;
  double lr = 0.0;
};

inline constexpr const char* kMetricsHeader =
    "step,phase,w_sns,w_ctx,w_lm,l_sns,l_ctx,l_lm,l_total,recall_s2t,recall_t2s,"
    "entropy_tgt,ppl_tgt,lr";

std::string metrics_csv_line(const MetricsRow& row);
void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows);
std::vector<MetricsRow> read_metrics_csv(const std::string& path);

// Scales every gradient by clip_norm / g when the global L2 norm g exceeds
// clip_norm. Returns g (before clipping).
double clip_gradients(std::vector<std::span<double>>& grads, double clip_norm);

// Linear warmup to learning_rate over warmup_ratio * total_steps, then flat.
double lr_at(std::size_t step, const TrainConfig& cfg);

// Adam with beta = (0.9, 0.999), eps = 1e-8, no weight decay.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  // Updates the parameters whose flag in `trainable` is set. State for a
  // parameter is created the first time it is updated.
  void step(std::vector<Parameter>& params, const std::vector<bool>& trainable, double lr);

 private:
  struct State {
    std::vector<double> m, v;
    std::size_t t = 0;
  };
  double beta1_, beta2_, eps_;
  std::vector<std::pair<std::string, State>> state_;
  State& state_for(const std::string& name, std::size_t n);
};

struct NllTotals {
  double sum = 0.0;
  std::size_t count = 0;
};

// Unsmoothed next-token negative log-likelihood summed over the target rows
// (row t predicts token t + 1; pad positions skipped).
NllTotals next_token_nll(const std::vector<SentenceForward>& tgt);

// Retrieval, entropy and perplexity on a dev set (no gradients recorded).
EvalMetrics evaluate(const BackpackModel& model, const std::vector<TokenizedPair>& dev,
                     const TrainConfig& cfg, double tau_pool, int pad_id);

// recall@1 of row i of `a` retrieving row i of `b` by dot product (rows are
// unit vectors, so this is cosine). Ties go to the lowest index.
double recall_at_1(const std::vector<std::vector<double>>& a,
                   const std::vector<std::vector<double>>& b);

struct TrainHooks {
  // Called after each evaluation row is recorded.
  std::function<void(const MetricsRow&, const BackpackModel&)> on_eval;
  // Directory for latest.ckpt / polish_start.ckpt; empty disables.
  std::string checkpoint_dir;
};

struct TrainResult {
  std::vector<MetricsRow> rows;
  std::size_t polish_start_step = 0;
};

// Runs schedule.total_steps updates. Throws NonFiniteLoss naming the term
// and step when any loss becomes non-finite.
TrainResult train(BackpackModel& model, const std::vector<TokenizedPair>& train_pairs,
                  const std::vector<TokenizedPair>& dev_pairs, const TrainConfig& train_cfg,
                  const ScheduleConfig& schedule_cfg, int pad_id, const TrainHooks& hooks = {});

}  // namespace sensia
