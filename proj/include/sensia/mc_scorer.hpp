#pragma once

// Multiple-choice scoring with length-normalized likelihoods, a PMI
// correction, and a grid search over the interpolation parameters.

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "sensia/corpus.hpp"
#include "sensia/model.hpp"

namespace sensia {

struct MCItem {
  std::string context;
  std::vector<std::string> candidates;
  std::size_t gold_index = 0;
};

// TSV: context<TAB>candidate_1<TAB>...<TAB>candidate_n<TAB>gold_index, n >= 2.
std::vector<MCItem> read_mc_items(const std::string& path);

// Anything that can give per-token log-probabilities of a continuation.
class LanguageModel {
 public:
  virtual ~LanguageModel() = default;
  virtual std::vector<int> encode(const std::string& text) const = 0;
  // log p(a_i | a_<i, context) for each continuation token.
  virtual std::vector<double> continuation_logprobs(std::span<const int> context,
                                                    std::span<const int> continuation) const = 0;
};

// Scores with a trained model. The sequence fed to the model is
// <eos> context continuation; when it exceeds max_positions the oldest
// context tokens are dropped.
class BackpackScorer : public LanguageModel {
 public:
  BackpackScorer(const BackpackModel& model, const Vocab& vocab) : model_(model), vocab_(vocab) {}
  std::vector<int> encode(const std::string& text) const override;
  std::vector<double> continuation_logprobs(std::span<const int> context,
                                            std::span<const int> continuation) const override;

 private:
  const BackpackModel& model_;
  const Vocab& vocab_;
};

enum class ScoreScheme { kCond, kCombined };

struct ScoreParams {
  ScoreScheme scheme = ScoreScheme::kCombined;
  double lambda = 1.0;
  double alpha = 0.0;

  void validate() const;
  std::string scheme_name() const { return scheme == ScoreScheme::kCond ? "cond" : "combined"; }
};

double mean_loglik(const std::string& candidate, const std::string& context,
                   const LanguageModel& model);
double pmi(const std::string& candidate, const std::string& context, const LanguageModel& model);

// Everything the scores need about one candidate.
struct CandidateStats {
  double cond = 0.0;    // mean log-likelihood given the context
  double uncond = 0.0;  // mean log-likelihood given only the begin marker
  std::size_t length = 0;

  double pmi() const { return cond - uncond; }
};

CandidateStats candidate_stats(const std::string& candidate, const std::string& context,
                               const LanguageModel& model);

// combined: (1 - lambda) * pmi + lambda * cond + alpha * length
// cond:     cond + alpha * length
double combined_score(const CandidateStats& stats, const ScoreParams& params);
double combined_score(const std::string& candidate, const std::string& context,
                      const LanguageModel& model, const ScoreParams& params);

// Index of the largest score; the lowest index wins ties.
std::size_t argmax_first(std::span<const double> scores);

std::size_t predict(const MCItem& item, const LanguageModel& model, const ScoreParams& params);
double accuracy(const std::vector<MCItem>& items, const LanguageModel& model,
                const ScoreParams& params);

using ItemStats = std::vector<CandidateStats>;
std::vector<ItemStats> item_stats(const std::vector<MCItem>& items, const LanguageModel& model);
std::size_t predict(const ItemStats& stats, const ScoreParams& params);
double accuracy(const std::vector<MCItem>& items, const std::vector<ItemStats>& stats,
                const ScoreParams& params);

struct GridEntry {
  ScoreParams params;
  double accuracy = 0.0;
};

struct GridResult {
  ScoreParams best;
  double best_accuracy = 0.0;
  std::vector<GridEntry> table;  // evaluation order
};

// cond over alpha in {0, 0.1, ..., 1}, then combined over every
// (lambda, alpha) in that grid. The first maximizer in this order wins,
// i.e. cond first, then smaller lambda, then smaller alpha.
GridResult grid_search(const std::vector<MCItem>& items, const LanguageModel& model);
GridResult grid_search(const std::vector<MCItem>& items, const std::vector<ItemStats>& stats);

// item,scores,prediction,gold with scores joined by ';'.
void write_mc_results_csv(const std::string& path, const std::vector<MCItem>& items,
                          const std::vector<ItemStats>& stats, const ScoreParams& params);
// scheme,lambda,alpha,accuracy
void write_grid_csv(const std::string& path, const GridResult& result);

}  // namespace sensia
