#include "sensia/mc_scorer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "sensia/errors.hpp"

namespace sensia {

std::vector<MCItem> read_mc_items(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open " + path);
  std::vector<MCItem> items;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::size_t start = 0;
    while (true) {
      const std::size_t tab = line.find('\t', start);
      cols.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (cols.size() < 4) throw ParseError("MC item needs a context, two candidates and a gold index", line_no);
    MCItem item;
    item.context = cols.front();
    item.candidates.assign(cols.begin() + 1, cols.end() - 1);
    try {
      std::size_t used = 0;
      const long gold = std::stol(cols.back(), &used);
      if (used != cols.back().size() || gold < 0) throw std::invalid_argument("gold");
      item.gold_index = static_cast<std::size_t>(gold);
    } catch (const std::exception&) {
      throw ParseError("gold index is not a non-negative integer", line_no);
    }
    if (item.gold_index >= item.candidates.size()) {
      throw ParseError("gold index outside the candidate list", line_no);
    }
    items.push_back(std::move(item));
  }
  return items;
}

std::vector<int> BackpackScorer::encode(const std::string& text) const {
  std::vector<int> ids;
  for (const auto& w : split_whitespace(text)) ids.push_back(vocab_.id(w));
  return ids;
}

std::vector<double> BackpackScorer::continuation_logprobs(std::span<const int> context,
                                                          std::span<const int> continuation) const {
  if (continuation.empty()) throw InvalidArgument("candidate has no tokens");
  const std::size_t limit = model_.config().max_positions;
  if (continuation.size() + 1 > limit) {
    throw InvalidArgument("candidate longer than the model's context window");
  }
  const std::size_t keep = std::min(context.size(), limit - 1 - continuation.size());
  std::vector<int> seq;
  seq.push_back(vocab_.eos_id());
  seq.insert(seq.end(), context.end() - static_cast<std::ptrdiff_t>(keep), context.end());
  const std::size_t first = seq.size();
  seq.insert(seq.end(), continuation.begin(), continuation.end());

  ad::NoGradGuard no_grad;
  const LmOutput out = model_.forward_lm(seq, full_mask(seq.size()));
  const std::size_t V = out.logits.cols();
  std::vector<double> lp;
  lp.reserve(continuation.size());
  for (std::size_t pos = first; pos < seq.size(); ++pos) {
    const std::size_t row = pos - 1;
    double max_v = -std::numeric_limits<double>::infinity();
    for (std::size_t v = 0; v < V; ++v) max_v = std::max(max_v, out.logits.at(row, v));
    double total = 0.0;
    for (std::size_t v = 0; v < V; ++v) total += std::exp(out.logits.at(row, v) - max_v);
    lp.push_back(out.logits.at(row, seq[pos]) - max_v - std::log(total));
  }
  return lp;
}

void ScoreParams::validate() const {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw InvalidArgument("score.lambda must be in [0, 1]");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvalidArgument("score.alpha must be in [0, 1]");
}

namespace {

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

CandidateStats candidate_stats(const std::string& candidate, const std::string& context,
                               const LanguageModel& model) {
  const std::vector<int> a = model.encode(candidate);
  if (a.empty()) throw InvalidArgument("candidate has no tokens");
  const std::vector<int> c = model.encode(context);
  CandidateStats s;
  s.length = a.size();
  s.cond = mean_of(model.continuation_logprobs(c, a));
  s.uncond = c.empty() ? s.cond : mean_of(model.continuation_logprobs({}, a));
  return s;
}

double mean_loglik(const std::string& candidate, const std::string& context,
                   const LanguageModel& model) {
  const std::vector<int> a = model.encode(candidate);
  if (a.empty()) throw InvalidArgument("candidate has no tokens");
  return mean_of(model.continuation_logprobs(model.encode(context), a));
}

double pmi(const std::string& candidate, const std::string& context, const LanguageModel& model) {
  return candidate_stats(candidate, context, model).pmi();
}

double combined_score(const CandidateStats& s, const ScoreParams& p) {
  const double len_term = p.alpha * static_cast<double>(s.length);
  if (p.scheme == ScoreScheme::kCond) return s.cond + len_term;
  return (1.0 - p.lambda) * s.pmi() + p.lambda * s.cond + len_term;
}

double combined_score(const std::string& candidate, const std::string& context,
                      const LanguageModel& model, const ScoreParams& params) {
  return combined_score(candidate_stats(candidate, context, model), params);
}

std::size_t argmax_first(std::span<const double> scores) {
  if (scores.empty()) throw InvalidArgument("no scores to choose from");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[best]) best = i;
  }
  return best;
}

std::vector<ItemStats> item_stats(const std::vector<MCItem>& items, const LanguageModel& model) {
  std::vector<ItemStats> out;
  out.reserve(items.size());
  for (const MCItem& item : items) {
    if (item.candidates.size() < 2) throw InvalidArgument("MC item needs at least two candidates");
    ItemStats stats;
    for (const auto& cand : item.candidates) stats.push_back(candidate_stats(cand, item.context, model));
    out.push_back(std::move(stats));
  }
  return out;
}

std::size_t predict(const ItemStats& stats, const ScoreParams& params) {
  std::vector<double> scores;
  scores.reserve(stats.size());
  for (const CandidateStats& s : stats) scores.push_back(combined_score(s, params));
  return argmax_first(scores);
}

std::size_t predict(const MCItem& item, const LanguageModel& model, const ScoreParams& params) {
  return predict(item_stats({item}, model).front(), params);
}

double accuracy(const std::vector<MCItem>& items, const std::vector<ItemStats>& stats,
                const ScoreParams& params) {
  if (items.empty()) throw InvalidArgument("accuracy needs at least one item");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (predict(stats[i], params) == items[i].gold_index) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(items.size());
}

double accuracy(const std::vector<MCItem>& items, const LanguageModel& model,
                const ScoreParams& params) {
  if (items.empty()) throw InvalidArgument("accuracy needs at least one item");
  return accuracy(items, item_stats(items, model), params);
}

GridResult grid_search(const std::vector<MCItem>& items, const std::vector<ItemStats>& stats) {
  if (items.empty()) throw InvalidArgument("grid search needs validation items");
  GridResult result;
  bool first = true;
  auto consider = [&](const ScoreParams& p) {
    const double acc = accuracy(items, stats, p);
    result.table.push_back({p, acc});
    if (first || acc > result.best_accuracy) {
      result.best = p;
      result.best_accuracy = acc;
      first = false;
    }
  };
  // cond is the lambda = 1 reduction; lambda is recorded as 1 and ignored.
  for (int a = 0; a <= 10; ++a) consider({ScoreScheme::kCond, 1.0, a / 10.0});
  for (int l = 0; l <= 10; ++l) {
    for (int a = 0; a <= 10; ++a) consider({ScoreScheme::kCombined, l / 10.0, a / 10.0});
  }
  return result;
}

GridResult grid_search(const std::vector<MCItem>& items, const LanguageModel& model) {
  if (items.empty()) throw InvalidArgument("grid search needs validation items");
  return grid_search(items, item_stats(items, model));
}

void write_mc_results_csv(const std::string& path, const std::vector<MCItem>& items,
                          const std::vector<ItemStats>& stats, const ScoreParams& params) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InvalidArgument("cannot write " + path);
  out << "item,scores,prediction,gold\n";
  char buf[40];
  for (std::size_t i = 0; i < items.size(); ++i) {
    out << i << ',';
    for (std::size_t c = 0; c < stats[i].size(); ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", combined_score(stats[i][c], params));
      out << (c ? ";" : "") << buf;
    }
    out << ',' << predict(stats[i], params) << ',' << items[i].gold_index << '\n';
  }
}

void write_grid_csv(const std::string& path, const GridResult& result) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InvalidArgument("cannot write " + path);
  out << "scheme,lambda,alpha,accuracy\n";
  char buf[96];
  for (const GridEntry& e : result.table) {
    std::snprintf(buf, sizeof(buf), "%s,%.1f,%.1f,%.17g\n", e.params.scheme_name().c_str(),
                  e.params.lambda, e.params.alpha, e.accuracy);
    out << buf;
  }
}

}  // namespace sensia
