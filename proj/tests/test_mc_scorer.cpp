#include <cmath>
#include <fstream>
#include <map>

#include "doctest.h"
#include "sensia/errors.hpp"
#include "sensia/mc_scorer.hpp"
#include "support.hpp"

using namespace sensia;

namespace {

// Each word has a fixed log-prob with context and another without.
class TableLM : public LanguageModel {
 public:
  void set(const std::string& word, double cond, double uncond) {
    if (!ids_.count(word)) {
      ids_[word] = static_cast<int>(cond_.size());
      cond_.push_back(cond);
      uncond_.push_back(uncond);
    } else {
      cond_[ids_[word]] = cond;
      uncond_[ids_[word]] = uncond;
    }
  }
  std::vector<int> encode(const std::string& text) const override {
    std::vector<int> out;
    for (const auto& w : split_whitespace(text)) out.push_back(ids_.count(w) ? ids_.at(w) : -1);
    return out;
  }
  std::vector<double> continuation_logprobs(std::span<const int> context,
                                            std::span<const int> continuation) const override {
    std::vector<double> out;
    for (int id : continuation) {
      const auto& table = context.empty() ? uncond_ : cond_;
      out.push_back(id < 0 ? -10.0 : table[id]);
    }
    return out;
  }

 private:
  std::map<std::string, int> ids_;
  std::vector<double> cond_, uncond_;
};

class UniformLM : public LanguageModel {
 public:
  std::vector<int> encode(const std::string& text) const override {
    return std::vector<int>(split_whitespace(text).size(), 0);
  }
  std::vector<double> continuation_logprobs(std::span<const int>, std::span<const int> c) const override {
    return std::vector<double>(c.size(), -std::log(4.0));
  }
};

}  // namespace

TEST_CASE("mean log-likelihood and pmi") {
  TableLM lm;
  lm.set("a", -1, -2);
  lm.set("b", -3, -3);
  CHECK(mean_loglik("a b", "ctx", lm) == -2.0);
  CHECK(mean_loglik("a", "ctx", lm) == -1.0);
  CHECK(pmi("a b", "ctx", lm) == doctest::Approx(0.5));
  CHECK(pmi("a b", "", lm) == 0.0);
  const UniformLM u;
  CHECK(mean_loglik("x y z", "c", u) == doctest::Approx(-std::log(4.0)));
  CHECK(pmi("x y z", "c", u) == 0.0);
  CHECK_THROWS_AS(mean_loglik("", "c", u), InvalidArgument);
}

TEST_CASE("combined score formula") {
  const CandidateStats s{-2.0, -2.5, 2};
  ScoreParams p{ScoreScheme::kCombined, 0.5, 0.1};
  CHECK(combined_score(s, p) == doctest::Approx(-0.55).epsilon(1e-15));
  p = {ScoreScheme::kCombined, 1.0, 0.0};
  CHECK(combined_score(s, p) == s.cond);
  p = {ScoreScheme::kCombined, 0.0, 0.0};
  CHECK(combined_score(s, p) == s.pmi());
  p = {ScoreScheme::kCond, 0.3, 0.2};
  CHECK(combined_score(s, p) == doctest::Approx(-2.0 + 0.4));
  p = {ScoreScheme::kCombined, 1.5, 0.0};
  CHECK_THROWS_AS(p.validate(), InvalidArgument);
}

TEST_CASE("length enters only through alpha") {
  TableLM lm;
  lm.set("a", -1.5, -2);
  const ScoreParams p{ScoreScheme::kCombined, 0.4, 0.0};
  CHECK(combined_score("a", "c", lm, p) == doctest::Approx(combined_score("a a a a", "c", lm, p)).epsilon(1e-14));
  const ScoreParams q{ScoreScheme::kCombined, 0.4, 0.3};
  CHECK(combined_score("a a a a", "c", lm, q) - combined_score("a", "c", lm, q) == doctest::Approx(0.9));
}

TEST_CASE("argmax and ties") {
  CHECK(argmax_first(std::vector<double>{-0.5, -0.9}) == 0);
  CHECK(argmax_first(std::vector<double>{-0.9, -0.5}) == 1);
  CHECK(argmax_first(std::vector<double>{-1.0, -1.0}) == 0);
  CHECK(argmax_first(std::vector<double>{-2.0, -1.0, -1.0}) == 1);
}

TEST_CASE("prediction ranking and invariance") {
  Rng rng(55);
  for (int rep = 0; rep < 500; ++rep) {
    ItemStats stats(2 + rng.below(4));
    for (auto& s : stats) s = {rng.uniform(-5, 0), rng.uniform(-5, 0), 1 + rng.below(5)};
    const ScoreParams p{ScoreScheme::kCombined, 1.0, 0.0};
    std::vector<double> cond;
    for (const auto& s : stats) cond.push_back(s.cond);
    CHECK(predict(stats, p) == argmax_first(cond));
    const ScoreParams r{ScoreScheme::kCombined, rng.uniform(0, 1), rng.uniform(0, 1)};
    ItemStats shifted = stats;
    const double c = rng.uniform(-3, 3);
    // Shifting cond and uncond together shifts every score by lambda * c.
    for (auto& s : shifted) {
      s.cond += c;
      s.uncond += c;
    }
    CHECK(predict(shifted, r) == predict(stats, r));
  }
}

TEST_CASE("accuracy on constructed fixtures") {
  TableLM lm;
  lm.set("good", -0.5, -0.5);
  lm.set("bad", -2.0, -2.0);
  const std::vector<MCItem> right{{"c", {"bad", "good"}, 1}, {"c", {"good", "bad"}, 0}};
  const std::vector<MCItem> wrong{{"c", {"bad", "good"}, 0}, {"c", {"good", "bad"}, 1}};
  const std::vector<MCItem> half{{"c", {"bad", "good"}, 1}, {"c", {"good", "bad"}, 1}};
  const ScoreParams cond{ScoreScheme::kCond, 0.0, 0.0};
  CHECK(accuracy(right, lm, cond) == 1.0);
  CHECK(accuracy(wrong, lm, cond) == 0.0);
  CHECK(accuracy(half, lm, cond) == 0.5);
}

TEST_CASE("grid search tie-break and lambda fixture") {
  const UniformLM u;
  const std::vector<MCItem> flat{{"c", {"x", "y"}, 0}, {"c", {"x y", "z w"}, 1}};
  const GridResult g = grid_search(flat, u);
  CHECK(g.best.scheme == ScoreScheme::kCond);
  CHECK(g.best.alpha == 0.0);
  CHECK(g.table.size() == 11 + 121);

  // Conditional likelihood is right, pmi is wrong, and the gold candidate
  // is the shorter one so any alpha > 0 hurts.
  TableLM lm;
  lm.set("gold", -1.0, -0.2);
  lm.set("foil", -1.2, -3.0);
  const std::vector<MCItem> items{{"c", {"gold", "foil foil"}, 0}, {"c", {"foil foil", "gold"}, 1}};
  const GridResult r = grid_search(items, lm);
  CHECK(r.best.lambda == 1.0);
  CHECK(r.best.alpha == 0.0);
  CHECK(r.best_accuracy == 1.0);
  for (const auto& e : r.table) {
    const bool lambda_one = e.params.scheme == ScoreScheme::kCond || e.params.lambda == 1.0;
    if (e.accuracy == 1.0) CHECK(lambda_one);
  }
  const GridResult again = grid_search(items, lm);
  CHECK(again.best.lambda == r.best.lambda);
  CHECK(again.best.scheme == r.best.scheme);
  CHECK_THROWS_AS(grid_search({}, lm), InvalidArgument);
}

TEST_CASE("MC item TSV") {
  testing::TempDir dir("mc");
  {
    std::ofstream out(dir.file("items.tsv"));
    out << "the cat\tsat\tflew\t0\nctx\ta\tb\tc\t2\n";
  }
  const auto items = read_mc_items(dir.file("items.tsv"));
  REQUIRE(items.size() == 2);
  CHECK(items[1].candidates.size() == 3);
  CHECK(items[1].gold_index == 2);
  {
    std::ofstream out(dir.file("bad.tsv"));
    out << "ctx\ta\tb\t0\nctx\ta\t0\n";
  }
  try {
    read_mc_items(dir.file("bad.tsv"));
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
  {
    std::ofstream out(dir.file("gold.tsv"));
    out << "ctx\ta\tb\t5\n";
  }
  CHECK_THROWS_AS(read_mc_items(dir.file("gold.tsv")), ParseError);
}
