#pragma once

// Run configuration: flat "key = value" text with dotted section prefixes.
// Blank lines and lines starting with '#' are ignored. Unknown keys and
// malformed values raise ConfigError naming the key.

#include <optional>
#include <string>
#include <vector>

#include "sensia/ablation.hpp"
#include "sensia/corpus.hpp"
#include "sensia/mc_scorer.hpp"
#include "sensia/model.hpp"
#include "sensia/schedule.hpp"
#include "sensia/trainer.hpp"

namespace sensia {

struct SyntheticConfig {
  std::size_t pairs = 5500;
  std::size_t dev = 500;
  std::uint64_t seed = 1234;
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  ScheduleConfig schedule;
  FilterConfig filter;
  SyntheticConfig synthetic;
  std::string filter_similarity = "stored";  // stored | trigram
  std::vector<std::string> ablation;          // variant names
  MixtureMode mixture_mode = MixtureMode::full();
  ScoreParams score;
  std::size_t bootstrap_iters = 10000;
  std::size_t procrustes_subsample = 0;
  std::size_t min_word_frequency = 5;
  // paths.*; empty when unset. Input paths must exist at load time.
  std::string train_path, dev_path, vocab_path, stop_list_path;

  // Sets one key; throws ConfigError for unknown keys or bad values.
  void set(const std::string& key, const std::string& value);
  // Every key with its current value, one "key = value" per line, sorted.
  std::string to_text() const;
  // Cross-field checks (schedule/train step agreement, ranges).
  void validate() const;
};

// Parses configuration text on top of `base`.
RunConfig parse_config(const std::string& text, RunConfig base = {});
RunConfig load_config(const std::string& path, RunConfig base = {});

// The desk-scale configuration used by the acceptance suite.
RunConfig desk_config();

}  // namespace sensia
