#pragma once

// Bitext handling: vocabulary and tokenization, batching, the filtering
// pipeline, Pharaoh alignment ingestion, and the synthetic cipher corpus.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "sensia/batch.hpp"
#include "sensia/rng.hpp"

namespace sensia {

struct ParallelPair {
  std::string src_text;
  std::string tgt_text;
  std::optional<double> similarity;
  std::string source_corpus;
};

// UTF-8 TSV: src<TAB>tgt[<TAB>corpus_label[<TAB>similarity]].
std::vector<ParallelPair> read_pairs_tsv(const std::string& path);
void write_pairs_tsv(const std::string& path, const std::vector<ParallelPair>& pairs);

std::vector<std::string> split_whitespace(const std::string& text);

// Vocabulary file: a header line
//   #vocab pad=<id> unk=<id> eos=<id>
// followed by one token per line; the i-th token line has id i.
class Vocab {
 public:
  static constexpr const char* kPad = "<pad>";
  static constexpr const char* kUnk = "<unk>";
  static constexpr const char* kEos = "<eos>";

  // Specials take ids 0, 1, 2; `tokens` follow in the given order, skipping
  // repeats.
  static Vocab build(const std::vector<std::string>& tokens);
  static Vocab load(const std::string& path);
  void save(const std::string& path) const;

  int id(const std::string& token) const;
  const std::string& token(int id) const;
  bool contains(const std::string& token) const { return index_.count(token) != 0; }
  std::size_t size() const { return tokens_.size(); }
  int pad_id() const { return pad_; }
  int unk_id() const { return unk_; }
  int eos_id() const { return eos_; }

 private:
  void add(const std::string& token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
  int pad_ = 0, unk_ = 1, eos_ = 2;
};

// Shared vocabulary over both sides, tokens sorted for determinism.
Vocab build_vocab(const std::vector<ParallelPair>& pairs);

// Whitespace tokens mapped to ids (unknown -> unk), eos appended.
std::vector<int> tokenize(const std::string& text, const Vocab& vocab);
// Inverse of tokenize up to whitespace normalization; pad and eos dropped.
std::string detokenize(std::span<const int> ids, const Vocab& vocab);

struct TokenizedPair {
  std::vector<int> src;
  std::vector<int> tgt;
};

std::vector<TokenizedPair> tokenize_pairs(const std::vector<ParallelPair>& pairs,
                                          const Vocab& vocab, std::size_t max_len);

// Pads a list of pairs into one batch.
TokenizedBatch make_batch(const std::vector<TokenizedPair>& pairs, int pad_id);

// Endless batch iterator: seeded shuffle per epoch, sequential within the
// epoch. A trailing partial batch with fewer than two pairs is skipped.
class BatchStream {
 public:
  BatchStream(std::vector<TokenizedPair> pairs, std::size_t batch_size, int pad_id,
              std::uint64_t seed);
  TokenizedBatch next();
  std::size_t epoch() const { return epoch_; }

 private:
  void reshuffle();

  std::vector<TokenizedPair> pairs_;
  std::size_t batch_size_;
  int pad_id_;
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::size_t epoch_ = 0;
};

// Tokenizes (truncating to max_len, earliest tokens kept) and returns a
// stream. Throws InvalidArgument when batch_size < 2.
BatchStream build_batches(const std::vector<ParallelPair>& pairs, const Vocab& vocab,
                          std::size_t batch_size, std::size_t max_len, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Filtering

struct FilterConfig {
  double ratio_low = 0.6;
  double ratio_high = 1.7;
  double sim_threshold = 0.80;
  std::size_t per_corpus_cap = 1'000'000;
  std::size_t target_size = 2'000'000;
  std::uint64_t seed = 1234;

  void validate() const;
};

struct FilterStats {
  std::size_t input = 0;
  std::size_t duplicates = 0;
  std::size_t ratio_rejected = 0;
  std::size_t similarity_rejected = 0;
  std::size_t cap_removed = 0;
  std::size_t sampling_removed = 0;
  std::size_t output = 0;

  std::size_t rejected() const {
    return duplicates + ratio_rejected + similarity_rejected + cap_removed + sampling_removed;
  }
  std::string to_text() const;
  std::string to_csv() const;
};

struct FilterResult {
  std::vector<ParallelPair> pairs;
  FilterStats stats;
  std::vector<std::string> warnings;
};

using SimilarityFn = std::function<double(const ParallelPair&)>;

// Uses the pair's stored similarity; throws InvalidArgument when absent.
double stored_similarity(const ParallelPair& pair);

// Deterministic stand-in for a sentence embedder: cosine similarity of
// character-trigram count vectors of the two sides.
double trigram_similarity(const ParallelPair& pair);

// Stages, in order: exact (src, tgt) dedup after trimming; strict length
// ratio on whitespace tokens; similarity >= threshold; per-corpus cap
// keeping the earliest pairs; seeded uniform sampling down to target_size.
// Output keeps input order. Surviving pairs carry their similarity.
FilterResult filter_pipeline(const std::vector<ParallelPair>& pairs, const FilterConfig& cfg,
                             const SimilarityFn& similarity);

// ---------------------------------------------------------------------------
// Word alignments

struct AlignmentLink {
  std::size_t pair_index = 0;
  std::size_t src_word_index = 0;
  std::size_t tgt_word_index = 0;

  bool operator==(const AlignmentLink&) const = default;
};

struct AlignmentSet {
  std::vector<AlignmentLink> links;
  std::size_t dropped = 0;  // links removed by the one-to-one rule
};

// One Pharaoh line ("i-j i-j ...") for pair `pair_index`. Links whose source
// or target word participates more than once are dropped.
AlignmentSet parse_pharaoh_line(const std::string& line, std::size_t pair_index,
                                std::size_t line_number);
AlignmentSet load_alignments(const std::string& path);
void write_alignments(const std::string& path, const std::vector<AlignmentLink>& links,
                      std::size_t n_pairs);

// ---------------------------------------------------------------------------
// Synthetic cipher corpus

struct SyntheticSpec {
  std::size_t determiners = 4;
  std::size_t adjectives = 24;
  std::size_t nouns = 48;
  std::size_t verbs = 32;
  std::size_t adverbs = 12;
  std::size_t prepositions = 8;
  // Target side places adjectives after their noun.
  bool reorder = true;
};

struct SyntheticCorpus {
  std::vector<ParallelPair> pairs;
  std::vector<AlignmentLink> alignments;   // gold, one-to-one, every word
  std::map<std::string, std::string> cipher;  // source word -> target word
};

SyntheticCorpus generate_synthetic(std::uint64_t seed, std::size_t n_pairs,
                                   const SyntheticSpec& spec = {});

// Maps target text back to source text with the inverse cipher and the
// pair's gold alignment.
std::string decipher(const SyntheticCorpus& corpus, std::size_t pair_index);

}  // namespace sensia
