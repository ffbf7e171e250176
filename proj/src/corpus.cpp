#include "sensia/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <unordered_set>

#include "sensia/errors.hpp"

namespace sensia {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    out.push_back(line.substr(start, tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return out;
}

}  // namespace

std::vector<std::string> split_whitespace(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> out;
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

std::vector<ParallelPair> read_pairs_tsv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open " + path);
  std::vector<ParallelPair> pairs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto cols = split_tabs(line);
    if (cols.size() < 2 || cols.size() > 4) {
      throw ParseError("expected 2 to 4 tab-separated columns", line_no);
    }
    ParallelPair p;
    p.src_text = trim(cols[0]);
    p.tgt_text = trim(cols[1]);
    if (cols.size() >= 3) p.source_corpus = trim(cols[2]);
    if (cols.size() == 4 && !trim(cols[3]).empty()) {
      try {
        p.similarity = std::stod(cols[3]);
      } catch (const std::exception&) {
        throw ParseError("bad similarity value '" + cols[3] + "'", line_no);
      }
    }
    pairs.push_back(std::move(p));
  }
  return pairs;
}

void write_pairs_tsv(const std::string& path, const std::vector<ParallelPair>& pairs) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InvalidArgument("cannot write " + path);
  for (const ParallelPair& p : pairs) {
    out << p.src_text << '\t' << p.tgt_text;
    if (!p.source_corpus.empty() || p.similarity) out << '\t' << p.source_corpus;
    if (p.similarity) out << '\t' << std::setprecision(17) << *p.similarity;
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Vocab

void Vocab::add(const std::string& token) {
  if (index_.count(token)) return;
  index_.emplace(token, static_cast<int>(tokens_.size()));
  tokens_.push_back(token);
}

Vocab Vocab::build(const std::vector<std::string>& tokens) {
  Vocab v;
  v.add(kPad);
  v.add(kUnk);
  v.add(kEos);
  v.pad_ = 0;
  v.unk_ = 1;
  v.eos_ = 2;
  for (const std::string& t : tokens) v.add(t);
  return v;
}

Vocab Vocab::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open vocab " + path);
  std::string header;
  if (!std::getline(in, header) || !header.starts_with("#vocab")) {
    throw ParseError("vocab file must start with a #vocab header", 1);
  }
  Vocab v;
  int specials[3] = {-1, -1, -1};
  for (const std::string& item : split_whitespace(header.substr(6))) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw ParseError("bad vocab header item " + item, 1);
    const std::string key = item.substr(0, eq);
    const int value = std::stoi(item.substr(eq + 1));
    if (key == "pad") specials[0] = value;
    else if (key == "unk") specials[1] = value;
    else if (key == "eos") specials[2] = value;
    else throw ParseError("unknown vocab header key " + key, 1);
  }
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (v.index_.count(line)) throw ParseError("duplicate vocab token " + line, line_no);
    v.add(line);
  }
  const int n = static_cast<int>(v.tokens_.size());
  for (int s : specials) {
    if (s < 0 || s >= n) throw ParseError("vocab special id missing or out of range", 1);
  }
  if (specials[0] == specials[1] || specials[0] == specials[2] || specials[1] == specials[2]) {
    throw ParseError("vocab special ids must be distinct", 1);
  }
  v.pad_ = specials[0];
  v.unk_ = specials[1];
  v.eos_ = specials[2];
  return v;
}

void Vocab::save(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InvalidArgument("cannot write vocab " + path);
  out << "#vocab pad=" << pad_ << " unk=" << unk_ << " eos=" << eos_ << "\n";
  for (const std::string& t : tokens_) out << t << "\n";
}

int Vocab::id(const std::string& token) const {
  const auto it = index_.find(token);
  return it == index_.end() ? unk_ : it->second;
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw InvalidToken("token id " + std::to_string(id) + " outside vocabulary");
  }
  return tokens_[id];
}

Vocab build_vocab(const std::vector<ParallelPair>& pairs) {
  std::set<std::string> words;
  for (const ParallelPair& p : pairs) {
    for (const auto& w : split_whitespace(p.src_text)) words.insert(w);
    for (const auto& w : split_whitespace(p.tgt_text)) words.insert(w);
  }
  return Vocab::build(std::vector<std::string>(words.begin(), words.end()));
}

std::vector<int> tokenize(const std::string& text, const Vocab& vocab) {
  std::vector<int> ids;
  for (const auto& w : split_whitespace(text)) ids.push_back(vocab.id(w));
  ids.push_back(vocab.eos_id());
  return ids;
}

std::string detokenize(std::span<const int> ids, const Vocab& vocab) {
  std::string out;
  for (int id : ids) {
    if (id == vocab.pad_id() || id == vocab.eos_id()) continue;
    if (!out.empty()) out += ' ';
    out += vocab.token(id);
  }
  return out;
}

std::vector<TokenizedPair> tokenize_pairs(const std::vector<ParallelPair>& pairs,
                                          const Vocab& vocab, std::size_t max_len) {
  if (max_len == 0) throw InvalidArgument("max_len must be positive");
  std::vector<TokenizedPair> out;
  out.reserve(pairs.size());
  for (const ParallelPair& p : pairs) {
    TokenizedPair t{tokenize(p.src_text, vocab), tokenize(p.tgt_text, vocab)};
    if (t.src.size() > max_len) t.src.resize(max_len);
    if (t.tgt.size() > max_len) t.tgt.resize(max_len);
    out.push_back(std::move(t));
  }
  return out;
}

TokenizedBatch make_batch(const std::vector<TokenizedPair>& pairs, int pad_id) {
  std::vector<std::vector<int>> src, tgt;
  src.reserve(pairs.size());
  tgt.reserve(pairs.size());
  for (const TokenizedPair& p : pairs) {
    src.push_back(p.src);
    tgt.push_back(p.tgt);
  }
  return {pad_sequences(src, pad_id), pad_sequences(tgt, pad_id)};
}

BatchStream::BatchStream(std::vector<TokenizedPair> pairs, std::size_t batch_size,
                         int pad_id, std::uint64_t seed)
    : pairs_(std::move(pairs)),
      batch_size_(batch_size),
      pad_id_(pad_id),
      rng_(seed, Stream::kBatchOrder) {
  if (batch_size_ < 2) throw InvalidArgument("batch_size must be >= 2 for in-batch negatives");
  if (pairs_.size() < 2) throw InvalidArgument("need at least two pairs to form a batch");
  order_.resize(pairs_.size());
  reshuffle();
}

void BatchStream::reshuffle() {
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
  rng_.shuffle(order_);
  cursor_ = 0;
}

TokenizedBatch BatchStream::next() {
  if (order_.size() - cursor_ < 2) {
    ++epoch_;
    reshuffle();
  }
  const std::size_t n = std::min(batch_size_, order_.size() - cursor_);
  std::vector<TokenizedPair> chunk;
  chunk.reserve(n);
  for (std::size_t i = 0; i < n; ++i) chunk.push_back(pairs_[order_[cursor_ + i]]);
  cursor_ += n;
  return make_batch(chunk, pad_id_);
}

BatchStream build_batches(const std::vector<ParallelPair>& pairs, const Vocab& vocab,
                          std::size_t batch_size, std::size_t max_len, std::uint64_t seed) {
  if (batch_size < 2) throw InvalidArgument("batch_size must be >= 2 for in-batch negatives");
  return BatchStream(tokenize_pairs(pairs, vocab, max_len), batch_size, vocab.pad_id(), seed);
}

// ---------------------------------------------------------------------------
// Filtering

void FilterConfig::validate() const {
  if (!(ratio_low > 0.0 && ratio_low < ratio_high)) {
    throw InvalidArgument("filter ratio bounds must satisfy 0 < ratio_low < ratio_high");
  }
}

std::string FilterStats::to_text() const {
  std::ostringstream out;
  out << "input               " << input << "\n"
      << "duplicates          " << duplicates << "\n"
      << "ratio_rejected      " << ratio_rejected << "\n"
      << "similarity_rejected " << similarity_rejected << "\n"
      << "cap_removed         " << cap_removed << "\n"
      << "sampling_removed    " << sampling_removed << "\n"
      << "output              " << output << "\n";
  return out.str();
}

std::string FilterStats::to_csv() const {
  std::ostringstream out;
  out << "stage,count\n"
      << "input," << input << "\n"
      << "duplicates," << duplicates << "\n"
      << "ratio_rejected," << ratio_rejected << "\n"
      << "similarity_rejected," << similarity_rejected << "\n"
      << "cap_removed," << cap_removed << "\n"
      << "sampling_removed," << sampling_removed << "\n"
      << "output," << output << "\n";
  return out.str();
}

double stored_similarity(const ParallelPair& pair) {
  if (!pair.similarity) throw InvalidArgument("pair has no stored similarity: " + pair.src_text);
  return *pair.similarity;
}

double trigram_similarity(const ParallelPair& pair) {
  auto grams = [](const std::string& text) {
    std::map<std::string, double> counts;
    const std::string padded = "  " + text + "  ";
    for (std::size_t i = 0; i + 3 <= padded.size(); ++i) counts[padded.substr(i, 3)] += 1.0;
    return counts;
  };
  const auto a = grams(pair.src_text);
  const auto b = grams(pair.tgt_text);
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (const auto& [g, c] : a) {
    na += c * c;
    const auto it = b.find(g);
    if (it != b.end()) dot += c * it->second;
  }
  for (const auto& [g, c] : b) nb += c * c;
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / std::sqrt(na * nb);
}

FilterResult filter_pipeline(const std::vector<ParallelPair>& pairs, const FilterConfig& cfg,
                             const SimilarityFn& similarity) {
  cfg.validate();
  FilterResult result;
  FilterStats& stats = result.stats;
  stats.input = pairs.size();

  std::vector<ParallelPair> current;
  std::set<std::pair<std::string, std::string>> seen;
  for (const ParallelPair& p : pairs) {
    ParallelPair t = p;
    t.src_text = trim(p.src_text);
    t.tgt_text = trim(p.tgt_text);
    if (!seen.emplace(t.src_text, t.tgt_text).second) {
      ++stats.duplicates;
      continue;
    }
    current.push_back(std::move(t));
  }

  std::vector<ParallelPair> next;
  for (ParallelPair& p : current) {
    const double src_len = static_cast<double>(split_whitespace(p.src_text).size());
    const double tgt_len = static_cast<double>(split_whitespace(p.tgt_text).size());
    const double ratio = tgt_len > 0.0 ? src_len / tgt_len : 0.0;
    if (tgt_len > 0.0 && src_len > 0.0 && cfg.ratio_low < ratio && ratio < cfg.ratio_high) {
      next.push_back(std::move(p));
    } else {
      ++stats.ratio_rejected;
    }
  }
  current.swap(next);
  next.clear();

  for (ParallelPair& p : current) {
    const double s = similarity(p);
    if (s >= cfg.sim_threshold) {
      p.similarity = s;
      next.push_back(std::move(p));
    } else {
      ++stats.similarity_rejected;
    }
  }
  current.swap(next);
  next.clear();

  std::map<std::string, std::size_t> per_corpus;
  for (ParallelPair& p : current) {
    if (per_corpus[p.source_corpus]++ < cfg.per_corpus_cap) {
      next.push_back(std::move(p));
    } else {
      ++stats.cap_removed;
    }
  }
  current.swap(next);
  next.clear();

  if (current.size() > cfg.target_size) {
    Rng rng(cfg.seed, Stream::kFilterSampling);
    std::vector<std::size_t> idx(current.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    for (std::size_t i = 0; i < cfg.target_size; ++i) {
      std::swap(idx[i], idx[i + rng.below(idx.size() - i)]);
    }
    idx.resize(cfg.target_size);
    std::sort(idx.begin(), idx.end());
    for (std::size_t i : idx) next.push_back(std::move(current[i]));
    stats.sampling_removed = current.size() - next.size();
    current.swap(next);
  }

  stats.output = current.size();
  if (current.empty()) result.warnings.push_back("filter pipeline produced no pairs");
  result.pairs = std::move(current);
  return result;
}

// ---------------------------------------------------------------------------
// Alignments

AlignmentSet parse_pharaoh_line(const std::string& line, std::size_t pair_index,
                                std::size_t line_number) {
  std::vector<AlignmentLink> raw;
  for (const std::string& item : split_whitespace(line)) {
    const auto dash = item.find('-');
    auto is_digits = [](const std::string& s) {
      return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); });
    };
    if (dash == std::string::npos || !is_digits(item.substr(0, dash)) ||
        !is_digits(item.substr(dash + 1))) {
      throw ParseError("malformed alignment item '" + item + "'", line_number);
    }
    raw.push_back({pair_index, std::stoul(item.substr(0, dash)), std::stoul(item.substr(dash + 1))});
  }
  std::map<std::size_t, int> src_count, tgt_count;
  for (const auto& l : raw) {
    ++src_count[l.src_word_index];
    ++tgt_count[l.tgt_word_index];
  }
  AlignmentSet out;
  for (const auto& l : raw) {
    if (src_count[l.src_word_index] == 1 && tgt_count[l.tgt_word_index] == 1) {
      out.links.push_back(l);
    } else {
      ++out.dropped;
    }
  }
  return out;
}

AlignmentSet load_alignments(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open alignments " + path);
  AlignmentSet out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    AlignmentSet one = parse_pharaoh_line(line, line_no - 1, line_no);
    out.links.insert(out.links.end(), one.links.begin(), one.links.end());
    out.dropped += one.dropped;
  }
  return out;
}

void write_alignments(const std::string& path, const std::vector<AlignmentLink>& links,
                      std::size_t n_pairs) {
  std::vector<std::string> lines(n_pairs);
  for (const AlignmentLink& l : links) {
    if (l.pair_index >= n_pairs) throw InvalidArgument("alignment pair index out of range");
    std::string& s = lines[l.pair_index];
    if (!s.empty()) s += ' ';
    s += std::to_string(l.src_word_index) + "-" + std::to_string(l.tgt_word_index);
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InvalidArgument("cannot write " + path);
  for (const auto& s : lines) out << s << "\n";
}

// ---------------------------------------------------------------------------
// Synthetic corpus

namespace {

enum class Cat { kDet, kAdj, kNoun, kVerb, kAdv, kPrep };

std::vector<std::string> make_words(Rng& rng, std::size_t n, const std::string& consonants,
                                    std::unordered_set<std::string>& used) {
  static const std::string vowels = "aeiou";
  std::vector<std::string> out;
  while (out.size() < n) {
    std::string w;
    const std::size_t syllables = 2 + rng.below(2);
    for (std::size_t s = 0; s < syllables; ++s) {
      w += consonants[rng.below(consonants.size())];
      w += vowels[rng.below(vowels.size())];
    }
    if (used.insert(w).second) out.push_back(w);
  }
  return out;
}

}  // namespace

SyntheticCorpus generate_synthetic(std::uint64_t seed, std::size_t n_pairs,
                                   const SyntheticSpec& spec) {
  if (n_pairs < 1) throw InvalidArgument("n_pairs must be >= 1");
  Rng rng(seed, Stream::kSynthetic);
  const std::vector<std::pair<Cat, std::size_t>> sizes = {
      {Cat::kDet, spec.determiners}, {Cat::kAdj, spec.adjectives}, {Cat::kNoun, spec.nouns},
      {Cat::kVerb, spec.verbs},      {Cat::kAdv, spec.adverbs},    {Cat::kPrep, spec.prepositions}};
  std::map<Cat, std::vector<std::string>> src_words, tgt_words;
  std::unordered_set<std::string> used;
  SyntheticCorpus corpus;
  for (const auto& [cat, n] : sizes) {
    if (n == 0) throw InvalidArgument("every synthetic word category needs at least one word");
    src_words[cat] = make_words(rng, n, "bdklmnprst", used);
    std::vector<std::string> tgt = make_words(rng, n, "fghjvwzc", used);
    rng.shuffle(tgt);
    tgt_words[cat] = tgt;
    for (std::size_t i = 0; i < n; ++i) corpus.cipher[src_words[cat][i]] = tgt[i];
  }

  auto pick = [&](Cat c) { return src_words[c][rng.below(src_words[c].size())]; };

  std::unordered_set<std::string> seen;
  std::size_t attempts = 0;
  while (corpus.pairs.size() < n_pairs) {
    if (++attempts > 1000 * n_pairs + 1000) {
      throw InvalidArgument("synthetic grammar cannot produce that many unique sentences");
    }
    // Each entry: word and whether it is an adjective directly before a noun.
    std::vector<std::pair<std::string, Cat>> words;
    auto noun_phrase = [&](bool allow_pp) {
      words.push_back({pick(Cat::kDet), Cat::kDet});
      if (rng.uniform() < 0.5) words.push_back({pick(Cat::kAdj), Cat::kAdj});
      words.push_back({pick(Cat::kNoun), Cat::kNoun});
      if (allow_pp && rng.uniform() < 0.3) {
        words.push_back({pick(Cat::kPrep), Cat::kPrep});
        words.push_back({pick(Cat::kDet), Cat::kDet});
        if (rng.uniform() < 0.3) words.push_back({pick(Cat::kAdj), Cat::kAdj});
        words.push_back({pick(Cat::kNoun), Cat::kNoun});
      }
    };
    noun_phrase(true);
    words.push_back({pick(Cat::kVerb), Cat::kVerb});
    noun_phrase(true);
    if (rng.uniform() < 0.4) words.push_back({pick(Cat::kAdv), Cat::kAdv});

    std::string src;
    for (const auto& [w, c] : words) src += (src.empty() ? "" : " ") + w;
    if (!seen.insert(src).second) continue;

    // Target position of each source word.
    const std::size_t n = words.size();
    std::vector<std::size_t> target_pos(n);
    for (std::size_t i = 0; i < n; ++i) target_pos[i] = i;
    if (spec.reorder) {
      for (std::size_t i = 0; i + 1 < n; ++i) {
        if (words[i].second == Cat::kAdj && words[i + 1].second == Cat::kNoun) {
          std::swap(target_pos[i], target_pos[i + 1]);
          ++i;
        }
      }
    }
    std::vector<std::string> tgt(n);
    for (std::size_t i = 0; i < n; ++i) tgt[target_pos[i]] = corpus.cipher.at(words[i].first);
    std::string tgt_text;
    for (const auto& w : tgt) tgt_text += (tgt_text.empty() ? "" : " ") + w;

    const std::size_t index = corpus.pairs.size();
    corpus.pairs.push_back({src, tgt_text, std::nullopt, "synthetic"});
    for (std::size_t i = 0; i < n; ++i) corpus.alignments.push_back({index, i, target_pos[i]});
  }
  return corpus;
}

std::string decipher(const SyntheticCorpus& corpus, std::size_t pair_index) {
  std::map<std::string, std::string> inverse;
  for (const auto& [s, t] : corpus.cipher) inverse[t] = s;
  const auto tgt = split_whitespace(corpus.pairs.at(pair_index).tgt_text);
  std::vector<std::string> src(tgt.size());
  for (const AlignmentLink& l : corpus.alignments) {
    if (l.pair_index != pair_index) continue;
    src.at(l.src_word_index) = inverse.at(tgt.at(l.tgt_word_index));
  }
  std::string out;
  for (const auto& w : src) out += (out.empty() ? "" : " ") + w;
  return out;
}

}  // namespace sensia
