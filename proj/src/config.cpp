#include "sensia/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "sensia/errors.hpp"

namespace sensia {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  throw ConfigError(key, "expected a number, got '" + v + "'");
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  if (!v.empty() && std::all_of(v.begin(), v.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    try {
      return std::stoull(v);
    } catch (const std::exception&) {
    }
  }
  throw ConfigError(key, "expected a non-negative integer, got '" + v + "'");
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key, "expected true or false, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

LossWeights to_weights(const std::string& key, const std::string& v) {
  const auto parts = split_list(v);
  if (parts.size() != 3) throw ConfigError(key, "expected three comma-separated weights");
  return {to_double(key, parts[0]), to_double(key, parts[1]), to_double(key, parts[2])};
}

std::string weights_text(const LossWeights& w) {
  return fmt(w.sns) + "," + fmt(w.ctx) + "," + fmt(w.lm);
}

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + v[i];
  return out;
}

using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;
using Getter = std::function<std::string(const RunConfig&)>;

struct Field {
  Setter set;
  Getter get;
};

#define SIZE_FIELD(key, member)                                                          \
  {                                                                                      \
    key, {                                                                               \
      [](RunConfig& c, const std::string& k, const std::string& v) {                     \
        c.member = static_cast<std::size_t>(to_uint(k, v));                              \
      },                                                                                 \
          [](const RunConfig& c) { return std::to_string(c.member); }                    \
    }                                                                                    \
  }
#define SEED_FIELD(key, member)                                                               \
  {                                                                                           \
    key, {                                                                                    \
      [](RunConfig& c, const std::string& k, const std::string& v) { c.member = to_uint(k, v); }, \
          [](const RunConfig& c) { return std::to_string(c.member); }                         \
    }                                                                                         \
  }
#define REAL_FIELD(key, member)                                                                  \
  {                                                                                              \
    key, {                                                                                       \
      [](RunConfig& c, const std::string& k, const std::string& v) { c.member = to_double(k, v); }, \
          [](const RunConfig& c) { return fmt(c.member); }                                       \
    }                                                                                            \
  }
#define BOOL_FIELD(key, member)                                                                \
  {                                                                                            \
    key, {                                                                                     \
      [](RunConfig& c, const std::string& k, const std::string& v) { c.member = to_bool(k, v); }, \
          [](const RunConfig& c) { return std::string(c.member ? "true" : "false"); }          \
    }                                                                                          \
  }
#define PATH_FIELD(key, member)                                                                \
  {                                                                                            \
    key, {                                                                                     \
      [](RunConfig& c, const std::string&, const std::string& v) { c.member = v; },           \
          [](const RunConfig& c) { return c.member; }                                          \
    }                                                                                          \
  }

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = {
      SIZE_FIELD("model.vocab_size", model.vocab_size),
      SIZE_FIELD("model.d_model", model.d_model),
      SIZE_FIELD("model.n_layers", model.n_layers),
      SIZE_FIELD("model.n_heads", model.n_heads),
      SIZE_FIELD("model.n_senses", model.n_senses),
      SIZE_FIELD("model.max_positions", model.max_positions),
      BOOL_FIELD("model.tie_output", model.tie_output),

      REAL_FIELD("train.learning_rate", train.learning_rate),
      SIZE_FIELD("train.batch_size", train.batch_size),
      REAL_FIELD("train.warmup_ratio", train.warmup_ratio),
      REAL_FIELD("train.clip_norm", train.clip_norm),
      REAL_FIELD("train.label_smoothing", train.label_smoothing),
      SIZE_FIELD("train.total_steps", train.total_steps),
      SIZE_FIELD("train.eval_every", train.eval_every),
      SEED_FIELD("train.seed", train.seed),
      SIZE_FIELD("train.max_len", train.max_len),
      {"train.sense_pooling",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          if (v == "norm") c.train.sense_pooling = SensePooling::kNormPooled;
          else if (v == "contextual") c.train.sense_pooling = SensePooling::kContextual;
          else throw ConfigError(k, "expected norm or contextual");
        },
        [](const RunConfig& c) {
          return std::string(c.train.sense_pooling == SensePooling::kNormPooled ? "norm" : "contextual");
        }}},
      {"train.retrieval",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          if (v == "context") c.train.retrieval = RetrievalEmbedding::kContext;
          else if (v == "sense") c.train.retrieval = RetrievalEmbedding::kSense;
          else throw ConfigError(k, "expected context or sense");
        },
        [](const RunConfig& c) {
          return std::string(c.train.retrieval == RetrievalEmbedding::kContext ? "context" : "sense");
        }}},
      {"train.entropy",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          if (v == "norm") c.train.entropy = EntropySource::kNormPooled;
          else if (v == "contextual") c.train.entropy = EntropySource::kContextualMarginal;
          else throw ConfigError(k, "expected norm or contextual");
        },
        [](const RunConfig& c) {
          return std::string(c.train.entropy == EntropySource::kNormPooled ? "norm" : "contextual");
        }}},

      REAL_FIELD("schedule.a", schedule.a),
      REAL_FIELD("schedule.z", schedule.z),
      {"schedule.align_weights",
       {[](RunConfig& c, const std::string& k, const std::string& v) { c.schedule.align_weights = to_weights(k, v); },
        [](const RunConfig& c) { return weights_text(c.schedule.align_weights); }}},
      {"schedule.joint_weights",
       {[](RunConfig& c, const std::string& k, const std::string& v) { c.schedule.joint_weights = to_weights(k, v); },
        [](const RunConfig& c) { return weights_text(c.schedule.joint_weights); }}},
      {"schedule.polish_weights",
       {[](RunConfig& c, const std::string& k, const std::string& v) { c.schedule.polish_weights = to_weights(k, v); },
        [](const RunConfig& c) { return weights_text(c.schedule.polish_weights); }}},
      REAL_FIELD("schedule.tau_sns", schedule.tau_sns),
      REAL_FIELD("schedule.tau_ctx", schedule.tau_ctx),
      REAL_FIELD("schedule.tau_pool", schedule.tau_pool),
      BOOL_FIELD("schedule.temp_decay", schedule.temp_decay),

      REAL_FIELD("filter.ratio_low", filter.ratio_low),
      REAL_FIELD("filter.ratio_high", filter.ratio_high),
      REAL_FIELD("filter.sim_threshold", filter.sim_threshold),
      SIZE_FIELD("filter.per_corpus_cap", filter.per_corpus_cap),
      SIZE_FIELD("filter.target_size", filter.target_size),
      SEED_FIELD("filter.seed", filter.seed),
      {"filter.similarity",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          if (v != "stored" && v != "trigram") throw ConfigError(k, "expected stored or trigram");
          c.filter_similarity = v;
        },
        [](const RunConfig& c) { return c.filter_similarity; }}},

      SIZE_FIELD("synthetic.pairs", synthetic.pairs),
      SIZE_FIELD("synthetic.dev", synthetic.dev),
      SEED_FIELD("synthetic.seed", synthetic.seed),

      {"ablation.variants",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          c.ablation = split_list(v);
          try {
            (void)ablation_switches(c.ablation);
          } catch (const InvalidArgument& e) {
            throw ConfigError(k, e.what());
          }
        },
        [](const RunConfig& c) { return join(c.ablation); }}},
      {"mixture.mode",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          try {
            c.mixture_mode = MixtureMode::parse(v);
          } catch (const InvalidArgument& e) {
            throw ConfigError(k, e.what());
          }
        },
        [](const RunConfig& c) { return c.mixture_mode.name(); }}},
      {"score.scheme",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          if (v == "cond") c.score.scheme = ScoreScheme::kCond;
          else if (v == "combined") c.score.scheme = ScoreScheme::kCombined;
          else throw ConfigError(k, "expected cond or combined");
        },
        [](const RunConfig& c) { return c.score.scheme_name(); }}},
      REAL_FIELD("score.lambda", score.lambda),
      REAL_FIELD("score.alpha", score.alpha),

      SIZE_FIELD("analysis.bootstrap_iters", bootstrap_iters),
      SIZE_FIELD("analysis.procrustes_subsample", procrustes_subsample),
      SIZE_FIELD("analysis.min_word_frequency", min_word_frequency),

      PATH_FIELD("paths.train", train_path),
      PATH_FIELD("paths.dev", dev_path),
      PATH_FIELD("paths.vocab", vocab_path),
      PATH_FIELD("paths.stop_list", stop_list_path),
  };
  return table;
}

#undef SIZE_FIELD
#undef SEED_FIELD
#undef REAL_FIELD
#undef BOOL_FIELD
#undef PATH_FIELD

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  // Run metadata written into manifests; accepted so a manifest can be fed
  // back as a configuration file.
  if (key.rfind("manifest.", 0) == 0) return;
  const auto it = fields().find(key);
  if (it == fields().end()) throw ConfigError(key, "unknown configuration key");
  it->second.set(*this, key, value);
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& [key, field] : fields()) out += key + " = " + field.get(*this) + "\n";
  return out;
}

void RunConfig::validate() const {
  auto wrap = [](const char* key, const std::function<void()>& check) {
    try {
      check();
    } catch (const InvalidArgument& e) {
      throw ConfigError(key, e.what());
    }
  };
  wrap("model", [&] { model.validate(); });
  wrap("train", [&] { train.validate(); });
  wrap("schedule", [&] { schedule.validate(); });
  wrap("filter", [&] { filter.validate(); });
  wrap("score", [&] { score.validate(); });
  if (train.max_len > model.max_positions) {
    throw ConfigError("train.max_len", "exceeds model.max_positions");
  }
  for (const auto& [key, path] : {std::pair{"paths.train", &train_path}, {"paths.dev", &dev_path},
                                  {"paths.vocab", &vocab_path}, {"paths.stop_list", &stop_list_path}}) {
    if (!path->empty() && !std::filesystem::exists(*path)) {
      throw ConfigError(key, "file does not exist: " + *path);
    }
  }
}

RunConfig parse_config(const std::string& text, RunConfig base) {
  std::stringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(t, "line " + std::to_string(line_no) + " is not 'key = value'");
    }
    base.set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  // The schedule always spans the training run.
  base.schedule.total_steps = base.train.total_steps;
  if (!base.ablation.empty()) {
    try {
      base.schedule = ablation_switches(base.ablation, base.schedule);
    } catch (const InvalidArgument& e) {
      throw ConfigError("ablation.variants", e.what());
    }
  }
  return base;
}

RunConfig load_config(const std::string& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), base);
}

RunConfig desk_config() {
  RunConfig c;
  c.train.total_steps = 2000;
  c.train.batch_size = 32;
  c.schedule.total_steps = 2000;
  return c;
}

}  // namespace sensia
